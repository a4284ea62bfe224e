#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "oracles.hpp"
#include "pulse/pulse_extraction.hpp"

using namespace pulse;

namespace {

constexpr double kRate = 30.0;
constexpr std::size_t kN = 256;

struct Channels {
  std::vector<double> r, g, b;
  RgbWindow window() const { return {r, g, b, kRate}; }
};

Channels skin_pulse(double amp = 0.005) {
  Channels c;
  for (std::size_t i = 0; i < kN; ++i) {
    const double p = std::sin(2.0 * std::numbers::pi * 1.2 * i / kRate);
    c.r.push_back(120.0 * (1 + amp * 0.33 * p));
    c.g.push_back(100.0 * (1 + amp * 0.77 * p));
    c.b.push_back(90.0 * (1 + amp * 0.53 * p));
  }
  return c;
}

}  // namespace

TEST(SpatialAverage, Examples) {
  const std::vector<Rgb> two{{1, 2, 3}, {3, 4, 5}};
  EXPECT_EQ(spatial_average(two), (Rgb{2, 3, 4}));
  const std::vector<Rgb> one{{7, 7, 7}};
  EXPECT_EQ(spatial_average(one), (Rgb{7, 7, 7}));
  EXPECT_THROW(spatial_average(std::vector<Rgb>{}), Error);
}

TEST(SpatialAverage, MatchesLongDoubleSum) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0, 255);
  std::vector<Rgb> px(10000);
  long double sr = 0, sg = 0, sb = 0;
  for (auto& p : px) {
    p = {u(rng), u(rng), u(rng)};
  }
  for (auto it = px.rbegin(); it != px.rend(); ++it) {
    sr += it->r;
    sg += it->g;
    sb += it->b;
  }
  const auto m = spatial_average(px);
  EXPECT_NEAR(m.r, static_cast<double>(sr / 10000), 1e-9 * m.r);
  EXPECT_NEAR(m.g, static_cast<double>(sg / 10000), 1e-9 * m.g);
  EXPECT_NEAR(m.b, static_cast<double>(sb / 10000), 1e-9 * m.b);
}

TEST(SpatialAverage, EmptyFramesRepeatPrevious) {
  const std::vector<std::vector<Rgb>> frames{{}, {{1, 1, 1}}, {}, {{3, 3, 3}, {5, 5, 5}}};
  EXPECT_THROW(roi_means_carry_forward(frames), Error);
  const std::vector<std::vector<Rgb>> ok{{{1, 2, 3}}, {}, {{3, 3, 3}, {5, 5, 5}}};
  const auto m = roi_means_carry_forward(ok);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m[1], (Rgb{1, 2, 3}));
  EXPECT_EQ(m[2], (Rgb{4, 4, 4}));
}

TEST(PosProject, IdenticalChannelsVanish) {
  Channels c;
  for (std::size_t i = 0; i < kN; ++i) {
    const double v = 100 + 5 * std::sin(i * 0.3);
    c.r.push_back(v);
    c.g.push_back(v);
    c.b.push_back(v);
  }
  for (double h : pos_project(c.window())) EXPECT_EQ(h, 0.0);
}

TEST(PosProject, ConstantChannelsVanish) {
  Channels c{std::vector<double>(kN, 120), std::vector<double>(kN, 100), std::vector<double>(kN, 90)};
  for (double h : pos_project(c.window())) EXPECT_NEAR(h, 0.0, 1e-15);
}

TEST(PosProject, GreenOnlyPulse) {
  Channels c{std::vector<double>(kN, 1.0), {}, std::vector<double>(kN, 1.0)};
  std::vector<double> ref;
  for (std::size_t i = 0; i < kN; ++i) {
    ref.push_back(std::sin(2.0 * std::numbers::pi * 1.2 * i / kRate));
    c.g.push_back(1.0 + 0.01 * ref.back());
  }
  const auto h = pos_project(c.window());
  EXPECT_EQ(h.size(), kN);
  EXPECT_GE(oracle::correlation(h, ref), 0.999);
}

TEST(PosProject, CommonScaleInvariance) {
  const auto base = skin_pulse();
  auto scaled = base;
  for (auto* ch : {&scaled.r, &scaled.g, &scaled.b})
    for (double& v : *ch) v *= 3.7;
  const auto a = pos_project(base.window());
  const auto b = pos_project(scaled.window());
  for (std::size_t i = 0; i < kN; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(PosProject, IntensityModulationIsSecondOrder) {
  const auto base = skin_pulse();
  auto moved = base;
  for (std::size_t i = 0; i < kN; ++i) {
    const double m = 1.0 + 0.01 * std::sin(2.0 * std::numbers::pi * 0.4 * i / kRate + 0.3);
    moved.r[i] *= m;
    moved.g[i] *= m;
    moved.b[i] *= m;
  }
  const auto a = pos_project(base.window());
  const auto b = pos_project(moved.window());
  for (std::size_t i = 0; i < kN; ++i) EXPECT_LE(std::abs(a[i] - b[i]), 1e-4);
}

TEST(PosProject, EvenInputEvenOutput) {
  auto c = skin_pulse();
  for (auto* ch : {&c.r, &c.g, &c.b})
    for (std::size_t i = 0; i < kN / 2; ++i) (*ch)[kN - 1 - i] = (*ch)[i];
  const auto h = pos_project(c.window());
  for (std::size_t i = 0; i < kN / 2; ++i) EXPECT_EQ(h[i], h[kN - 1 - i]);
}

TEST(PosProject, Errors) {
  auto c = skin_pulse();
  c.b.pop_back();
  EXPECT_THROW(pos_project(c.window()), Error);
  Channels short_c{std::vector<double>(100, 1), std::vector<double>(100, 1), std::vector<double>(100, 1)};
  EXPECT_THROW(pos_project(short_c.window()), Error);
  Channels zero{std::vector<double>(kN, 0), std::vector<double>(kN, 1), std::vector<double>(kN, 1)};
  try {
    pos_project(zero.window());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
}
