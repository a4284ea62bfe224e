#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "oracles.hpp"
#include "pulse/beat_analysis.hpp"
#include "pulse/spectral_filtering.hpp"

using namespace pulse;

namespace {

IbiSeries filtered(std::vector<double> ms) { return filter_ibis(ibis_from_durations(ms)); }

HrWindowing infinite() {
  HrWindowing w;
  w.window_s = kInfiniteWindow;
  return w;
}

}  // namespace

TEST(PeakIndices, HandTrace) {
  const std::vector<double> x{0, 1, 0, 0.5, 0, 2, 0};
  EXPECT_EQ(peak_indices(x, 0.8), (std::vector<std::size_t>{1, 5}));
}

TEST(PeakIndices, ConstantHasNoPeaks) {
  EXPECT_TRUE(peak_indices(std::vector<double>(100, 3.0), 0.3).empty());
  EXPECT_THROW(peak_indices(std::vector<double>{1, 2}, 0.0), Error);
}

TEST(DetectPeaks, SineCrests) {
  std::vector<double> x;
  for (int i = 0; i < 300; ++i) x.push_back(std::sin(2.0 * std::numbers::pi * i / 30.0));
  const UniformSignal s{0.0, 30.0, z_normalize(x)};
  const auto beats = detect_peaks(s, 0.3).beats;
  ASSERT_EQ(beats.size(), 10u);
  for (std::size_t k = 0; k < beats.size(); ++k) EXPECT_NEAR(beats[k], 0.25 + k, 1.0 / 30.0);
  const auto coarse = detect_peaks(s, 0.3, false).beats;
  for (std::size_t k = 0; k < coarse.size(); ++k) EXPECT_NEAR(coarse[k], 0.25 + k, 1.0 / 30.0);
}

TEST(DetectPeaks, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> delta(0.1, 3.0);
  std::uniform_int_distribution<std::size_t> len(1, 300);
  for (int rep = 0; rep < 1000; ++rep) {
    const auto x = oracle::random_signal(rng, len(rng));
    const double d = delta(rng);
    ASSERT_EQ(peak_indices(x, d), oracle::brute_peaks(x, d)) << "rep " << rep;
  }
}

TEST(DetectPeaks, NegationGivesTroughs) {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 200; ++rep) {
    const auto x = oracle::random_signal(rng, 200);
    std::vector<double> neg(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
    for (std::size_t i : peak_indices(neg, 1.0)) {
      // each reported index is a local minimum of x over its neighbours
      if (i > 0) EXPECT_LE(x[i], x[i - 1]);
      if (i + 1 < x.size()) EXPECT_LE(x[i], x[i + 1]);
    }
  }
}

TEST(DetectPeaks, TimeShiftEquivariance) {
  std::vector<double> x;
  for (int i = 0; i < 600; ++i) x.push_back(std::sin(2.0 * std::numbers::pi * 1.1 * i / 30.0) + 0.2 * std::sin(i * 0.7));
  const std::size_t k = 7;
  std::vector<double> shifted(k, x.front());
  shifted.insert(shifted.end(), x.begin(), x.end());
  const auto a = detect_peaks({0.0, 30.0, x}, 0.3).beats;
  const auto b = detect_peaks({0.0, 30.0, shifted}, 0.3).beats;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i] - a[i], k / 30.0, 1e-12);
  const auto ia = filter_ibis(ibis_from_beats(a));
  const auto ib = filter_ibis(ibis_from_beats(b));
  const auto ma = ia.survivor_ms(), mb = ib.survivor_ms();
  ASSERT_EQ(ma.size(), mb.size());
  for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_NEAR(ma[i], mb[i], 1e-9);
}

TEST(ParabolicOffset, RecoversVertex) {
  // y = -(x - 2.3)^2 sampled at integers
  std::vector<double> y;
  for (int i = 0; i < 5; ++i) y.push_back(-(i - 2.3) * (i - 2.3));
  EXPECT_NEAR(parabolic_offset(y, 2), 0.3, 1e-12);
  EXPECT_EQ(parabolic_offset(y, 0), 0.0);
  EXPECT_EQ(parabolic_offset(std::vector<double>{1, 1, 1}, 1), 0.0);
}

TEST(IbisFromBeats, Examples) {
  EXPECT_EQ(ibis_from_beats(std::vector<double>{1.0, 2.0, 3.0}).survivor_ms(), (std::vector<double>{1000, 1000}));
  const auto one = ibis_from_beats(std::vector<double>{0.0, 0.8});
  ASSERT_EQ(one.intervals.size(), 1u);
  EXPECT_NEAR(one.intervals[0].ms, 800.0, 1e-9);
  EXPECT_TRUE(ibis_from_beats(std::vector<double>{4.0}).intervals.empty());
}

TEST(FilterIbis, RangeRejection) {
  const auto f = filtered({800, 810, 5000});
  EXPECT_EQ(f.survivor_ms(), (std::vector<double>{800, 810}));
  EXPECT_EQ(f.intervals[2].flag, IbiFlag::range_rejected);
  const auto low = filtered({200, 800, 810});
  EXPECT_EQ(low.intervals[0].flag, IbiFlag::range_rejected);
}

TEST(FilterIbis, ConstantUnchanged) {
  const auto f = filtered(std::vector<double>(20, 1000));
  EXPECT_EQ(f.survivor_ms().size(), 20u);
}

TEST(FilterIbis, ThreeSigmaRejection) {
  std::vector<double> ms(30, 1000.0);
  ms.push_back(1900.0);
  // mean = 1029.03, sigma = 159.0: |1900 - mean| = 871 > 477.
  const auto f = filtered(ms);
  EXPECT_EQ(f.intervals.back().flag, IbiFlag::sigma3_rejected);
  EXPECT_EQ(f.survivor_ms().size(), 30u);
}

TEST(FilterIbis, IdempotentOnRandomSeries) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(900, 120);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> ms;
    for (int i = 0; i < 60; ++i) ms.push_back(u(rng) < 0.05 ? 1800 + 100 * u(rng) : n(rng));
    const auto once = filtered(ms);
    const auto twice = filter_ibis(ibis_from_durations(once.survivor_ms()));
    EXPECT_EQ(twice.survivor_ms(), once.survivor_ms());
  }
}

TEST(HeartRate, Examples) {
  EXPECT_DOUBLE_EQ(heart_rate(filtered(std::vector<double>(10, 1000)), infinite()).entries.at(0).bpm, 60.0);
  EXPECT_DOUBLE_EQ(heart_rate(filtered({750, 750, 750}), infinite()).entries.at(0).bpm, 80.0);
  EXPECT_NEAR(heart_rate(filtered({800, 1000}), infinite()).entries.at(0).bpm, 60000.0 / 900.0, 1e-9);
}

TEST(HeartRate, PeriodicTrainExact) {
  for (double period : {0.5, 0.8, 1.25}) {
    std::vector<double> beats;
    for (int i = 0; i < 200; ++i) beats.push_back(3.0 + i * period);
    const auto hr = heart_rate(filter_ibis(ibis_from_beats(beats)), infinite());
    EXPECT_NEAR(hr.entries.at(0).bpm, 60.0 / period, 1e-9);
  }
}

TEST(HeartRate, SlidingWindows) {
  std::vector<double> beats;
  for (int i = 0; i <= 60; ++i) beats.push_back(i * 1.0);
  HrWindowing w;
  w.window_s = 16;
  w.stride_s = 1;
  const auto hr = heart_rate(filter_ibis(ibis_from_beats(beats)), w);
  ASSERT_EQ(hr.entries.size(), 45u);
  EXPECT_DOUBLE_EQ(hr.entries.front().window_center, 8.0);
  for (const auto& e : hr.entries) {
    EXPECT_DOUBLE_EQ(e.bpm, 60.0);
    EXPECT_EQ(e.n_ibis, 16u);
  }
}

TEST(HeartRate, IbiAssignedByStartingBeat) {
  // Beats 0, 1.2, 2.0: the 1200 ms interval starts in [0, 1), the 800 ms one in [1, 2).
  HrWindowing w;
  w.window_s = 1.0;
  w.stride_s = 1.0;
  const auto hr = heart_rate(filter_ibis(ibis_from_beats(std::vector<double>{0.0, 1.2, 2.0})), w);
  ASSERT_EQ(hr.entries.size(), 2u);
  EXPECT_NEAR(hr.entries[0].bpm, 50.0, 1e-9);
  EXPECT_NEAR(hr.entries[1].bpm, 75.0, 1e-9);
  EXPECT_EQ(hr.entries[1].n_ibis, 1u);
}
