#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "oracles.hpp"
#include "pulse/hrv_metrics.hpp"

using namespace pulse;

namespace {

IbiSeries series(const std::vector<double>& ms) { return filter_ibis(ibis_from_durations(ms)); }

std::vector<double> modulated_ibis(double freq, double amp, double base = 1000.0, double duration = 300.0) {
  std::vector<double> ms;
  double t = 0.0;
  while (t < duration) {
    ms.push_back(base + amp * std::sin(2.0 * std::numbers::pi * freq * t));
    t += ms.back() / 1000.0;
  }
  return ms;
}

std::vector<double> random_ibis(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(850, 60);
  std::vector<double> ms(n);
  for (auto& v : ms) v = g(rng);
  return ms;
}

}  // namespace

TEST(Rmssd, Examples) {
  EXPECT_DOUBLE_EQ(rmssd(series({1000, 1000, 1000, 1000})), 0.0);
  EXPECT_NEAR(rmssd(series({1000, 1100, 1000, 1100})), 100.0, 1e-9);
  EXPECT_NEAR(rmssd(series({900, 1100, 900, 1100})), 200.0, 1e-9);
  EXPECT_THROW(rmssd(series({1000, 1000})), Error);
}

TEST(Rmssd, MatchesMaskOracle) {
  std::mt19937_64 rng(30);
  for (int rep = 0; rep < 200; ++rep) {
    const auto ms = random_ibis(rng, 30);
    const auto s = ibis_from_durations(ms);  // unfiltered: the oracle sees the same set
    EXPECT_NEAR(rmssd(std::span<const Ibi>(s.intervals)), oracle::rmssd_mask(ms), 1e-9);
  }
}

TEST(Rmssd, BrokenPairsAreSkipped) {
  // 1300 falls outside 1 sigma; 1000 and 1020 around it are not neighbours.
  const std::vector<double> ms{1000, 1010, 1300, 1020, 1000, 1010};
  const auto s = ibis_from_durations(ms);
  EXPECT_NEAR(rmssd(std::span<const Ibi>(s.intervals)), oracle::rmssd_mask(ms), 1e-12);
  EXPECT_NEAR(oracle::rmssd_mask(ms), std::sqrt((100.0 + 400.0 + 100.0) / 3.0), 1e-12);
}

TEST(Sdnn, Examples) {
  EXPECT_DOUBLE_EQ(sdnn(series({900, 1100})), 100.0);
  EXPECT_DOUBLE_EQ(sdnn(series({900, 1100, 900, 1100})), 100.0);
  EXPECT_DOUBLE_EQ(sdnn(series(std::vector<double>(10, 812.5))), 0.0);
}

TEST(Sdnn, MatchesTwoPassOracle) {
  std::mt19937_64 rng(50);
  for (int rep = 0; rep < 100; ++rep) {
    const auto ms = random_ibis(rng, 50);
    const auto s = series(ms);
    const double want = oracle::two_pass_pstdev(s.survivor_ms());
    EXPECT_NEAR(sdnn(s), want, 1e-9 * want);
  }
}

TEST(RmssdSdnn, TranslationAndScale) {
  std::mt19937_64 rng(60);
  for (int rep = 0; rep < 50; ++rep) {
    const auto ms = random_ibis(rng, 40);
    auto shifted = ms, scaled = ms;
    for (auto& v : shifted) v += 37.0;
    for (auto& v : scaled) v *= 1.3;
    const auto a = ibis_from_durations(ms), b = ibis_from_durations(shifted), c = ibis_from_durations(scaled);
    auto r = [](const IbiSeries& s) { return rmssd(std::span<const Ibi>(s.intervals)); };
    EXPECT_NEAR(r(b), r(a), 1e-9);
    EXPECT_NEAR(r(c), 1.3 * r(a), 1e-9);
    EXPECT_NEAR(sdnn(b), sdnn(a), 1e-9);
    EXPECT_NEAR(sdnn(c), 1.3 * sdnn(a), 1e-9);
  }
}

TEST(NaturalCubicSpline, LinearIsExact) {
  const NaturalCubicSpline s({0, 1, 2.5, 4, 7}, {1, 3, 6, 9, 15});
  for (double t = 0; t <= 7; t += 0.13) EXPECT_NEAR(s(t), 1 + 2 * t, 1e-12);
  EXPECT_THROW(NaturalCubicSpline({0, 0, 1}, {1, 2, 3}), Error);
}

TEST(Tachogram, ConstantIbis) {
  const auto t = interpolate_tachogram(series(std::vector<double>(30, 800)));
  EXPECT_EQ(t.rate, kTachogramRate);
  for (double v : t.values) EXPECT_NEAR(v, 800.0, 1e-9);
}

TEST(Tachogram, FollowsSinusoid) {
  // Each IBI takes the sinusoid's value at its closing beat, where the
  // tachogram places its knot.
  std::vector<double> ms;
  for (double t = 0.0; t < 300.0; t += ms.back() / 1000.0) {
    double v = 1000.0;
    for (int it = 0; it < 50; ++it) v = 1000.0 + 50.0 * std::sin(2.0 * std::numbers::pi * 0.1 * (t + v / 1000.0));
    ms.push_back(v);
  }
  const auto tacho = interpolate_tachogram(series(ms));
  std::vector<double> ref;
  for (std::size_t k = 0; k < tacho.size(); ++k) ref.push_back(std::sin(2.0 * std::numbers::pi * 0.1 * tacho.time_at(k)));
  EXPECT_GE(oracle::correlation(tacho.values, ref), 0.99);
}

TEST(Tachogram, NeedsFourIntervals) {
  try {
    interpolate_tachogram(series({800, 810, 820}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_data);
  }
}

TEST(Detrend, ConstantBecomesZero) {
  for (double v : detrend(std::vector<double>(100, 7.5))) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(Detrend, RampRemoved) {
  std::vector<double> ramp;
  for (int i = 0; i < 1200; ++i) ramp.push_back(0.5 * i);
  const auto out = detrend(ramp, 500);
  const double range = ramp.back() - ramp.front();
  for (double v : out) EXPECT_LE(std::abs(v), 0.01 * range);
}

TEST(Detrend, KeepsRespiratoryBand) {
  std::vector<double> x;
  for (int i = 0; i < 1200; ++i) x.push_back(std::sin(2.0 * std::numbers::pi * 0.25 * i / 4.0));
  const auto out = detrend(x, 500);
  double peak = 0;
  for (std::size_t i = 200; i < 1000; ++i) peak = std::max(peak, std::abs(out[i]));
  EXPECT_GE(peak, 0.9);
}

TEST(Detrend, MatchesDenseOracle) {
  std::mt19937_64 rng(70);
  std::normal_distribution<double> g(0, 30);
  for (std::size_t n : {3u, 4u, 5u, 17u, 256u, 999u, 2000u}) {
    for (double lambda : {1.0, 10.0, 500.0}) {
      std::vector<double> z(n);
      double walk = 800;
      for (auto& v : z) v = (walk += g(rng));
      const auto fast = detrend(z, lambda);
      const auto slow = oracle::dense_detrend(z, lambda);
      for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(fast[i], slow[i], 1e-6) << "n=" << n << " lambda=" << lambda;
    }
  }
  EXPECT_THROW(detrend(std::vector<double>{1, 2}), Error);
}

TEST(Welch, WhiteNoisePowerMatchesVariance) {
  std::mt19937_64 rng(80);
  std::normal_distribution<double> g(0, 25);
  std::vector<double> x(1200);
  for (auto& v : x) v = g(rng);
  const auto p = welch_psd(x);
  double total = 0;
  for (double v : p.power) total += v * p.df;
  const double var = oracle::two_pass_pstdev(x) * oracle::two_pass_pstdev(x);
  EXPECT_NEAR(total, var, 0.1 * var);
}

TEST(Welch, ToneLandsOnItsBin) {
  std::vector<double> x;
  for (int i = 0; i < 1200; ++i) x.push_back(std::sin(2.0 * std::numbers::pi * 0.1 * i / 4.0));
  const auto p = welch_psd(x);
  const auto k = std::distance(p.power.begin(), std::max_element(p.power.begin(), p.power.end()));
  EXPECT_NEAR(p.frequencies[k], 0.1, p.df + 1e-12);
}

TEST(Welch, ZeroInput) {
  const auto p = welch_psd(std::vector<double>(600, 0.0));
  for (double v : p.power) EXPECT_EQ(v, 0.0);
}

TEST(LfHf, ModulationBands) {
  for (auto [freq, want_lf] : {std::pair{0.1, true}, std::pair{0.3, false}}) {
    const auto tacho = interpolate_tachogram(series(modulated_ibis(freq, 50.0)));
    const auto b = lf_hf(welch_psd(detrend(tacho.values)));
    if (want_lf) EXPECT_GE(b.lf_nu, 0.95);
    else EXPECT_GE(b.hf_nu, 0.95);
    EXPECT_NEAR(b.lf_nu + b.hf_nu, 1.0, 1e-12);
    ASSERT_TRUE(b.lf_hf);
    EXPECT_NEAR(*b.lf_hf * b.hf_nu, b.lf_nu, 1e-12);
  }
}

TEST(LfHf, BoundaryGoesToHf) {
  Periodogram p;
  p.df = 0.01;
  for (int k = 0; k <= 50; ++k) {
    p.frequencies.push_back(k * 0.01);
    p.power.push_back(k == 15 ? 1.0 : 0.0);
  }
  const auto b = lf_hf(p);
  EXPECT_DOUBLE_EQ(b.hf_nu, 1.0);
  EXPECT_DOUBLE_EQ(b.lf_nu, 0.0);
}

TEST(LfHf, ZeroPowerIsDegenerate) {
  Periodogram p;
  p.df = 0.1;
  p.frequencies = {0, 0.1, 0.2, 0.3, 0.4, 0.5};
  p.power.assign(6, 0.0);
  try {
    lf_hf(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
}

TEST(ComputeHrv, ConstantIbisLeaveFrequencyUndefined) {
  const auto r = compute_hrv(series(std::vector<double>(300, 1000)));
  EXPECT_EQ(r.rmssd_ms, 0.0);
  EXPECT_EQ(r.sdnn_ms, 0.0);
  EXPECT_FALSE(r.lf_nu);
  EXPECT_FALSE(r.hf_nu);
  EXPECT_FALSE(r.lf_hf);
  EXPECT_EQ(r.n_ibis_used, 300u);
}

TEST(ComputeHrv, ShortSeries) {
  const auto r = compute_hrv(series({800, 900}));
  EXPECT_FALSE(r.rmssd_ms);
  EXPECT_TRUE(r.sdnn_ms);
  EXPECT_FALSE(r.lf_nu);
}
