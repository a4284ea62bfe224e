#pragma once

// Heart-rate-variability metrics over filtered inter-beat intervals:
// RMSSD and SDNN in the time domain, LF/HF from a Welch periodogram of the
// detrended 4 Hz tachogram.

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "pulse/beat_analysis.hpp"
#include "pulse/error.hpp"
#include "pulse/fft.hpp"
#include "pulse/stats.hpp"
#include "pulse/trace_io.hpp"

namespace pulse {

/// RMSSD over intervals within one (population) sigma of the mean,
/// inclusive. Only pairs that were adjacent in the original beat sequence
/// and both survive the mask contribute a difference.
inline double rmssd(std::span<const Ibi> ibis) {
  std::vector<double> ms;
  ms.reserve(ibis.size());
  for (const auto& i : ibis) ms.push_back(i.ms);
  const double m = stats::mean(ms);
  const double sd = stats::pstdev(ms);

  std::vector<const Ibi*> kept;
  for (const auto& i : ibis)
    if (std::abs(i.ms - m) <= sd) kept.push_back(&i);
  if (kept.size() < 3) throw Error(ErrorKind::insufficient_data, "RMSSD needs at least 3 intervals");

  double ss = 0.0;
  std::size_t pairs = 0;
  for (std::size_t k = 0; k + 1 < kept.size(); ++k) {
    if (kept[k + 1]->start_index != kept[k]->start_index + 1) continue;
    const double d = kept[k + 1]->ms - kept[k]->ms;
    ss += d * d;
    ++pairs;
  }
  if (pairs == 0) throw Error(ErrorKind::insufficient_data, "RMSSD has no adjacent interval pairs");
  return std::sqrt(ss / static_cast<double>(pairs));
}

inline double rmssd(const IbiSeries& filtered) {
  const auto s = filtered.survivors();
  return rmssd(std::span<const Ibi>(s));
}

/// Population standard deviation of the filtered intervals.
inline double sdnn(const IbiSeries& filtered) {
  const auto ms = filtered.survivor_ms();
  if (ms.size() < 2) throw Error(ErrorKind::insufficient_data, "SDNN needs at least 2 intervals");
  return stats::pstdev(ms);
}

/// Natural cubic spline through (x, y), x strictly increasing.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw Error(ErrorKind::insufficient_data, "spline needs >= 2 knots");
    for (std::size_t i = 1; i < n; ++i) {
      if (!(x_[i] > x_[i - 1])) throw Error(ErrorKind::validation, "spline knots must be strictly increasing");
    }
    m_.assign(n, 0.0);
    if (n == 2) return;
    // Tridiagonal system for second derivatives, m[0] = m[n-1] = 0.
    std::vector<double> c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = x_[i] - x_[i - 1];
      const double h1 = x_[i + 1] - x_[i];
      const double a = h0, b = 2.0 * (h0 + h1), cc = h1;
      const double rhs = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
      const double denom = b - a * c[i - 1];
      c[i] = cc / denom;
      d[i] = (rhs - a * d[i - 1]) / denom;
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m_[i] = d[i] - c[i] * m_[i + 1];
      if (i == 1) break;
    }
  }

  double operator()(double t) const {
    const std::size_t n = x_.size();
    std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin());
    i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
    const double h = x_[i + 1] - x_[i];
    const double a = (x_[i + 1] - t) / h;
    const double b = (t - x_[i]) / h;
    return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
  }

 private:
  std::vector<double> x_, y_, m_;
};

inline constexpr double kTachogramRate = 4.0;

/// Spline through (end time of each filtered IBI, IBI ms), sampled at 4 Hz
/// from the first to the last knot.
inline UniformSignal interpolate_tachogram(const IbiSeries& filtered, double rate = kTachogramRate) {
  const auto surv = filtered.survivors();
  if (surv.size() < 4) throw Error(ErrorKind::insufficient_data, "tachogram needs at least 4 intervals");
  std::vector<double> x, y;
  for (const auto& i : surv) {
    x.push_back(i.end_s);
    y.push_back(i.ms);
  }
  const NaturalCubicSpline spline(x, y);
  UniformSignal out;
  out.t0 = x.front();
  out.rate = rate;
  const std::size_t n = resampled_length(x.front(), x.back(), rate);
  out.values.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.values[k] = spline(out.time_at(k));
  return out;
}

inline constexpr double kDetrendLambda = 500.0;

/// Smoothness-priors detrending: z - (I + lambda^2 D2' D2)^-1 z, D2 the
/// second-difference operator. The system is symmetric positive definite
/// and pentadiagonal; solved with a banded Cholesky factorisation.
inline std::vector<double> detrend(std::span<const double> z, double lambda = kDetrendLambda) {
  const std::size_t n = z.size();
  if (n < 3) throw Error(ErrorKind::insufficient_data, "detrend needs at least 3 samples");
  const double l2 = lambda * lambda;

  // A stored by diagonals: a0 main, a1 first, a2 second super-diagonal.
  std::vector<double> a0(n, 1.0), a1(n, 0.0), a2(n, 0.0);
  for (std::size_t r = 0; r + 2 < n; ++r) {
    // Row r of D2 touches columns r, r+1, r+2 with weights 1, -2, 1.
    const double w[3] = {1.0, -2.0, 1.0};
    for (int i = 0; i < 3; ++i) {
      a0[r + i] += l2 * w[i] * w[i];
      if (i < 2) a1[r + i] += l2 * w[i] * w[i + 1];
    }
    a2[r] += l2 * w[0] * w[2];
  }

  // A = L L', L lower triangular with two sub-diagonals.
  std::vector<double> d(n), e(n, 0.0), f(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= 2) f[i] = a2[i - 2] / d[i - 2];
    if (i >= 1) e[i] = (a1[i - 1] - (i >= 2 ? f[i] * e[i - 1] : 0.0)) / d[i - 1];
    double diag = a0[i];
    if (i >= 1) diag -= e[i] * e[i];
    if (i >= 2) diag -= f[i] * f[i];
    d[i] = std::sqrt(diag);
  }
  // Forward then backward substitution.
  std::vector<double> y(n), trend(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = z[i];
    if (i >= 1) s -= e[i] * y[i - 1];
    if (i >= 2) s -= f[i] * y[i - 2];
    y[i] = s / d[i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    if (ii + 1 < n) s -= e[ii + 1] * trend[ii + 1];
    if (ii + 2 < n) s -= f[ii + 2] * trend[ii + 2];
    trend[ii] = s / d[ii];
  }

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = z[i] - trend[i];
  return out;
}

struct Periodogram {
  std::vector<double> frequencies;  // Hz
  std::vector<double> power;        // ms^2 / Hz for a tachogram in ms
  double df = 0.0;
};

struct WelchConfig {
  std::size_t segment = 256;  // 64 s at 4 Hz
  double overlap = 0.5;
};

/// Welch PSD: Hann-tapered, per-segment mean removal, one-sided density.
/// Inputs shorter than a segment use a single full-length segment.
inline Periodogram welch_psd(std::span<const double> x, double fs = kTachogramRate, const WelchConfig& cfg = {}) {
  if (x.empty()) throw Error(ErrorKind::insufficient_data, "Welch PSD of empty input");
  const std::size_t len = std::min(cfg.segment, x.size());
  const std::size_t step = std::max<std::size_t>(1, len - static_cast<std::size_t>(cfg.overlap * static_cast<double>(len)));
  const std::size_t nfft = std::bit_ceil(len);

  std::vector<double> window(len);
  double wss = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    window[i] = len > 1 ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len)) : 1.0;
    wss += window[i] * window[i];
  }

  Periodogram out;
  const std::size_t nbins = nfft / 2 + 1;
  out.df = fs / static_cast<double>(nfft);
  out.frequencies.resize(nbins);
  out.power.assign(nbins, 0.0);
  for (std::size_t k = 0; k < nbins; ++k) out.frequencies[k] = static_cast<double>(k) * out.df;
  if (wss == 0.0) return out;

  std::size_t segments = 0;
  std::vector<fft::cplx> buf(nfft);
  for (std::size_t start = 0; start + len <= x.size(); start += step) {
    const double m = stats::mean(x.subspan(start, len));
    std::fill(buf.begin(), buf.end(), fft::cplx{});
    for (std::size_t i = 0; i < len; ++i) buf[i] = (x[start + i] - m) * window[i];
    fft::transform(buf, false);
    for (std::size_t k = 0; k < nbins; ++k) {
      double p = std::norm(buf[k]) / (fs * wss);
      if (k != 0 && !(nfft % 2 == 0 && k == nfft / 2)) p *= 2.0;
      out.power[k] += p;
    }
    ++segments;
  }
  for (auto& p : out.power) p /= static_cast<double>(segments);
  return out;
}

struct LfHf {
  double lf = 0.0;  // absolute band power
  double hf = 0.0;
  double lf_nu = 0.0;
  double hf_nu = 0.0;
  std::optional<double> lf_hf;  // undefined when HF power is zero
};

inline constexpr double kLfLo = 0.04, kLfHi = 0.15, kHfHi = 0.4;
/// Band power below this (ms^2) is numerical residue, not variability.
inline constexpr double kMinBandPower = 1e-9;

/// LF = power in [0.04, 0.15) Hz, HF = power in [0.15, 0.4] Hz.
inline LfHf lf_hf(const Periodogram& psd) {
  if (psd.frequencies.empty() || psd.frequencies.back() < kHfHi) {
    throw Error(ErrorKind::validation, "periodogram does not cover the HF band");
  }
  LfHf out;
  for (std::size_t k = 0; k < psd.frequencies.size(); ++k) {
    const double f = psd.frequencies[k];
    if (f >= kLfLo && f < kLfHi) out.lf += psd.power[k] * psd.df;
    else if (f >= kLfHi && f <= kHfHi) out.hf += psd.power[k] * psd.df;
  }
  const double total = out.lf + out.hf;
  if (!(total > kMinBandPower)) throw Error(ErrorKind::degenerate, "LF+HF power is zero");
  out.lf_nu = out.lf / total;
  out.hf_nu = out.hf / total;
  if (out.hf > 0.0) out.lf_hf = out.lf / out.hf;
  return out;
}

struct HrvReport {
  std::optional<double> rmssd_ms;
  std::optional<double> sdnn_ms;
  std::optional<double> lf_nu;
  std::optional<double> hf_nu;
  std::optional<double> lf_hf;
  std::size_t n_ibis_used = 0;
};

struct HrvConfig {
  double detrend_lambda = kDetrendLambda;
  WelchConfig welch;
};

/// All HRV metrics over one filtered IBI series; a metric whose input is
/// too short or degenerate is left empty rather than guessed.
inline HrvReport compute_hrv(const IbiSeries& filtered, const HrvConfig& cfg = {}) {
  HrvReport r;
  r.n_ibis_used = filtered.survivors().size();
  try {
    r.rmssd_ms = rmssd(filtered);
  } catch (const Error&) {
  }
  try {
    r.sdnn_ms = sdnn(filtered);
  } catch (const Error&) {
  }
  try {
    const auto tacho = interpolate_tachogram(filtered);
    const auto flat = detrend(tacho.values, cfg.detrend_lambda);
    const auto bands = lf_hf(welch_psd(flat, tacho.rate, cfg.welch));
    r.lf_nu = bands.lf_nu;
    r.hf_nu = bands.hf_nu;
    r.lf_hf = bands.lf_hf;
  } catch (const Error&) {
  }
  return r;
}

}  // namespace pulse
