#pragma once

// Frequency-domain stages of the pulse pipeline: head-motion suppression,
// heart-band limiting, dominant-frequency selection, the narrowband filter
// and overlap-add of successive filtered windows.

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "pulse/error.hpp"
#include "pulse/fft.hpp"
#include "pulse/pulse_extraction.hpp"
#include "pulse/stats.hpp"

namespace pulse {

struct BandLimits {
  double lo = 0.7;
  double hi = 4.0;

  void validate(double rate) const {
    if (!(lo > 0.0 && lo < hi && hi < rate / 2.0)) {
      throw Error(ErrorKind::validation, "band must satisfy 0 < lo < hi < rate/2");
    }
  }

  bool contains(double f) const {
    const double a = std::abs(f);
    return a >= lo && a <= hi;
  }
};

inline constexpr BandLimits kHeartBand{0.7, 4.0};
inline constexpr double kNarrowBandwidthHz = 0.47;

struct Spectrum {
  std::vector<fft::cplx> bins;
  double rate = 30.0;

  std::size_t size() const { return bins.size(); }
  double resolution() const { return rate / static_cast<double>(bins.size()); }

  /// Signed centre frequency of bin k (negative above N/2).
  double frequency(std::size_t k) const {
    const auto n = static_cast<std::ptrdiff_t>(bins.size());
    auto kk = static_cast<std::ptrdiff_t>(k);
    if (kk > n / 2) kk -= n;
    return static_cast<double>(kk) * resolution();
  }
};

inline Spectrum forward_spectrum(std::span<const double> window, double rate) {
  if (!is_window_length(window.size())) {
    throw Error(ErrorKind::validation, "spectrum length must be 256 or 512");
  }
  return {fft::forward_real(window), rate};
}

inline std::vector<double> inverse_spectrum(const Spectrum& spec) { return fft::inverse_real(spec.bins); }

/// Magnitude-domain subtraction of the mean head-pose spectrum. The pose
/// magnitude is scaled so its in-band peak equals the pulse's in-band peak;
/// the pulse phase is kept. Disabled or pose-less input passes through.
inline Spectrum suppress_motion(const Spectrum& pulse, std::span<const Spectrum> pose, bool enabled,
                                const BandLimits& band = kHeartBand) {
  if (!enabled || pose.empty()) return pulse;
  const std::size_t n = pulse.size();
  for (const auto& p : pose) {
    if (p.size() != n) throw Error(ErrorKind::validation, "pose spectrum length mismatch");
  }

  std::vector<double> mean_mag(n, 0.0);
  for (const auto& p : pose) {
    for (std::size_t k = 0; k < n; ++k) mean_mag[k] += std::abs(p.bins[k]);
  }
  for (auto& m : mean_mag) m /= static_cast<double>(pose.size());

  double pulse_peak = 0.0;
  double pose_peak = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!band.contains(pulse.frequency(k))) continue;
    pulse_peak = std::max(pulse_peak, std::abs(pulse.bins[k]));
    pose_peak = std::max(pose_peak, mean_mag[k]);
  }
  const double scale = pose_peak > 0.0 ? pulse_peak / pose_peak : 0.0;
  if (scale == 0.0) return pulse;

  Spectrum out = pulse;
  for (std::size_t k = 0; k < n; ++k) {
    const double mag = std::abs(pulse.bins[k]);
    if (mag == 0.0) continue;
    const double kept = std::max(0.0, mag - scale * mean_mag[k]);
    out.bins[k] = pulse.bins[k] * (kept / mag);
  }
  return out;
}

/// Zeroes every bin whose |f| falls outside [lo, hi].
inline Spectrum band_limit(const Spectrum& spec, const BandLimits& band) {
  band.validate(spec.rate);
  Spectrum out = spec;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!band.contains(out.frequency(k))) out.bins[k] = {0.0, 0.0};
  }
  return out;
}

/// Centre frequency of the strongest in-band bin. Magnitudes within a
/// relative 1e-12 count as tied and the lower frequency wins.
inline double dominant_frequency(const Spectrum& spec, const BandLimits& band) {
  double best_mag = 0.0;
  double best_f = 0.0;
  for (std::size_t k = 1; k <= spec.size() / 2; ++k) {
    const double f = spec.frequency(k);
    if (!band.contains(f)) continue;
    const double mag = std::abs(spec.bins[k]);
    if (mag > best_mag * (1.0 + 1e-12) && mag > 0.0) {
      best_mag = mag;
      best_f = f;
    }
  }
  if (best_mag == 0.0) throw Error(ErrorKind::degenerate, "no in-band signal");
  return std::abs(best_f);
}

/// Pass band of the narrowband filter, clamped to the heart band.
inline BandLimits narrow_passband(double center, double bandwidth = kNarrowBandwidthHz,
                                  const BandLimits& heart = kHeartBand) {
  return {std::max(heart.lo, center - bandwidth / 2.0), std::min(heart.hi, center + bandwidth / 2.0)};
}

/// Spectrum-zeroing bandpass of width `bandwidth` centred on `center`,
/// applied to the unsuppressed raw pulse window.
inline std::vector<double> narrowband_filter(std::span<const double> raw, double rate, double center,
                                             double bandwidth = kNarrowBandwidthHz,
                                             const BandLimits& heart = kHeartBand) {
  if (center < heart.lo || center > heart.hi) {
    throw Error(ErrorKind::validation, "narrowband centre outside the heart band");
  }
  const BandLimits pass = narrow_passband(center, bandwidth, heart);
  Spectrum spec = forward_spectrum(raw, rate);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    if (!pass.contains(spec.frequency(k))) spec.bins[k] = {0.0, 0.0};
  }
  return inverse_spectrum(spec);
}

/// Subtract mean, divide by population sigma; a flat window becomes zeros.
inline std::vector<double> z_normalize(std::span<const double> x) {
  std::vector<double> out(x.size(), 0.0);
  const double sd = stats::pstdev(x);
  if (sd == 0.0) return out;
  const double m = stats::mean(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - m) / sd;
  return out;
}

/// Overlap-add of z-normalised windows on a global sample grid. Each output
/// sample is sum / count once no later window can touch it. Single writer.
class BvpAccumulator {
 public:
  BvpAccumulator() = default;
  BvpAccumulator(double t0, double rate) : t0_(t0), rate_(rate) {}

  /// Adds `window` at grid index `start`; returns samples finalized by it
  /// (everything before `start`).
  std::vector<double> add(std::span<const double> window, std::size_t start) {
    if (start < finalized_) throw Error(ErrorKind::validation, "window starts before finalized samples");
    const auto z = z_normalize(window);
    if (sum_.size() < start + z.size()) {
      sum_.resize(start + z.size(), 0.0);
      count_.resize(start + z.size(), 0);
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
      sum_[start + i] += z[i];
      ++count_[start + i];
    }
    return finalize_until(start);
  }

  /// Marks the grid as extending to `length` samples without adding data.
  void extend_to(std::size_t length) {
    if (sum_.size() < length) {
      sum_.resize(length, 0.0);
      count_.resize(length, 0);
    }
  }

  std::vector<double> flush() { return finalize_until(sum_.size()); }

  std::size_t finalized() const { return finalized_; }
  std::size_t uncovered() const { return uncovered_; }
  double t0() const { return t0_; }
  double rate() const { return rate_; }

 private:
  std::vector<double> finalize_until(std::size_t end) {
    std::vector<double> out;
    end = std::min(end, sum_.size());
    if (end <= finalized_) return out;
    out.reserve(end - finalized_);
    for (std::size_t k = finalized_; k < end; ++k) {
      if (count_[k] == 0) {
        ++uncovered_;
        out.push_back(0.0);
      } else {
        out.push_back(sum_[k] / static_cast<double>(count_[k]));
      }
    }
    finalized_ = end;
    return out;
  }

  double t0_ = 0.0;
  double rate_ = 30.0;
  std::vector<double> sum_;
  std::vector<unsigned> count_;
  std::size_t finalized_ = 0;
  std::size_t uncovered_ = 0;
};

}  // namespace pulse
