#pragma once

// Beat localisation on the BVP, inter-beat intervals, IBI outlier filtering
// and windowed heart rate.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pulse/error.hpp"
#include "pulse/stats.hpp"
#include "pulse/trace_io.hpp"

namespace pulse {

enum class BeatSource { rppg, ground_truth };

struct BeatSeries {
  std::vector<double> beats;  // seconds, strictly increasing
  BeatSource source = BeatSource::rppg;
};

/// Alternating max/min scan. A maximum is confirmed once the signal falls at
/// least `delta` below it, after which the scan looks for a minimum that is
/// confirmed by a rise of at least `delta`. Returns indices of the maxima.
inline std::vector<std::size_t> peak_indices(std::span<const double> x, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorKind::validation, "peak delta must be positive");
  std::vector<std::size_t> peaks;
  double mx = -std::numeric_limits<double>::infinity();
  double mn = std::numeric_limits<double>::infinity();
  std::size_t mx_pos = 0;
  bool look_for_max = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (v > mx) {
      mx = v;
      mx_pos = i;
    }
    if (v < mn) mn = v;
    if (look_for_max) {
      if (v <= mx - delta) {
        peaks.push_back(mx_pos);
        mn = v;
        look_for_max = false;
      }
    } else if (v >= mn + delta) {
      mx = v;
      mx_pos = i;
      look_for_max = true;
    }
  }
  return peaks;
}

/// Sub-sample crest offset in [-0.5, 0.5] from a parabola through the peak
/// and its two neighbours.
inline double parabolic_offset(std::span<const double> x, std::size_t i) {
  if (i == 0 || i + 1 >= x.size()) return 0.0;
  const double a = x[i - 1], b = x[i], c = x[i + 1];
  const double denom = a - 2.0 * b + c;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

inline BeatSeries detect_peaks(const UniformSignal& signal, double delta, bool refine = true,
                               BeatSource source = BeatSource::rppg) {
  BeatSeries out;
  out.source = source;
  const auto idx = peak_indices(signal.values, delta);
  out.beats.reserve(idx.size());
  for (std::size_t i : idx) {
    const double offset = refine ? parabolic_offset(signal.values, i) : 0.0;
    out.beats.push_back(signal.t0 + (static_cast<double>(i) + offset) / signal.rate);
  }
  return out;
}

enum class IbiFlag { raw, range_rejected, sigma3_rejected, sigma1_excluded };

inline const char* to_string(IbiFlag f) {
  switch (f) {
    case IbiFlag::raw: return "raw";
    case IbiFlag::range_rejected: return "range_rejected";
    case IbiFlag::sigma3_rejected: return "sigma3_rejected";
    case IbiFlag::sigma1_excluded: return "sigma1_excluded";
  }
  return "raw";
}

struct Ibi {
  std::size_t start_index = 0;  // index of the opening beat
  double start_s = 0.0;
  double end_s = 0.0;
  double ms = 0.0;
  IbiFlag flag = IbiFlag::raw;
};

struct IbiSeries {
  std::vector<Ibi> intervals;

  /// Intervals still flagged raw, in order.
  std::vector<Ibi> survivors() const {
    std::vector<Ibi> out;
    for (const auto& i : intervals)
      if (i.flag == IbiFlag::raw) out.push_back(i);
    return out;
  }

  std::vector<double> survivor_ms() const {
    std::vector<double> out;
    for (const auto& i : intervals)
      if (i.flag == IbiFlag::raw) out.push_back(i.ms);
    return out;
  }
};

inline IbiSeries ibis_from_beats(std::span<const double> beats) {
  IbiSeries out;
  for (std::size_t i = 0; i + 1 < beats.size(); ++i) {
    out.intervals.push_back({i, beats[i], beats[i + 1], 1000.0 * (beats[i + 1] - beats[i]), IbiFlag::raw});
  }
  return out;
}

inline IbiSeries ibis_from_beats(const BeatSeries& beats) { return ibis_from_beats(beats.beats); }

/// Builds an IBI series from bare durations laid end to end from t = 0.
inline IbiSeries ibis_from_durations(std::span<const double> ms) {
  IbiSeries out;
  double t = 0.0;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    out.intervals.push_back({i, t, t + ms[i] / 1000.0, ms[i], IbiFlag::raw});
    t += ms[i] / 1000.0;
  }
  return out;
}

struct IbiFilterConfig {
  double min_ms = 250.0;
  double max_ms = 2000.0;
  double sigma_k = 3.0;
};

/// Range rejection, then 3-sigma rejection around the mean of the range
/// survivors, repeated until no interval is removed. Already-flagged
/// intervals stay flagged.
inline IbiSeries filter_ibis(IbiSeries ibis, const IbiFilterConfig& cfg = {}) {
  for (auto& i : ibis.intervals) {
    if (i.flag == IbiFlag::raw && (i.ms < cfg.min_ms || i.ms > cfg.max_ms)) i.flag = IbiFlag::range_rejected;
  }
  while (true) {
    const auto ms = ibis.survivor_ms();
    if (ms.size() < 2) break;
    const double m = stats::mean(ms);
    const double sd = stats::pstdev(ms);
    bool changed = false;
    for (auto& i : ibis.intervals) {
      if (i.flag == IbiFlag::raw && std::abs(i.ms - m) > cfg.sigma_k * sd) {
        i.flag = IbiFlag::sigma3_rejected;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return ibis;
}

inline constexpr double kInfiniteWindow = std::numeric_limits<double>::infinity();

struct HrEntry {
  double window_center = 0.0;
  double bpm = 0.0;
  double window_s = 0.0;
  std::size_t n_ibis = 0;
};

struct HrSeries {
  std::vector<HrEntry> entries;
};

/// Placement of HR windows: [begin + k*stride, begin + k*stride + window).
/// begin/end default to the span of the IBI series.
struct HrWindowing {
  double window_s = 16.0;
  double stride_s = 1.0;
  std::optional<double> t_begin;
  std::optional<double> t_end;
};

/// bpm = 60000 / mean(surviving IBI ms) over the intervals whose opening
/// beat lies in each window. Windows without intervals emit nothing.
inline HrSeries heart_rate(const IbiSeries& ibis, const HrWindowing& w) {
  if (!(w.window_s > 0.0)) throw Error(ErrorKind::validation, "HR window must be positive");
  HrSeries out;
  if (ibis.intervals.empty() && (!w.t_begin || !w.t_end)) return out;
  const double begin = w.t_begin.value_or(ibis.intervals.front().start_s);
  const double end = w.t_end.value_or(ibis.intervals.back().end_s);
  const auto surv = ibis.survivors();

  auto emit = [&](double lo, double hi, double center, bool closed_hi) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& i : surv) {
      if (i.start_s >= lo && (i.start_s < hi || (closed_hi && i.start_s <= hi))) {
        sum += i.ms;
        ++n;
      }
    }
    if (n > 0) out.entries.push_back({center, 60000.0 / (sum / static_cast<double>(n)), w.window_s, n});
  };

  if (std::isinf(w.window_s)) {
    emit(begin, end, 0.5 * (begin + end), true);
    return out;
  }
  if (!(w.stride_s > 0.0)) throw Error(ErrorKind::validation, "HR stride must be positive");
  for (std::size_t k = 0;; ++k) {
    const double lo = begin + static_cast<double>(k) * w.stride_s;
    const double hi = lo + w.window_s;
    if (hi > end + 1e-9) break;
    emit(lo, hi, lo + 0.5 * w.window_s, false);
  }
  return out;
}

}  // namespace pulse
