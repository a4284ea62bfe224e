#pragma once

// Whole-trace analysis: resample, slide windows, POS, motion suppression,
// band limiting, narrowband filtering, overlap-add, then beats, HR and HRV.

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pulse/beat_analysis.hpp"
#include "pulse/error.hpp"
#include "pulse/evaluation.hpp"
#include "pulse/hrv_metrics.hpp"
#include "pulse/pulse_extraction.hpp"
#include "pulse/spectral_filtering.hpp"
#include "pulse/stats.hpp"
#include "pulse/trace_io.hpp"

namespace pulse {

struct PipelineConfig {
  double window_s = 8.53;
  double hop_s = 0.5;
  BandLimits band = kHeartBand;
  double narrow_bw_hz = kNarrowBandwidthHz;
  double peak_delta = 0.3;
  double hr_window_s = 16.0;  // kInfiniteWindow allowed
  double hr_stride_s = 1.0;
  bool motion_suppression = true;
  double detrend_lambda = kDetrendLambda;
  bool refine_peaks = true;
  std::optional<double> rate;  // forces 30 or 60 Hz instead of the frame-rate rule

  void validate() const {
    if (!(window_s > 0 && hop_s > 0 && narrow_bw_hz > 0 && peak_delta > 0 && hr_window_s > 0 &&
          hr_stride_s > 0 && detrend_lambda > 0)) {
      throw Error(ErrorKind::validation, "pipeline parameters must be positive");
    }
    if (rate && *rate != 30.0 && *rate != 60.0) throw Error(ErrorKind::validation, "rate must be 30 or 60");
  }
};

/// Wall time spent in one stage.
struct StageTiming {
  std::vector<double> samples_ms;  // one per invocation (per window for window stages)
  double total_ms = 0.0;

  void add(double ms) {
    samples_ms.push_back(ms);
    total_ms += ms;
  }
};

/// Stage names in execution order.
inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"resample", "pos",        "spectrum",    "suppress_band",
                                                 "narrowband", "overlap_add", "peaks",     "hr_hrv"};
  return names;
}

struct AnalysisMeta {
  std::string source_id;
  double rate = 0.0;
  double t0 = 0.0;
  std::size_t n_frames = 0;
  std::size_t n_samples = 0;
  std::size_t window_samples = 0;
  std::size_t hop_samples = 0;
  std::size_t windows = 0;
  std::size_t skipped_windows = 0;
  std::size_t uncovered_samples = 0;
  std::size_t gap_count = 0;
  double max_gap_s = 0.0;
  bool has_pose = false;
};

struct AnalysisResult {
  std::vector<double> beats;
  HrSeries hr_series;
  std::optional<double> hr_overall_bpm;
  HrvReport hrv;
  IbiSeries ibis;
  UniformSignal bvp;
  AnalysisMeta meta;
  PipelineConfig config;
  std::map<std::string, StageTiming> timing;
};

namespace detail {

class ScopedTimer {
 public:
  explicit ScopedTimer(StageTiming& t) : t_(t), start_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    const auto d = std::chrono::steady_clock::now() - start_;
    t_.add(std::chrono::duration<double, std::milli>(d).count());
  }
  ScopedTimer(const ScopedTimer&) = delete;
  ScopedTimer& operator=(const ScopedTimer&) = delete;

 private:
  StageTiming& t_;
  std::chrono::steady_clock::time_point start_;
};

template <class F>
auto staged(const char* stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

}  // namespace detail

inline std::size_t window_samples_for(double window_s, double rate) {
  const auto n = static_cast<std::size_t>(std::lround(window_s * rate));
  if (!is_window_length(n)) {
    throw Error(ErrorKind::validation, "window of " + std::to_string(window_s) + " s at " + std::to_string(rate) +
                                           " Hz is not 256/512 samples");
  }
  return n;
}

/// Spectrum-domain part of one window: returns the narrowband centre or
/// nothing when the band holds no signal.
inline std::optional<double> window_center(std::span<const double> raw, const ResampledTrace& rs, std::size_t start,
                                           std::size_t n, const PipelineConfig& cfg, StageTiming& t_spec,
                                           StageTiming& t_sup) {
  Spectrum spec;
  std::vector<Spectrum> pose;
  {
    detail::ScopedTimer timer(t_spec);
    spec = forward_spectrum(raw, rs.rate);
    if (rs.has_pose() && cfg.motion_suppression) {
      for (const auto* ch : {&*rs.pitch, &*rs.roll, &*rs.yaw}) {
        pose.push_back(forward_spectrum(std::span<const double>(ch->values).subspan(start, n), rs.rate));
      }
    }
  }
  detail::ScopedTimer timer(t_sup);
  const Spectrum limited = band_limit(suppress_motion(spec, pose, cfg.motion_suppression, cfg.band), cfg.band);
  try {
    return dominant_frequency(limited, cfg.band);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::degenerate) throw;
    return std::nullopt;
  }
}

/// Windowed BVP extraction over a resampled trace.
inline UniformSignal extract_bvp(const ResampledTrace& rs, const PipelineConfig& cfg, AnalysisMeta& meta,
                                 std::map<std::string, StageTiming>& timing) {
  const std::size_t n = window_samples_for(cfg.window_s, rs.rate);
  const std::size_t total = rs.size();
  if (total < n) {
    throw StageError("windowing", Error(ErrorKind::insufficient_data, "trace shorter than one analysis window"));
  }
  const std::size_t hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.hop_s * rs.rate)));
  meta.window_samples = n;
  meta.hop_samples = hop;
  cfg.band.validate(rs.rate);

  BvpAccumulator acc(rs.r.t0, rs.rate);
  UniformSignal bvp{rs.r.t0, rs.rate, {}};
  bvp.values.reserve(total);
  std::optional<double> prev_center;

  for (std::size_t start = 0; start + n <= total; start += hop) {
    ++meta.windows;
    std::vector<double> raw;
    {
      detail::ScopedTimer timer(timing["pos"]);
      const auto sub = [&](const UniformSignal& s) { return std::span<const double>(s.values).subspan(start, n); };
      raw = detail::staged("pos_project", [&] { return pos_project({sub(rs.r), sub(rs.g), sub(rs.b), rs.rate}); });
    }
    auto center = detail::staged("spectrum", [&] {
      return window_center(raw, rs, start, n, cfg, timing["spectrum"], timing["suppress_band"]);
    });
    if (!center) center = prev_center;
    if (!center) {
      ++meta.skipped_windows;
      continue;
    }
    prev_center = center;
    std::vector<double> filtered;
    {
      detail::ScopedTimer timer(timing["narrowband"]);
      filtered = detail::staged("narrowband", [&] {
        return narrowband_filter(raw, rs.rate, *center, cfg.narrow_bw_hz, cfg.band);
      });
    }
    detail::ScopedTimer timer(timing["overlap_add"]);
    const auto done = acc.add(filtered, start);
    bvp.values.insert(bvp.values.end(), done.begin(), done.end());
  }
  acc.extend_to(total);
  const auto rest = acc.flush();
  bvp.values.insert(bvp.values.end(), rest.begin(), rest.end());
  meta.uncovered_samples = acc.uncovered();
  return bvp;
}

inline AnalysisResult analyze(const SampleTrace& trace, const PipelineConfig& cfg = {}) {
  cfg.validate();
  AnalysisResult res;
  res.config = cfg;
  for (const auto& s : stage_names()) res.timing[s];
  auto& meta = res.meta;
  meta.source_id = trace.source_id;
  meta.n_frames = trace.samples.size();
  meta.has_pose = trace.has_pose;

  ResampledTrace rs;
  {
    detail::ScopedTimer timer(res.timing["resample"]);
    rs = detail::staged("resample", [&] {
      const double rate = cfg.rate ? *cfg.rate : choose_pipeline_rate(trace);
      return resample_uniform(trace, rate);
    });
  }
  meta.rate = rs.rate;
  meta.t0 = rs.r.t0;
  meta.n_samples = rs.size();
  meta.gap_count = rs.gap_count;
  meta.max_gap_s = rs.max_gap_s;

  res.bvp = extract_bvp(rs, cfg, meta, res.timing);

  {
    detail::ScopedTimer timer(res.timing["peaks"]);
    res.beats = detect_peaks(res.bvp, cfg.peak_delta, cfg.refine_peaks).beats;
  }
  {
    detail::ScopedTimer timer(res.timing["hr_hrv"]);
    HrWindowing w;
    w.window_s = cfg.hr_window_s;
    w.stride_s = cfg.hr_stride_s;
    const auto m = beat_metrics(res.beats, w, {}, HrvConfig{cfg.detrend_lambda, {}});
    res.ibis = m.ibis;
    res.hr_series = m.hr;
    res.hrv = m.hrv;
    w.window_s = kInfiniteWindow;
    const auto overall = heart_rate(m.ibis, w);
    if (!overall.entries.empty()) res.hr_overall_bpm = overall.entries.front().bpm;
  }
  return res;
}

struct StageSummary {
  std::string stage;
  std::size_t samples = 0;
  double total_ms = 0.0;
  double per_frame_mean_ms = 0.0;  // total / frames
  double per_call_mean_ms = 0.0;
  double per_call_std_ms = 0.0;
};

struct BenchReport {
  std::size_t frames = 0;
  double duration_s = 0.0;
  std::vector<double> run_wall_ms;
  std::vector<StageSummary> stages;  // from the last run
  double wall_mean_ms = 0.0;
  double wall_std_ms = 0.0;
  double per_frame_ms = 0.0;
  double realtime_factor = 0.0;  // trace duration / wall time
};

inline std::vector<StageSummary> summarize_timing(const std::map<std::string, StageTiming>& timing,
                                                  std::size_t frames) {
  std::vector<StageSummary> out;
  for (const auto& name : stage_names()) {
    const auto it = timing.find(name);
    if (it == timing.end()) continue;
    const auto& t = it->second;
    StageSummary s;
    s.stage = name;
    s.samples = t.samples_ms.size();
    s.total_ms = t.total_ms;
    s.per_frame_mean_ms = frames ? t.total_ms / static_cast<double>(frames) : 0.0;
    s.per_call_mean_ms = stats::mean(t.samples_ms);
    s.per_call_std_ms = stats::pstdev(t.samples_ms);
    out.push_back(s);
  }
  return out;
}

/// Runs analyze `runs` times and reports wall time and per-stage costs.
inline BenchReport bench(const SampleTrace& trace, const PipelineConfig& cfg = {}, std::size_t runs = 3) {
  BenchReport rep;
  rep.frames = trace.samples.size();
  rep.duration_s = trace.samples.empty() ? 0.0 : trace.samples.back().t - trace.samples.front().t;
  AnalysisResult last;
  for (std::size_t i = 0; i < std::max<std::size_t>(1, runs); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    last = analyze(trace, cfg);
    rep.run_wall_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  rep.stages = summarize_timing(last.timing, rep.frames);
  rep.wall_mean_ms = stats::mean(rep.run_wall_ms);
  rep.wall_std_ms = stats::pstdev(rep.run_wall_ms);
  rep.per_frame_ms = rep.frames ? rep.wall_mean_ms / static_cast<double>(rep.frames) : 0.0;
  rep.realtime_factor = rep.wall_mean_ms > 0.0 ? rep.duration_s * 1000.0 / rep.wall_mean_ms : 0.0;
  return rep;
}

}  // namespace pulse
