#pragma once

// Scoring of predicted beats against cleaned ground-truth beats: windowed
// HR mean absolute error, HRV errors, the constant 75 bpm baseline, the
// window-length sweep and raw-vs-cleaned ground-truth deviation.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "pulse/annotation.hpp"
#include "pulse/beat_analysis.hpp"
#include "pulse/error.hpp"
#include "pulse/hrv_metrics.hpp"
#include "pulse/stats.hpp"

namespace pulse {

/// HR series, HRV report and the filtered IBIs behind them. Predictions and
/// references both go through beat_metrics so they share one formula.
struct BeatMetrics {
  IbiSeries ibis;
  HrSeries hr;
  HrvReport hrv;
};

inline IbiSeries drop_blank_ibis(const IbiSeries& ibis, std::span<const BlankRegion> blanks) {
  IbiSeries out;
  for (const auto& i : ibis.intervals) {
    const bool overlaps = std::any_of(blanks.begin(), blanks.end(),
                                      [&](const auto& b) { return b.t0 < i.end_s && b.t1 > i.start_s; });
    if (!overlaps) out.intervals.push_back(i);
  }
  return out;
}

inline BeatMetrics beat_metrics(std::span<const double> beats, const HrWindowing& windowing,
                                std::span<const BlankRegion> blanks = {}, const HrvConfig& hrv = {}) {
  BeatMetrics m;
  m.ibis = filter_ibis(drop_blank_ibis(ibis_from_beats(beats), blanks));
  m.hr = heart_rate(m.ibis, windowing);
  m.hrv = compute_hrv(m.ibis, hrv);
  return m;
}

/// Reference HR/HRV from cleaned beats; IBIs touching blank regions drop out.
inline BeatMetrics gt_reference(std::span<const double> beats, std::span<const BlankRegion> blanks,
                                const HrWindowing& windowing, const HrvConfig& hrv = {}) {
  if (beats.size() < 2) throw Error(ErrorKind::insufficient_data, "reference needs at least 2 beats");
  for (std::size_t i = 1; i < beats.size(); ++i) {
    if (!(beats[i] > beats[i - 1])) throw Error(ErrorKind::validation, "beats not strictly increasing");
  }
  return beat_metrics(beats, windowing, blanks, hrv);
}

struct MaeResult {
  double mae = 0.0;
  double std = 0.0;  // population std of the absolute errors
  double coverage = 0.0;
  std::size_t matched = 0;
  std::vector<std::pair<double, double>> errors;  // (window centre, |pred - truth|)
};

/// MAE over windows present in both series (matched by centre). Truth
/// windows without a prediction lower coverage instead of being scored.
inline MaeResult hr_mae(const HrSeries& pred, const HrSeries& truth) {
  MaeResult r;
  std::vector<double> abs_err;
  for (const auto& t : truth.entries) {
    const auto it = std::find_if(pred.entries.begin(), pred.entries.end(), [&](const HrEntry& p) {
      return std::abs(p.window_center - t.window_center) < 1e-6;
    });
    if (it == pred.entries.end()) continue;
    const double e = std::abs(it->bpm - t.bpm);
    abs_err.push_back(e);
    r.errors.emplace_back(t.window_center, e);
  }
  if (abs_err.empty()) throw Error(ErrorKind::insufficient_data, "no overlapping HR windows");
  r.matched = abs_err.size();
  r.mae = stats::mean(abs_err);
  r.std = stats::pstdev(abs_err);
  r.coverage = static_cast<double>(r.matched) / static_cast<double>(truth.entries.size());
  return r;
}

inline constexpr double kBaselineBpm = 75.0;

inline HrSeries baseline_hr(const HrSeries& truth) {
  HrSeries out = truth;
  for (auto& e : out.entries) e.bpm = kBaselineBpm;
  return out;
}

struct WindowScore {
  double window_s = 0.0;
  std::optional<MaeResult> hr;
  std::optional<MaeResult> baseline;
};

struct HrvErrors {
  std::optional<double> rmssd_ms;
  std::optional<double> sdnn_ms;
  std::optional<double> lf_nu;
  std::optional<double> hf_nu;
  std::optional<double> lf_hf;
};

struct EvaluationReport {
  std::vector<WindowScore> windows;
  HrvErrors hrv;
  HrvReport predicted_hrv;
  HrvReport reference_hrv;
};

inline std::optional<double> abs_diff(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return std::abs(*a - *b);
}

/// Windows span the reference beats; predictions use the same grid.
inline HrWindowing reference_grid(std::span<const double> truth_beats, double window_s, double stride_s) {
  HrWindowing w;
  w.window_s = window_s;
  w.stride_s = stride_s;
  w.t_begin = truth_beats.front();
  w.t_end = truth_beats.back();
  return w;
}

inline EvaluationReport evaluate_beats(std::span<const double> pred_beats, std::span<const double> truth_beats,
                                       std::span<const BlankRegion> blanks, std::span<const double> window_lengths,
                                       double stride_s = 1.0, const HrvConfig& hrv = {}) {
  if (truth_beats.size() < 2) throw Error(ErrorKind::insufficient_data, "reference needs at least 2 beats");
  if (pred_beats.empty() || pred_beats.back() < truth_beats.front() || pred_beats.front() > truth_beats.back()) {
    throw Error(ErrorKind::validation, "prediction and reference do not overlap in time");
  }
  EvaluationReport rep;
  for (double len : window_lengths) {
    const auto grid = reference_grid(truth_beats, len, stride_s);
    const auto truth = gt_reference(truth_beats, blanks, grid, hrv);
    const auto pred = beat_metrics(pred_beats, grid, {}, hrv);
    WindowScore ws;
    ws.window_s = len;
    if (!truth.hr.entries.empty()) {
      try {
        ws.hr = hr_mae(pred.hr, truth.hr);
      } catch (const Error&) {
        ws.hr = MaeResult{};  // no window overlaps: zero coverage
        ws.hr->mae = std::nan("");
        ws.hr->std = std::nan("");
      }
      ws.baseline = hr_mae(baseline_hr(truth.hr), truth.hr);
    }
    rep.windows.push_back(std::move(ws));
  }
  const auto truth_all = gt_reference(truth_beats, blanks, reference_grid(truth_beats, kInfiniteWindow, stride_s), hrv);
  const auto pred_all = beat_metrics(pred_beats, reference_grid(truth_beats, kInfiniteWindow, stride_s), {}, hrv);
  rep.reference_hrv = truth_all.hrv;
  rep.predicted_hrv = pred_all.hrv;
  rep.hrv.rmssd_ms = abs_diff(pred_all.hrv.rmssd_ms, truth_all.hrv.rmssd_ms);
  rep.hrv.sdnn_ms = abs_diff(pred_all.hrv.sdnn_ms, truth_all.hrv.sdnn_ms);
  rep.hrv.lf_nu = abs_diff(pred_all.hrv.lf_nu, truth_all.hrv.lf_nu);
  rep.hrv.hf_nu = abs_diff(pred_all.hrv.hf_nu, truth_all.hrv.hf_nu);
  rep.hrv.lf_hf = abs_diff(pred_all.hrv.lf_hf, truth_all.hrv.lf_hf);
  return rep;
}

struct SweepPoint {
  double window_s = 0.0;
  double mae = 0.0;
  std::optional<double> ratio;  // mae / mae(inf); empty when undefined
  bool exact = false;           // 0/0, reported as ratio 1
};

/// HR MAE for each window length, relative to the whole-recording error.
inline std::vector<SweepPoint> window_length_sweep(std::span<const double> pred_beats,
                                                   std::span<const double> truth_beats,
                                                   std::span<const double> lengths, double stride_s = 1.0) {
  if (lengths.size() < 2) throw Error(ErrorKind::validation, "window sweep needs >= 2 lengths");
  if (std::none_of(lengths.begin(), lengths.end(), [](double l) { return std::isinf(l); })) {
    throw Error(ErrorKind::validation, "window sweep needs the infinite window");
  }
  std::vector<SweepPoint> pts;
  for (double len : lengths) {
    const auto grid = reference_grid(truth_beats, len, stride_s);
    const auto truth = gt_reference(truth_beats, {}, grid);
    const auto pred = beat_metrics(pred_beats, grid);
    pts.push_back({len, hr_mae(pred.hr, truth.hr).mae, std::nullopt, false});
  }
  const double inf_mae = std::find_if(pts.begin(), pts.end(), [](auto& p) { return std::isinf(p.window_s); })->mae;
  for (auto& p : pts) {
    if (inf_mae > 0.0) {
      p.ratio = p.mae / inf_mae;
    } else if (p.mae == 0.0) {
      p.ratio = 1.0;
      p.exact = true;
    }
  }
  return pts;
}

struct DeviationReport {
  double hr_mae_bpm = 0.0;
  double hr_std_bpm = 0.0;
  double rmssd_mae_ms = 0.0;
  double rmssd_std_ms = 0.0;
  std::size_t raw_beats = 0;
  std::size_t cleaned_beats = 0;
};

/// Agreement between detector peaks on the raw waveform and cleaned peaks.
inline DeviationReport raw_vs_clean_deviation(const GroundTruthRecord& raw, std::span<const double> cleaned,
                                              std::span<const BlankRegion> blanks = {}, double window_s = 16.0,
                                              double stride_s = 1.0, const ProposalConfig& proposal = {}) {
  const auto raw_beats = propose_peaks(raw, proposal).beats;
  if (raw_beats.size() < 2) throw Error(ErrorKind::insufficient_data, "raw detector found < 2 peaks");
  const auto grid = reference_grid(cleaned, window_s, stride_s);
  const auto ref = gt_reference(cleaned, blanks, grid);
  const auto det = beat_metrics(raw_beats, grid);
  DeviationReport r;
  r.raw_beats = raw_beats.size();
  r.cleaned_beats = cleaned.size();
  const auto hr = hr_mae(det.hr, ref.hr);
  r.hr_mae_bpm = hr.mae;
  r.hr_std_bpm = hr.std;
  if (!ref.hrv.rmssd_ms || !det.hrv.rmssd_ms) throw Error(ErrorKind::insufficient_data, "RMSSD undefined");
  r.rmssd_mae_ms = std::abs(*det.hrv.rmssd_ms - *ref.hrv.rmssd_ms);
  return r;
}

/// Mean +- std across recordings, the way per-dataset deviations are quoted.
inline DeviationReport summarize_deviations(std::span<const DeviationReport> per_recording) {
  DeviationReport out;
  if (per_recording.empty()) return out;
  std::vector<double> hr, rm;
  for (const auto& d : per_recording) {
    hr.push_back(d.hr_mae_bpm);
    rm.push_back(d.rmssd_mae_ms);
    out.raw_beats += d.raw_beats;
    out.cleaned_beats += d.cleaned_beats;
  }
  out.hr_mae_bpm = stats::mean(hr);
  out.hr_std_bpm = stats::pstdev(hr);
  out.rmssd_mae_ms = stats::mean(rm);
  out.rmssd_std_ms = stats::pstdev(rm);
  return out;
}

}  // namespace pulse
