#pragma once

// JSON documents written by the CLI: analysis results, evaluation reports,
// bench reports, and the pipeline config file. Key order is fixed so equal
// inputs give byte-identical files.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pulse/error.hpp"
#include "pulse/evaluation.hpp"
#include "pulse/pipeline.hpp"

namespace pulse {

using ojson = nlohmann::ordered_json;

inline constexpr std::string_view kResultFormat = "pulse-result/1";
inline constexpr std::string_view kEvaluationFormat = "pulse-evaluation/1";

/// Window lengths print as numbers, the infinite window as "inf".
inline ojson window_to_json(double w) { return std::isinf(w) ? ojson("inf") : ojson(w); }

inline double window_from_string(std::string_view s) {
  if (s == "inf" || s == "∞") return kInfiniteWindow;
  const auto v = detail::parse_double(s);
  if (!v || !(*v > 0.0)) throw Error(ErrorKind::validation, "bad window length '" + std::string(s) + "'");
  return *v;
}

inline double window_from_json(const nlohmann::json& j) {
  if (j.is_string()) return window_from_string(j.get<std::string>());
  return j.get<double>();
}

inline ojson opt_to_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

inline ojson to_json(const HrvReport& h) {
  ojson j;
  j["rmssd_ms"] = opt_to_json(h.rmssd_ms);
  j["sdnn_ms"] = opt_to_json(h.sdnn_ms);
  j["lf_nu"] = opt_to_json(h.lf_nu);
  j["hf_nu"] = opt_to_json(h.hf_nu);
  j["lf_hf"] = opt_to_json(h.lf_hf);
  j["n_ibis_used"] = h.n_ibis_used;
  return j;
}

inline ojson to_json(const PipelineConfig& c) {
  ojson j;
  j["window_s"] = c.window_s;
  j["hop_s"] = c.hop_s;
  j["band_lo_hz"] = c.band.lo;
  j["band_hi_hz"] = c.band.hi;
  j["narrow_bw_hz"] = c.narrow_bw_hz;
  j["peak_delta"] = c.peak_delta;
  j["hr_window_s"] = window_to_json(c.hr_window_s);
  j["hr_stride_s"] = c.hr_stride_s;
  j["motion_suppression"] = c.motion_suppression;
  j["detrend_lambda"] = c.detrend_lambda;
  j["refine_peaks"] = c.refine_peaks;
  j["rate"] = opt_to_json(c.rate);
  return j;
}

/// Reads a config file; absent keys keep their defaults.
inline PipelineConfig parse_config(std::string_view text, PipelineConfig c = {}) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw Error(ErrorKind::validation, "config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
      if (key == "window_s") c.window_s = v.get<double>();
      else if (key == "hop_s") c.hop_s = v.get<double>();
      else if (key == "band_lo_hz") c.band.lo = v.get<double>();
      else if (key == "band_hi_hz") c.band.hi = v.get<double>();
      else if (key == "narrow_bw_hz") c.narrow_bw_hz = v.get<double>();
      else if (key == "peak_delta") c.peak_delta = v.get<double>();
      else if (key == "hr_window_s") c.hr_window_s = window_from_json(v);
      else if (key == "hr_stride_s") c.hr_stride_s = v.get<double>();
      else if (key == "motion_suppression") c.motion_suppression = v.get<bool>();
      else if (key == "detrend_lambda") c.detrend_lambda = v.get<double>();
      else if (key == "refine_peaks") c.refine_peaks = v.get<bool>();
      else if (key == "rate") c.rate = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else throw Error(ErrorKind::validation, "unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ojson timing_to_json(const std::map<std::string, StageTiming>& timing, std::size_t frames) {
  ojson j = ojson::object();
  for (const auto& s : summarize_timing(timing, frames)) {
    j[s.stage] = {{"calls", s.samples},
                  {"total_ms", s.total_ms},
                  {"per_frame_ms", s.per_frame_mean_ms},
                  {"per_call_mean_ms", s.per_call_mean_ms},
                  {"per_call_std_ms", s.per_call_std_ms}};
  }
  return j;
}

inline ojson to_json(const AnalysisResult& r) {
  ojson j;
  j["format"] = kResultFormat;
  j["source_id"] = r.meta.source_id;
  const auto& m = r.meta;
  j["meta"] = {{"rate_hz", m.rate},
               {"t0", m.t0},
               {"frames", m.n_frames},
               {"samples", m.n_samples},
               {"window_samples", m.window_samples},
               {"hop_samples", m.hop_samples},
               {"windows", m.windows},
               {"skipped_windows", m.skipped_windows},
               {"uncovered_samples", m.uncovered_samples},
               {"gap_count", m.gap_count},
               {"max_gap_s", m.max_gap_s},
               {"has_pose", m.has_pose}};
  j["config"] = to_json(r.config);
  j["beats"] = r.beats;
  j["hr_overall_bpm"] = opt_to_json(r.hr_overall_bpm);
  auto hr = ojson::array();
  for (const auto& e : r.hr_series.entries) {
    hr.push_back({{"center_s", e.window_center}, {"bpm", e.bpm}, {"n_ibis", e.n_ibis}});
  }
  j["hr_window_s"] = window_to_json(r.config.hr_window_s);
  j["hr_series"] = std::move(hr);
  j["hrv"] = to_json(r.hrv);
  j["timing"] = timing_to_json(r.timing, r.meta.n_frames);
  return j;
}

inline std::string serialize_result(const AnalysisResult& r) { return to_json(r).dump(2) + "\n"; }

/// Same document with the timing block removed, for determinism checks.
inline std::string serialize_result_untimed(const AnalysisResult& r) {
  auto j = to_json(r);
  j.erase("timing");
  return j.dump(2) + "\n";
}

/// The parts of a result file the evaluator needs.
struct ResultFile {
  std::string source_id;
  std::vector<double> beats;
  std::optional<double> hr_overall_bpm;
};

inline ResultFile parse_result(std::string_view text) {
  ResultFile f;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string{}) != kResultFormat) throw Error(ErrorKind::validation, "not a result file");
    f.source_id = j.value("source_id", std::string{});
    f.beats = j.at("beats").get<std::vector<double>>();
    if (!j.at("hr_overall_bpm").is_null()) f.hr_overall_bpm = j.at("hr_overall_bpm").get<double>();
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string("result file: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, std::string("result file: ") + e.what());
  }
  return f;
}

inline ojson mae_to_json(const std::optional<MaeResult>& m) {
  if (!m) return nullptr;
  auto num = [](double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); };
  return {{"mae_bpm", num(m->mae)}, {"std_abs_bpm", num(m->std)}, {"coverage", m->coverage}, {"windows", m->matched}};
}

inline ojson to_json(const EvaluationReport& r) {
  ojson j;
  j["format"] = kEvaluationFormat;
  auto w = ojson::array();
  for (const auto& s : r.windows) {
    w.push_back({{"window_s", window_to_json(s.window_s)}, {"hr", mae_to_json(s.hr)}, {"baseline_75bpm", mae_to_json(s.baseline)}});
  }
  j["hr"] = std::move(w);
  j["hrv_abs_error"] = {{"rmssd_ms", opt_to_json(r.hrv.rmssd_ms)},
                        {"sdnn_ms", opt_to_json(r.hrv.sdnn_ms)},
                        {"lf_nu", opt_to_json(r.hrv.lf_nu)},
                        {"hf_nu", opt_to_json(r.hrv.hf_nu)},
                        {"lf_hf", opt_to_json(r.hrv.lf_hf)}};
  j["predicted_hrv"] = to_json(r.predicted_hrv);
  j["reference_hrv"] = to_json(r.reference_hrv);
  return j;
}

/// Per-window absolute errors as CSV: window_s,center_s,abs_err_bpm.
inline std::string window_errors_csv(const EvaluationReport& r) {
  std::string out = "window_s,center_s,abs_err_bpm\n";
  for (const auto& s : r.windows) {
    if (!s.hr) continue;
    for (const auto& [c, e] : s.hr->errors) {
      out += std::isinf(s.window_s) ? std::string("inf") : std::string();
      if (!std::isinf(s.window_s)) detail::append_double(out, s.window_s);
      out.push_back(',');
      detail::append_double(out, c);
      out.push_back(',');
      detail::append_double(out, e);
      out.push_back('\n');
    }
  }
  return out;
}

inline ojson to_json(const BenchReport& b) {
  ojson j;
  j["frames"] = b.frames;
  j["duration_s"] = b.duration_s;
  j["runs"] = b.run_wall_ms.size();
  j["wall_mean_ms"] = b.wall_mean_ms;
  j["wall_std_ms"] = b.wall_std_ms;
  j["per_frame_ms"] = b.per_frame_ms;
  j["realtime_factor"] = b.realtime_factor;
  auto stages = ojson::array();
  for (const auto& s : b.stages) {
    stages.push_back({{"stage", s.stage},
                      {"calls", s.samples},
                      {"total_ms", s.total_ms},
                      {"per_frame_ms", s.per_frame_mean_ms},
                      {"per_call_mean_ms", s.per_call_mean_ms},
                      {"per_call_std_ms", s.per_call_std_ms}});
  }
  j["stages"] = std::move(stages);
  return j;
}

}  // namespace pulse
