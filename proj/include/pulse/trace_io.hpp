#pragma once

// Trace and ground-truth waveform files, and resampling of irregular
// per-frame traces onto the fixed pipeline grid.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pulse/error.hpp"
#include "pulse/stats.hpp"

namespace pulse {

/// One video frame: mean RoI colour plus optional head pose (degrees).
struct FrameSample {
  double t = 0.0;
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  double yaw = 0.0;

  bool operator==(const FrameSample&) const = default;
};

struct SampleTrace {
  std::vector<FrameSample> samples;
  bool has_pose = false;
  std::string source_id;

  bool operator==(const SampleTrace&) const = default;
};

/// Fixed-rate sequence; sample k sits at t0 + k / rate.
struct UniformSignal {
  double t0 = 0.0;
  double rate = 1.0;
  std::vector<double> values;

  double time_at(std::size_t k) const { return t0 + static_cast<double>(k) / rate; }
  double duration() const { return static_cast<double>(values.size()) / rate; }
  std::size_t size() const { return values.size(); }

  bool operator==(const UniformSignal&) const = default;
};

enum class WaveformKind { ppg, ecg };

inline const char* to_string(WaveformKind k) { return k == WaveformKind::ppg ? "ppg" : "ecg"; }

struct GroundTruthRecord {
  UniformSignal waveform;
  WaveformKind kind = WaveformKind::ppg;
};

/// Resampled trace; pose channels empty when the trace has no pose.
struct ResampledTrace {
  double rate = 0.0;
  UniformSignal r, g, b;
  std::optional<UniformSignal> pitch, roll, yaw;
  std::size_t gap_count = 0;  // input steps longer than 1.5x the median step
  double max_gap_s = 0.0;

  bool has_pose() const { return pitch.has_value(); }
  std::size_t size() const { return r.values.size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Shortest decimal that parses back to the same double.
inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

/// Iterates over '\n'-separated lines, tracking 1-based line numbers.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) {
      line = text_.substr(pos_);
      pos_ = text_.size();
    } else {
      line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
    }
    ++line_no_;
    return true;
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline SampleTrace parse_trace(std::string_view text, std::string source_id = {}) {
  detail::LineReader reader(text);
  std::string_view line;
  while (reader.next(line) && detail::trim(line).empty()) {
  }
  if (detail::trim(line).empty()) throw ParseError(reader.line_no(), "missing header");

  const auto header = detail::split(line, ',');
  static constexpr std::string_view kColumns[] = {"t", "r", "g", "b", "pitch", "roll", "yaw"};
  if (header.size() != 4 && header.size() != 7) {
    throw ParseError(reader.line_no(), "header must be t,r,g,b[,pitch,roll,yaw]");
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] != kColumns[i]) {
      throw ParseError(reader.line_no(), "unexpected column '" + std::string(header[i]) + "'");
    }
  }
  const std::size_t arity = header.size();

  SampleTrace trace;
  trace.source_id = std::move(source_id);
  std::optional<bool> pose_present;
  while (reader.next(line)) {
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != arity) {
      throw ParseError(reader.line_no(), "expected " + std::to_string(arity) + " fields, got " +
                                             std::to_string(fields.size()));
    }
    double v[7] = {};
    for (std::size_t i = 0; i < 4; ++i) {
      const auto parsed = detail::parse_double(fields[i]);
      if (!parsed || !std::isfinite(*parsed)) {
        throw ParseError(reader.line_no(), "bad number in column '" + std::string(kColumns[i]) + "'");
      }
      v[i] = *parsed;
    }
    if (v[1] < 0 || v[2] < 0 || v[3] < 0) {
      throw Error(ErrorKind::validation,
                  "line " + std::to_string(reader.line_no()) + ": negative colour mean");
    }
    bool row_pose = false;
    if (arity == 7) {
      const std::size_t empty_count = static_cast<std::size_t>(
          std::count_if(fields.begin() + 4, fields.end(), [](auto f) { return f.empty(); }));
      if (empty_count != 0 && empty_count != 3) {
        throw Error(ErrorKind::validation, "line " + std::to_string(reader.line_no()) +
                                               ": pose columns must be all present or all absent");
      }
      row_pose = empty_count == 0;
      if (row_pose) {
        for (std::size_t i = 4; i < 7; ++i) {
          const auto parsed = detail::parse_double(fields[i]);
          if (!parsed || !std::isfinite(*parsed)) {
            throw ParseError(reader.line_no(),
                             "bad number in column '" + std::string(kColumns[i]) + "'");
          }
          v[i] = *parsed;
        }
      }
    }
    if (pose_present && *pose_present != row_pose) {
      throw Error(ErrorKind::validation, "line " + std::to_string(reader.line_no()) +
                                             ": mixed presence of pose columns");
    }
    pose_present = row_pose;
    if (!trace.samples.empty() && v[0] <= trace.samples.back().t) {
      throw Error(ErrorKind::validation,
                  "line " + std::to_string(reader.line_no()) + ": non-increasing timestamps");
    }
    trace.samples.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6]});
  }
  trace.has_pose = pose_present.value_or(arity == 7);
  return trace;
}

inline std::string serialize_trace(const SampleTrace& trace) {
  std::string out = trace.has_pose ? "t,r,g,b,pitch,roll,yaw\n" : "t,r,g,b\n";
  out.reserve(trace.samples.size() * 64);
  for (const auto& s : trace.samples) {
    detail::append_double(out, s.t);
    for (double v : {s.r, s.g, s.b}) {
      out.push_back(',');
      detail::append_double(out, v);
    }
    if (trace.has_pose) {
      for (double v : {s.pitch, s.roll, s.yaw}) {
        out.push_back(',');
        detail::append_double(out, v);
      }
    }
    out.push_back('\n');
  }
  return out;
}

/// Median instantaneous frame rate; 30 Hz up to and including 45 fps, else 60.
inline double choose_pipeline_rate(const SampleTrace& trace) {
  if (trace.samples.size() < 2) {
    throw Error(ErrorKind::insufficient_data, "need at least 2 samples to estimate frame rate");
  }
  std::vector<double> rates;
  rates.reserve(trace.samples.size() - 1);
  for (std::size_t i = 1; i < trace.samples.size(); ++i) {
    rates.push_back(1.0 / (trace.samples[i].t - trace.samples[i - 1].t));
  }
  return stats::median(std::move(rates)) <= 45.0 ? 30.0 : 60.0;
}

/// Output length floor((t_last - t_first) * rate) + 1, a 1e-9 slack absorbs
/// decimal timestamps such as 0.1 * 30 evaluating to 2.999...
inline std::size_t resampled_length(double t_first, double t_last, double rate) {
  return static_cast<std::size_t>(std::floor((t_last - t_first) * rate + 1e-9)) + 1;
}

/// Linear interpolation onto t_first + k / rate; never extrapolates past the
/// last input sample.
inline ResampledTrace resample_uniform(const SampleTrace& trace, double rate) {
  if (trace.samples.empty()) throw Error(ErrorKind::insufficient_data, "empty trace");
  if (!(rate > 0.0)) throw Error(ErrorKind::validation, "rate must be positive");

  const auto& s = trace.samples;
  const double t0 = s.front().t;
  const std::size_t n = resampled_length(t0, s.back().t, rate);

  ResampledTrace out;
  out.rate = rate;
  auto init = [&](UniformSignal& u) {
    u.t0 = t0;
    u.rate = rate;
    u.values.resize(n);
  };
  init(out.r);
  init(out.g);
  init(out.b);
  if (trace.has_pose) {
    out.pitch.emplace();
    out.roll.emplace();
    out.yaw.emplace();
    init(*out.pitch);
    init(*out.roll);
    init(*out.yaw);
  }

  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = t0 + static_cast<double>(k) / rate;
    while (j + 1 < s.size() - 1 && s[j + 1].t <= t) ++j;
    double w = 0.0;
    std::size_t j1 = j;
    if (s.size() > 1) {
      j1 = j + 1;
      w = std::clamp((t - s[j].t) / (s[j1].t - s[j].t), 0.0, 1.0);
    }
    auto lerp = [&](double a, double b) { return a + w * (b - a); };
    out.r.values[k] = lerp(s[j].r, s[j1].r);
    out.g.values[k] = lerp(s[j].g, s[j1].g);
    out.b.values[k] = lerp(s[j].b, s[j1].b);
    if (trace.has_pose) {
      out.pitch->values[k] = lerp(s[j].pitch, s[j1].pitch);
      out.roll->values[k] = lerp(s[j].roll, s[j1].roll);
      out.yaw->values[k] = lerp(s[j].yaw, s[j1].yaw);
    }
  }

  if (s.size() > 2) {
    std::vector<double> steps;
    steps.reserve(s.size() - 1);
    for (std::size_t i = 1; i < s.size(); ++i) steps.push_back(s[i].t - s[i - 1].t);
    const double med = stats::median(steps);
    for (double dt : steps) {
      if (dt > 1.5 * med) {
        ++out.gap_count;
        out.max_gap_s = std::max(out.max_gap_s, dt);
      }
    }
  }
  return out;
}

/// GT waveform: "# rate=<Hz> kind=<ppg|ecg>" then t,v rows (optional "t,v"
/// header line).
inline GroundTruthRecord parse_gt_waveform(std::string_view text) {
  detail::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line)) throw ParseError(1, "empty file");
  line = detail::trim(line);
  if (line.empty() || line.front() != '#') throw ParseError(1, "missing '# rate=... kind=...' header");

  std::optional<double> rate;
  std::optional<WaveformKind> kind;
  line.remove_prefix(1);
  for (auto tok : detail::split(line, ' ')) {
    if (tok.empty()) continue;
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) throw ParseError(1, "bad header token '" + std::string(tok) + "'");
    const auto key = tok.substr(0, eq);
    const auto val = tok.substr(eq + 1);
    if (key == "rate") {
      rate = detail::parse_double(val);
      if (!rate) throw ParseError(1, "bad rate");
    } else if (key == "kind") {
      if (val == "ppg") kind = WaveformKind::ppg;
      else if (val == "ecg") kind = WaveformKind::ecg;
      else throw ParseError(1, "kind must be ppg or ecg");
    }
  }
  if (!rate) throw Error(ErrorKind::validation, "missing rate in header");
  if (!(*rate > 0.0) || !std::isfinite(*rate)) throw Error(ErrorKind::validation, "rate must be positive");
  if (!kind) throw Error(ErrorKind::validation, "missing kind in header");

  GroundTruthRecord rec;
  rec.kind = *kind;
  rec.waveform.rate = *rate;
  bool first = true;
  while (reader.next(line)) {
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() == 2 && fields[0] == "t" && fields[1] == "v" && rec.waveform.values.empty()) continue;
    if (fields.size() != 2) throw ParseError(reader.line_no(), "expected t,v");
    const auto t = detail::parse_double(fields[0]);
    const auto v = detail::parse_double(fields[1]);
    if (!t || !v) throw ParseError(reader.line_no(), "bad number");
    if (!std::isfinite(*t) || !std::isfinite(*v)) {
      throw Error(ErrorKind::validation,
                  "line " + std::to_string(reader.line_no()) + ": non-finite sample");
    }
    if (first) {
      rec.waveform.t0 = *t;
      first = false;
    }
    rec.waveform.values.push_back(*v);
  }
  return rec;
}

inline std::string serialize_gt_waveform(const GroundTruthRecord& rec) {
  std::string out = "# rate=";
  detail::append_double(out, rec.waveform.rate);
  out += " kind=";
  out += to_string(rec.kind);
  out += "\nt,v\n";
  for (std::size_t k = 0; k < rec.waveform.values.size(); ++k) {
    detail::append_double(out, rec.waveform.time_at(k));
    out.push_back(',');
    detail::append_double(out, rec.waveform.values[k]);
    out.push_back('\n');
  }
  return out;
}

}  // namespace pulse
