#pragma once

// Synthetic RGB/pose traces with exactly known beats. Every end-to-end
// check runs against these instead of recorded datasets.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pulse/beat_analysis.hpp"
#include "pulse/error.hpp"
#include "pulse/hrv_metrics.hpp"
#include "pulse/trace_io.hpp"

namespace pulse {

/// How head motion leaks into the colour channels.
///  none       - pose channels only
///  intensity  - equal relative modulation of R, G and B
///  chromatic  - modulation along the pulse colour direction
enum class MotionCoupling { none, intensity, chromatic };

struct MotionConfig {
  double freq_hz = 1.5;
  double amplitude = 0.015;  // relative channel modulation
  MotionCoupling coupling = MotionCoupling::chromatic;
  double pose_amplitude_deg = 5.0;
};

struct SynthConfig {
  double duration_s = 300.0;
  double rate = 30.0;
  double mean_hr_bpm = 72.0;
  double ibi_mod_freq_hz = 0.0;
  double ibi_mod_amp_ms = 0.0;
  std::optional<std::vector<double>> explicit_ibis_ms;
  double pulse_amplitude = 0.005;
  std::optional<MotionConfig> motion;
  double noise_sigma = 0.0;  // per-channel white noise, 0-255 units
  bool with_pose = false;    // emit (zero) pose columns even without motion
  std::uint64_t seed = 1;
};

struct SynthBeats {
  std::vector<double> ibis_ms;
  std::vector<double> beats;  // beats.size() == ibis_ms.size() + 1
};

struct SynthOutput {
  SampleTrace trace;
  BeatSeries truth_beats;
  std::vector<double> truth_ibis_ms;
  HrvReport truth_hrv;
};

inline constexpr double kBaseRgb[3] = {120.0, 100.0, 90.0};

/// Unit pulse direction in RGB space.
inline std::array<double, 3> pulse_direction() {
  const double v[3] = {0.33, 0.77, 0.53};
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

/// IBI_k = 60000/hr + amp * sin(2 pi f t_k), beats from t = 0 up to duration.
inline SynthBeats synth_ibis(const SynthConfig& cfg) {
  if (!(cfg.duration_s > 0.0)) throw Error(ErrorKind::validation, "duration must be positive");
  if (cfg.ibi_mod_amp_ms < 0.0 || cfg.pulse_amplitude < 0.0 || cfg.noise_sigma < 0.0) {
    throw Error(ErrorKind::validation, "amplitudes must be non-negative");
  }
  auto check = [](double ibi) {
    if (!(ibi > 250.0 && ibi < 2000.0)) {
      throw Error(ErrorKind::validation, "IBI " + std::to_string(ibi) + " ms outside (250, 2000)");
    }
  };

  SynthBeats out;
  out.beats.push_back(0.0);
  if (cfg.explicit_ibis_ms) {
    for (double ibi : *cfg.explicit_ibis_ms) {
      check(ibi);
      const double next = out.beats.back() + ibi / 1000.0;
      if (next > cfg.duration_s) break;
      out.ibis_ms.push_back(ibi);
      out.beats.push_back(next);
    }
    return out;
  }

  if (!(cfg.mean_hr_bpm >= 42.0 && cfg.mean_hr_bpm <= 240.0)) {
    throw Error(ErrorKind::validation, "mean HR outside [42, 240] bpm");
  }
  const double base = 60000.0 / cfg.mean_hr_bpm;
  check(base - cfg.ibi_mod_amp_ms);
  check(base + cfg.ibi_mod_amp_ms);
  while (true) {
    const double t = out.beats.back();
    const double ibi = base + cfg.ibi_mod_amp_ms * std::sin(2.0 * std::numbers::pi * cfg.ibi_mod_freq_hz * t);
    const double next = t + ibi / 1000.0;
    if (next > cfg.duration_s + 1e-9) break;
    out.ibis_ms.push_back(ibi);
    out.beats.push_back(next);
  }
  return out;
}

inline SynthOutput synth_trace(const SynthConfig& cfg) {
  if (!(cfg.rate > 0.0)) throw Error(ErrorKind::validation, "rate must be positive");
  const auto sb = synth_ibis(cfg);
  const auto dir = pulse_direction();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  SynthOutput out;
  out.trace.has_pose = cfg.motion.has_value() || cfg.with_pose;
  out.trace.source_id = "synth";
  const auto n = static_cast<std::size_t>(std::floor(cfg.duration_s * cfg.rate + 1e-9)) + 1;
  out.trace.samples.reserve(n);

  const double last_ibi_s = sb.ibis_ms.empty() ? 60.0 / cfg.mean_hr_bpm : sb.ibis_ms.back() / 1000.0;
  std::size_t beat = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / cfg.rate;
    while (beat + 1 < sb.beats.size() && sb.beats[beat + 1] <= t) ++beat;
    const double start = sb.beats[beat];
    const double len = beat + 1 < sb.beats.size() ? sb.beats[beat + 1] - start : last_ibi_s;
    const double phase = std::fmod((t - start) / len, 1.0);
    const double p = std::cos(2.0 * std::numbers::pi * phase) + 0.3 * std::cos(4.0 * std::numbers::pi * phase);

    double m = 0.0;
    if (cfg.motion) m = std::sin(2.0 * std::numbers::pi * cfg.motion->freq_hz * t);

    double c[3];
    for (int ch = 0; ch < 3; ++ch) {
      c[ch] = kBaseRgb[ch] * (1.0 + cfg.pulse_amplitude * dir[ch] * p);
      if (cfg.motion) {
        if (cfg.motion->coupling == MotionCoupling::intensity) {
          c[ch] *= 1.0 + cfg.motion->amplitude * m;
        } else if (cfg.motion->coupling == MotionCoupling::chromatic) {
          c[ch] += kBaseRgb[ch] * cfg.motion->amplitude * dir[ch] * m;
        }
      }
    }
    if (cfg.noise_sigma > 0.0) {
      for (double& v : c) v += cfg.noise_sigma * noise(rng);
    }
    FrameSample s{t, std::max(0.0, c[0]), std::max(0.0, c[1]), std::max(0.0, c[2])};
    if (cfg.motion) {
      const double a = cfg.motion->pose_amplitude_deg * m;
      s.pitch = a;
      s.roll = 0.6 * a;
      s.yaw = 0.3 * a;
    }
    out.trace.samples.push_back(s);
  }

  out.truth_beats = {sb.beats, BeatSource::ground_truth};
  out.truth_ibis_ms = sb.ibis_ms;
  out.truth_hrv = compute_hrv(filter_ibis(ibis_from_beats(sb.beats)));
  return out;
}

/// Fingertip-style reference waveform whose maxima sit on the given beats.
inline GroundTruthRecord synth_ppg(std::span<const double> beats, double duration_s, double rate = 64.0) {
  if (beats.size() < 2) throw Error(ErrorKind::validation, "need at least 2 beats");
  GroundTruthRecord rec;
  rec.kind = WaveformKind::ppg;
  rec.waveform = {0.0, rate, {}};
  const auto n = static_cast<std::size_t>(std::floor(duration_s * rate + 1e-9)) + 1;
  std::size_t beat = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    while (beat + 2 < beats.size() && beats[beat + 1] <= t) ++beat;
    const double phase = (t - beats[beat]) / (beats[beat + 1] - beats[beat]);
    rec.waveform.values.push_back(std::cos(2.0 * std::numbers::pi * phase) +
                                  0.3 * std::cos(4.0 * std::numbers::pi * phase));
  }
  return rec;
}

/// Named configurations used by the CLI and the acceptance suite.
inline SynthConfig synth_preset(std::string_view name) {
  SynthConfig c;
  if (name == "clean72") return c;
  if (name == "clean60") {
    c.mean_hr_bpm = 60.0;
    return c;
  }
  if (name == "hrv-lf" || name == "hrv-hf") {
    c.mean_hr_bpm = 60.0;
    c.ibi_mod_freq_hz = name == "hrv-lf" ? 0.1 : 0.3;
    c.ibi_mod_amp_ms = 50.0;
    return c;
  }
  if (name == "motion" || name == "motion-intensity") {
    c.mean_hr_bpm = 60.0;
    MotionConfig m;
    m.freq_hz = 1.5;
    m.amplitude = 3.0 * c.pulse_amplitude;
    m.coupling = name == "motion" ? MotionCoupling::chromatic : MotionCoupling::intensity;
    c.motion = m;
    return c;
  }
  if (name == "noisy") {
    c.noise_sigma = 0.3;
    return c;
  }
  throw Error(ErrorKind::validation, "unknown synth preset '" + std::string(name) + "'");
}

}  // namespace pulse
