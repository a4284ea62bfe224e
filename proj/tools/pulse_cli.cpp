// pulse: command-line front end for the rPPG engine.

#include <pthread.h>
#include <signal.h>

#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "pulse/annotator_server.hpp"
#include "pulse/report_io.hpp"
#include "pulse/synth.hpp"

namespace fs = std::filesystem;
using namespace pulse;

namespace {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

Level log_level() {
  const char* env = std::getenv("PULSE_LOG");
  if (!env) return Level::warn;
  const std::string v = env;
  if (v == "error") return Level::error;
  if (v == "info") return Level::info;
  if (v == "debug") return Level::debug;
  return Level::warn;
}

const char* level_name(Level l) {
  switch (l) {
    case Level::error: return "error";
    case Level::warn: return "warn";
    case Level::info: return "info";
    case Level::debug: return "debug";
  }
  return "info";
}

std::mutex g_log_mutex;

// One JSON object per line on stderr.
void log(Level l, const std::string& msg, nlohmann::ordered_json extra = nlohmann::ordered_json::object()) {
  if (static_cast<int>(l) > static_cast<int>(log_level())) return;
  nlohmann::ordered_json j;
  j["level"] = level_name(l);
  j["message"] = msg;
  for (auto& [k, v] : extra.items()) j[k] = v;
  std::lock_guard lock(g_log_mutex);
  std::cerr << j.dump() << '\n';
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::parse:
    case ErrorKind::validation:
    case ErrorKind::degenerate:
    case ErrorKind::not_found:
    case ErrorKind::version_conflict: return 2;
    case ErrorKind::insufficient_data: return 3;
    case ErrorKind::runtime: return 4;
  }
  return 4;
}

void write_output(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file_atomic(p, content);
}

std::vector<double> parse_windows(const std::string& csv) {
  std::vector<double> out;
  for (auto tok : detail::split(csv, ',')) out.push_back(window_from_string(detail::trim(tok)));
  if (out.empty()) throw Error(ErrorKind::validation, "no window lengths given");
  return out;
}

// analyze ------------------------------------------------------------------

struct AnalyzeArgs {
  std::vector<std::string> traces;
  std::string out;
  std::optional<double> hop_s;
  std::optional<std::string> hr_window;
  bool no_motion_suppression = false;
  std::string config;
  unsigned jobs = 0;
};

std::string analyze_one(const std::string& path, const PipelineConfig& cfg) {
  const auto trace = parse_trace(read_file(path), fs::path(path).stem().string());
  const auto res = analyze(trace, cfg);
  log(Level::info, "analyzed", {{"trace", path},
                                {"beats", res.beats.size()},
                                {"hr_bpm", opt_to_json(res.hr_overall_bpm)},
                                {"windows", res.meta.windows}});
  return serialize_result(res);
}

int run_analyze(const AnalyzeArgs& a) {
  PipelineConfig cfg;
  if (!a.config.empty()) cfg = parse_config(read_file(a.config));
  if (a.hop_s) cfg.hop_s = *a.hop_s;
  if (a.hr_window) cfg.hr_window_s = window_from_string(*a.hr_window);
  if (a.no_motion_suppression) cfg.motion_suppression = false;
  cfg.validate();

  if (a.traces.size() == 1) {
    write_output(a.out, analyze_one(a.traces.front(), cfg));
    return 0;
  }
  // Several traces: --out is a directory, one worker per trace up to --jobs.
  fs::create_directories(a.out);
  const unsigned jobs = a.jobs ? a.jobs : std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::future<std::string>> pending;
  int status = 0;
  auto drain = [&](std::size_t keep) {
    while (pending.size() > keep) {
      try {
        pending.front().get();
      } catch (const Error& e) {
        log(Level::error, e.what(), {{"kind", to_string(e.kind())}});
        status = std::max(status, exit_code(e.kind()));
      }
      pending.erase(pending.begin());
    }
  };
  for (const auto& path : a.traces) {
    drain(jobs - 1);
    pending.push_back(std::async(std::launch::async, [&cfg, path, out = a.out] {
      try {
        const auto text = analyze_one(path, cfg);
        write_file_atomic(fs::path(out) / (fs::path(path).stem().string() + ".result.json"), text);
        return path;
      } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
      }
    }));
  }
  drain(0);
  return status;
}

// evaluate -----------------------------------------------------------------

int run_evaluate(const std::string& result, const std::string& truth, const std::string& windows,
                 const std::string& out, const std::string& errors_csv, double stride) {
  const auto pred = parse_result(read_file(result));
  const auto ref = parse_annotations(read_file(truth));
  const auto lengths = parse_windows(windows);
  const auto rep = evaluate_beats(pred.beats, ref.peaks, ref.blank_regions, lengths, stride);
  write_output(out, to_json(rep).dump(2) + "\n");
  if (!errors_csv.empty()) write_output(errors_csv, window_errors_csv(rep));
  return 0;
}

// simulate -----------------------------------------------------------------

struct SimArgs {
  std::string preset;
  std::optional<double> hr, ibi_mod_freq, ibi_mod_amp, motion_freq, motion_amp, noise, duration, rate, pulse_amp;
  std::optional<std::uint64_t> seed;
  std::string coupling = "chromatic";
  std::string out;
  std::string created_at = "1970-01-01T00:00:00Z";
};

int run_simulate(const SimArgs& a) {
  SynthConfig c = a.preset.empty() ? SynthConfig{} : synth_preset(a.preset);
  if (a.hr) c.mean_hr_bpm = *a.hr;
  if (a.ibi_mod_freq) c.ibi_mod_freq_hz = *a.ibi_mod_freq;
  if (a.ibi_mod_amp) c.ibi_mod_amp_ms = *a.ibi_mod_amp;
  if (a.noise) c.noise_sigma = *a.noise;
  if (a.duration) c.duration_s = *a.duration;
  if (a.rate) c.rate = *a.rate;
  if (a.pulse_amp) c.pulse_amplitude = *a.pulse_amp;
  if (a.seed) c.seed = *a.seed;
  if (a.motion_freq || a.motion_amp) {
    MotionConfig m = c.motion.value_or(MotionConfig{});
    if (a.motion_freq) m.freq_hz = *a.motion_freq;
    if (a.motion_amp) m.amplitude = *a.motion_amp;
    if (a.coupling == "none") m.coupling = MotionCoupling::none;
    else if (a.coupling == "intensity") m.coupling = MotionCoupling::intensity;
    else if (a.coupling == "chromatic") m.coupling = MotionCoupling::chromatic;
    else throw Error(ErrorKind::validation, "coupling must be none, intensity or chromatic");
    c.motion = m;
  }
  const auto s = synth_trace(c);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_file_atomic(dir / "trace.csv", serialize_trace(s.trace));

  AnnotationFile truth;
  truth.version = 0;
  truth.signal_id = "ppg";
  truth.kind = "ppg";
  truth.peaks = s.truth_beats.beats;
  truth.annotator = "synth";
  truth.created_at = a.created_at;
  write_file_atomic(dir / "truth.annotations.json", serialize_annotations(truth));
  write_file_atomic(dir / "ppg.txt", serialize_gt_waveform(synth_ppg(s.truth_beats.beats, c.duration_s)));
  log(Level::info, "simulated", {{"out", dir.string()}, {"beats", s.truth_beats.beats.size()}});
  return 0;
}

// bench --------------------------------------------------------------------

int run_bench(const std::string& trace, const std::string& preset, std::size_t runs, const std::string& out) {
  SampleTrace t;
  if (!trace.empty()) t = parse_trace(read_file(trace), fs::path(trace).stem().string());
  else t = synth_trace(synth_preset(preset)).trace;
  const auto rep = bench(t, PipelineConfig{}, runs);
  write_output(out, to_json(rep).dump(2) + "\n");
  return 0;
}

// clean --------------------------------------------------------------------

int run_clean(const std::vector<std::string>& signals, int port, const std::string& host, const std::string& store,
              const std::string& ui, const std::string& annotator) {
  // Block termination signals before any thread starts; a dedicated thread
  // waits for them and stops the server.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  AnnotatorService::Options opts;
  opts.store = store;
  opts.annotator = annotator;
  opts.created_at = "";
  AnnotatorService svc(opts);
  for (const auto& s : signals) svc.open_signal(s);

  httplib::Server server;
  bind_routes(server, svc, ui);
  if (!server.bind_to_port(host, port)) {
    throw Error(ErrorKind::runtime, "cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
  }
  log(Level::warn, "serving", {{"host", host}, {"port", port}, {"sessions", svc.session_ids()}});

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    log(Level::info, "shutting down", {{"signal", sig}});
    server.stop();
  });
  server.listen_after_bind();
  svc.persist_all();
  // If listen returned for a reason other than a signal, release the waiter.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pulse: remote photoplethysmography engine"};
  app.require_subcommand(1);

  AnalyzeArgs aa;
  auto* analyze_cmd = app.add_subcommand("analyze", "Extract beats, HR and HRV from RGB traces");
  analyze_cmd->add_option("--trace", aa.traces, "Trace CSV (repeatable)")->required();
  analyze_cmd->add_option("--out", aa.out, "Result file, or directory for several traces")->required();
  analyze_cmd->add_option("--hop-s", aa.hop_s, "Window hop in seconds");
  analyze_cmd->add_option("--hr-window", aa.hr_window, "HR window: 15, 30, 16 or inf");
  analyze_cmd->add_flag("--no-motion-suppression", aa.no_motion_suppression);
  analyze_cmd->add_option("--config", aa.config, "Pipeline config JSON");
  analyze_cmd->add_option("--jobs", aa.jobs, "Parallel workers for several traces");

  std::string ev_result, ev_truth, ev_windows = "15,30,inf", ev_out, ev_csv;
  double ev_stride = 1.0;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a result against cleaned annotations");
  eval_cmd->add_option("--result", ev_result)->required();
  eval_cmd->add_option("--truth", ev_truth, "Annotation file")->required();
  eval_cmd->add_option("--windows", ev_windows, "Comma-separated window lengths");
  eval_cmd->add_option("--out", ev_out)->required();
  eval_cmd->add_option("--errors-csv", ev_csv, "Per-window absolute errors");
  eval_cmd->add_option("--stride", ev_stride, "Window stride in seconds");

  std::vector<std::string> cl_signals;
  int cl_port = 8080;
  std::string cl_host = "127.0.0.1", cl_store, cl_ui, cl_annotator;
  auto* clean_cmd = app.add_subcommand("clean", "Serve the ground-truth cleaning API");
  clean_cmd->add_option("--signal", cl_signals, "GT waveform file (repeatable)")->required();
  clean_cmd->add_option("--port", cl_port);
  clean_cmd->add_option("--host", cl_host);
  clean_cmd->add_option("--store", cl_store, "Session store directory")->required();
  clean_cmd->add_option("--ui", cl_ui, "Static UI directory");
  clean_cmd->add_option("--annotator", cl_annotator);

  SimArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Write a synthetic trace and its truth annotations");
  sim_cmd->add_option("--preset", sa.preset, "clean72, clean60, hrv-lf, hrv-hf, motion, motion-intensity, noisy");
  sim_cmd->add_option("--hr", sa.hr, "Mean HR in bpm");
  sim_cmd->add_option("--ibi-mod-freq", sa.ibi_mod_freq);
  sim_cmd->add_option("--ibi-mod-amp", sa.ibi_mod_amp);
  sim_cmd->add_option("--motion-freq", sa.motion_freq);
  sim_cmd->add_option("--motion-amp", sa.motion_amp);
  sim_cmd->add_option("--motion-coupling", sa.coupling);
  sim_cmd->add_option("--noise", sa.noise);
  sim_cmd->add_option("--duration", sa.duration);
  sim_cmd->add_option("--rate", sa.rate);
  sim_cmd->add_option("--pulse-amp", sa.pulse_amp);
  sim_cmd->add_option("--seed", sa.seed);
  sim_cmd->add_option("--created-at", sa.created_at);
  sim_cmd->add_option("--out", sa.out, "Output directory")->required();

  std::string bn_trace, bn_preset, bn_out = "-";
  std::size_t bn_runs = 3;
  auto* bench_cmd = app.add_subcommand("bench", "Time the pipeline per stage");
  auto* bt = bench_cmd->add_option("--trace", bn_trace);
  auto* bp = bench_cmd->add_option("--synth-preset", bn_preset);
  bt->excludes(bp);
  bench_cmd->add_option("--runs", bn_runs);
  bench_cmd->add_option("--out", bn_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*analyze_cmd) return run_analyze(aa);
    if (*eval_cmd) return run_evaluate(ev_result, ev_truth, ev_windows, ev_out, ev_csv, ev_stride);
    if (*clean_cmd) return run_clean(cl_signals, cl_port, cl_host, cl_store, cl_ui, cl_annotator);
    if (*sim_cmd) return run_simulate(sa);
    if (*bench_cmd) {
      if (bn_trace.empty() && bn_preset.empty()) throw Error(ErrorKind::validation, "bench needs --trace or --synth-preset");
      return run_bench(bn_trace, bn_preset, bn_runs, bn_out);
    }
  } catch (const ParseError& e) {
    log(Level::error, e.what(), {{"kind", "parse"}, {"line", e.line()}});
    return exit_code(e.kind());
  } catch (const StageError& e) {
    log(Level::error, e.what(), {{"kind", to_string(e.kind())}, {"stage", e.stage()}});
    return exit_code(e.kind());
  } catch (const Error& e) {
    log(Level::error, e.what(), {{"kind", to_string(e.kind())}});
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    log(Level::error, e.what(), {{"kind", "runtime"}});
    return 4;
  }
  return 0;
}
