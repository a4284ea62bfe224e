#pragma once

// HTTP host for ground-truth cleaning sessions. AnnotatorService holds the
// sessions and answers requests as JSON; bind_routes() wires it to
// cpp-httplib. Sessions are persisted to a store directory after every
// edit and restored by replaying their edit logs.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pulse/annotation.hpp"
#include "pulse/error.hpp"
#include "pulse/trace_io.hpp"

namespace pulse {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::runtime, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary file and rename so readers never see half a file.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::runtime, "cannot write " + tmp);
    out << content;
    if (!out) throw Error(ErrorKind::runtime, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

struct ApiResponse {
  int status = 200;
  std::string body;
};

/// Min/max per bucket over [from, to]; buckets never exceed max_points.
inline nlohmann::ordered_json decimate(const UniformSignal& s, double from, double to, std::size_t max_points) {
  nlohmann::ordered_json j;
  const double last = s.values.empty() ? s.t0 : s.time_at(s.values.size() - 1);
  from = std::max(from, s.t0);
  to = std::min(to, last);
  std::vector<double> t, lo, hi;
  if (!s.values.empty() && from <= to && max_points > 0) {
    const auto k0 = static_cast<std::size_t>(std::ceil((from - s.t0) * s.rate - 1e-9));
    const auto k1 = std::min(s.values.size() - 1, static_cast<std::size_t>(std::floor((to - s.t0) * s.rate + 1e-9)));
    const std::size_t count = k1 >= k0 ? k1 - k0 + 1 : 0;
    const std::size_t buckets = std::min(count, max_points);
    for (std::size_t b = 0; b < buckets; ++b) {
      const std::size_t a = k0 + b * count / buckets;
      const std::size_t e = k0 + (b + 1) * count / buckets;
      double mn = s.values[a], mx = s.values[a];
      for (std::size_t k = a; k < e; ++k) {
        mn = std::min(mn, s.values[k]);
        mx = std::max(mx, s.values[k]);
      }
      t.push_back(s.time_at(a));
      lo.push_back(mn);
      hi.push_back(mx);
    }
    j["decimated"] = buckets < count;
  } else {
    j["decimated"] = false;
  }
  j["rate"] = s.rate;
  j["t"] = t;
  j["min"] = lo;
  j["max"] = hi;
  return j;
}

class AnnotatorService {
 public:
  struct Options {
    std::filesystem::path store;
    std::string annotator;
    ProposalConfig proposal;
    std::string created_at;  // stamped on new sessions
  };

  explicit AnnotatorService(Options opts) : opts_(std::move(opts)) {
    std::filesystem::create_directories(opts_.store);
  }

  /// Opens (or restores from the store) one session per waveform file; the
  /// session id is the file stem.
  void open_signal(const std::filesystem::path& waveform_path) {
    auto e = std::make_unique<Entry>();
    e->signal_path = std::filesystem::absolute(waveform_path);
    e->record = parse_gt_waveform(read_file(waveform_path));
    const std::string id = waveform_path.stem().string();
    if (entries_.count(id)) throw Error(ErrorKind::validation, "duplicate session id '" + id + "'");

    const auto stored = session_path(id);
    if (std::filesystem::exists(stored)) {
      e->session = restore(id, read_file(stored));
    } else {
      e->session = AnnotationSession(id, propose_peaks(e->record, opts_.proposal).beats);
      e->session.signal_id = id;
      e->session.kind = to_string(e->record.kind);
      e->session.annotator = opts_.annotator;
      e->session.created_at = opts_.created_at;
      persist(*e);
    }
    entries_.emplace(id, std::move(e));
  }

  std::vector<std::string> session_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, _] : entries_) ids.push_back(id);
    return ids;
  }

  /// Copy of the current session state.
  AnnotationSession session(const std::string& id) {
    auto& e = entry(id);
    std::lock_guard lock(e.mutex);
    return e.session;
  }

  ApiResponse get_signal(const std::string& id, double from, double to, std::size_t max_points) {
    return guarded([&] {
      auto& e = entry(id);
      return ok(decimate(e.record.waveform, from, to, max_points));
    });
  }

  ApiResponse get_peaks(const std::string& id) {
    return guarded([&] {
      auto& e = entry(id);
      std::lock_guard lock(e.mutex);
      return ok(state_json(e.session));
    });
  }

  ApiResponse get_rr(const std::string& id) {
    return guarded([&] {
      auto& e = entry(id);
      std::lock_guard lock(e.mutex);
      nlohmann::ordered_json j;
      j["version"] = e.session.version();
      auto pts = nlohmann::ordered_json::array();
      for (const auto& [t, rr] : e.session.rr_intervals()) pts.push_back({{"t", t}, {"rr_ms", rr}});
      j["rr"] = std::move(pts);
      return ok(j);
    });
  }

  /// Body: {"edit": {"kind": ..., "t": ..., "t2": ...}, "expected_version": n}
  ApiResponse post_edit(const std::string& id, const std::string& body) {
    return guarded([&] {
      auto& e = entry(id);
      const auto j = parse_body(body);
      if (!j.contains("edit")) throw Error(ErrorKind::validation, "missing 'edit'");
      const PeakEdit edit = edit_from_json(j.at("edit"));
      std::optional<std::uint64_t> expected;
      if (j.contains("expected_version")) expected = j.at("expected_version").get<std::uint64_t>();
      std::lock_guard lock(e.mutex);
      e.session.apply(edit, expected);
      persist(e);
      return ok(state_json(e.session));
    });
  }

  /// Writes <store>/<id>.annotations.json and returns its contents.
  ApiResponse post_export(const std::string& id, const std::string& body) {
    return guarded([&] {
      auto& e = entry(id);
      std::optional<std::uint64_t> expected;
      if (!body.empty()) {
        const auto j = parse_body(body);
        if (j.contains("expected_version")) expected = j.at("expected_version").get<std::uint64_t>();
      }
      std::lock_guard lock(e.mutex);
      const auto text = export_annotations(e.session, expected);
      write_file_atomic(opts_.store / (id + ".annotations.json"), text);
      e.session.mark_clean();
      persist(e);
      return ApiResponse{200, text};
    });
  }

  /// Persists every session; called on shutdown.
  void persist_all() {
    for (auto& [id, e] : entries_) {
      std::lock_guard lock(e->mutex);
      persist(*e);
    }
  }

  static PeakEdit edit_from_json(const nlohmann::json& j) {
    try {
      PeakEdit e;
      e.kind = edit_kind_from_string(j.at("kind").get<std::string>());
      e.t = j.value("t", 0.0);
      e.t2 = j.value("t2", 0.0);
      return e;
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorKind::validation, std::string("edit: ") + ex.what());
    }
  }

  static nlohmann::ordered_json edit_to_json(const PeakEdit& e) {
    return {{"kind", to_string(e.kind)}, {"t", e.t}, {"t2", e.t2}};
  }

 private:
  struct Entry {
    std::mutex mutex;
    std::filesystem::path signal_path;
    GroundTruthRecord record;
    AnnotationSession session;
  };

  std::filesystem::path session_path(const std::string& id) const { return opts_.store / (id + ".session.json"); }

  Entry& entry(const std::string& id) {
    const auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(ErrorKind::not_found, "no session '" + id + "'");
    return *it->second;
  }

  static nlohmann::json parse_body(const std::string& body) {
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::parse, std::string("request body: ") + e.what());
    }
  }

  static nlohmann::ordered_json state_json(const AnnotationSession& s) {
    nlohmann::ordered_json j;
    j["version"] = s.version();
    j["peaks"] = s.peaks();
    auto blanks = nlohmann::ordered_json::array();
    for (const auto& b : s.blank_regions()) blanks.push_back({b.t0, b.t1});
    j["blank_regions"] = std::move(blanks);
    j["edits"] = s.edit_log().size();
    j["dirty"] = s.dirty();
    return j;
  }

  static ApiResponse ok(const nlohmann::ordered_json& j) { return {200, j.dump()}; }

  template <class F>
  static ApiResponse guarded(F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      int status = 400;
      if (e.kind() == ErrorKind::not_found) status = 404;
      else if (e.kind() == ErrorKind::version_conflict) status = 409;
      else if (e.kind() == ErrorKind::runtime) status = 500;
      nlohmann::ordered_json j;
      j["error"] = to_string(e.kind());
      j["message"] = e.what();
      return {status, j.dump()};
    } catch (const std::exception& e) {
      return {500, nlohmann::ordered_json{{"error", "runtime"}, {"message", e.what()}}.dump()};
    }
  }

  void persist(Entry& e) {
    nlohmann::ordered_json j;
    const auto& s = e.session;
    j["format"] = "pulse-session/1";
    j["id"] = s.id();
    j["signal_path"] = e.signal_path.string();
    j["signal_id"] = s.signal_id;
    j["kind"] = s.kind;
    j["annotator"] = s.annotator;
    j["created_at"] = s.created_at;
    j["proposal"] = s.proposal();
    auto edits = nlohmann::ordered_json::array();
    for (const auto& ed : s.edit_log()) edits.push_back(edit_to_json(ed));
    j["edits"] = std::move(edits);
    j["version"] = s.version();
    j["peaks"] = s.peaks();
    auto blanks = nlohmann::ordered_json::array();
    for (const auto& b : s.blank_regions()) blanks.push_back({b.t0, b.t1});
    j["blank_regions"] = std::move(blanks);
    write_file_atomic(session_path(s.id()), j.dump(1) + "\n");
  }

  /// Replays the stored edit log and checks it lands on the stored state.
  static AnnotationSession restore(const std::string& id, const std::string& text) {
    auto corrupt = [&](const std::string& why) {
      return Error(ErrorKind::validation, "corrupt session store for '" + id + "': " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw corrupt(e.what());
    }
    try {
      if (j.value("format", std::string{}) != "pulse-session/1") throw corrupt("unknown format");
      std::vector<PeakEdit> log;
      for (const auto& e : j.at("edits")) log.push_back(edit_from_json(e));
      AnnotationSession s = AnnotationSession::replay(id, j.at("proposal").get<std::vector<double>>(), log);
      s.signal_id = j.value("signal_id", id);
      s.kind = j.value("kind", std::string{"ppg"});
      s.annotator = j.value("annotator", std::string{});
      s.created_at = j.value("created_at", std::string{});
      if (s.version() != j.at("version").get<std::uint64_t>()) throw corrupt("version does not match edit log");
      if (s.peaks() != j.at("peaks").get<std::vector<double>>()) throw corrupt("peaks do not match edit log");
      std::vector<BlankRegion> blanks;
      for (const auto& b : j.at("blank_regions")) blanks.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
      if (s.blank_regions() != blanks) throw corrupt("blank regions do not match edit log");
      s.mark_clean();
      return s;
    } catch (const nlohmann::json::exception& e) {
      throw corrupt(e.what());
    } catch (const Error& e) {
      if (std::string_view(e.what()).starts_with("corrupt")) throw;
      throw corrupt(e.what());
    }
  }

  Options opts_;
  std::map<std::string, std::unique_ptr<Entry>> entries_;
};

/// Registers the session API (and optional static UI directory) on `server`.
inline void bind_routes(httplib::Server& server, AnnotatorService& svc, const std::string& ui_dir = {}) {
  // No SO_REUSEPORT: a second server on a busy port must fail to bind.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  auto param = [](const httplib::Request& req, const char* key, double fallback) {
    if (!req.has_param(key)) return fallback;
    const auto v = detail::parse_double(req.get_param_value(key));
    return v ? *v : fallback;
  };

  server.Get("/api/sessions", [&svc](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json(svc.session_ids()).dump(), "application/json");
  });
  server.Get(R"(/api/session/([^/]+)/signal)", [&, reply, param](const httplib::Request& req, httplib::Response& res) {
    const double from = param(req, "from", -std::numeric_limits<double>::infinity());
    const double to = param(req, "to", std::numeric_limits<double>::infinity());
    const auto max_points = static_cast<std::size_t>(std::max(1.0, param(req, "max_points", 2000.0)));
    reply(res, svc.get_signal(req.matches[1], from, to, max_points));
  });
  server.Get(R"(/api/session/([^/]+)/peaks)", [&, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.get_peaks(req.matches[1]));
  });
  server.Get(R"(/api/session/([^/]+)/rr)", [&, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.get_rr(req.matches[1]));
  });
  server.Post(R"(/api/session/([^/]+)/edit)", [&, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.post_edit(req.matches[1], req.body));
  });
  server.Post(R"(/api/session/([^/]+)/export)", [&, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.post_export(req.matches[1], req.body));
  });
  if (!ui_dir.empty() && !server.set_mount_point("/", ui_dir)) {
    throw Error(ErrorKind::validation, "UI directory not found: " + ui_dir);
  }
}

}  // namespace pulse
