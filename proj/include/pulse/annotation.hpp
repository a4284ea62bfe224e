#pragma once

// Ground-truth peak cleaning: candidate proposal on raw PPG/ECG, an editable
// annotation session with undo and optimistic versioning, and the
// annotation file format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pulse/beat_analysis.hpp"
#include "pulse/error.hpp"
#include "pulse/stats.hpp"
#include "pulse/trace_io.hpp"

namespace pulse {

struct BlankRegion {
  double t0 = 0.0;
  double t1 = 0.0;

  bool contains(double t) const { return t >= t0 && t <= t1; }
  bool operator==(const BlankRegion&) const = default;
};

inline bool in_any_blank(double t, std::span<const BlankRegion> blanks) {
  return std::any_of(blanks.begin(), blanks.end(), [t](const auto& b) { return b.contains(t); });
}

struct ProposalConfig {
  double delta_sigma = 0.4;          // delta = delta_sigma * population sigma
  std::optional<double> fixed_delta;  // overrides the sigma rule
  bool refine = true;
};

/// Candidate peaks from the alternating-scan detector. A flat waveform
/// yields no proposals.
inline BeatSeries propose_peaks(const GroundTruthRecord& rec, const ProposalConfig& cfg = {}) {
  if (rec.waveform.values.empty()) throw Error(ErrorKind::insufficient_data, "empty waveform");
  double delta = 0.0;
  if (cfg.fixed_delta) {
    delta = *cfg.fixed_delta;
  } else {
    delta = cfg.delta_sigma * stats::pstdev(rec.waveform.values);
    if (!(delta > 0.0)) return {{}, BeatSource::ground_truth};
  }
  return detect_peaks(rec.waveform, delta, cfg.refine, BeatSource::ground_truth);
}

enum class EditKind { add, move, remove, mark_blank, unmark_blank, undo };

inline const char* to_string(EditKind k) {
  switch (k) {
    case EditKind::add: return "add";
    case EditKind::move: return "move";
    case EditKind::remove: return "delete";
    case EditKind::mark_blank: return "mark_blank";
    case EditKind::unmark_blank: return "unmark_blank";
    case EditKind::undo: return "undo";
  }
  return "add";
}

inline EditKind edit_kind_from_string(std::string_view s) {
  if (s == "add") return EditKind::add;
  if (s == "move") return EditKind::move;
  if (s == "delete") return EditKind::remove;
  if (s == "mark_blank") return EditKind::mark_blank;
  if (s == "unmark_blank") return EditKind::unmark_blank;
  if (s == "undo") return EditKind::undo;
  throw Error(ErrorKind::validation, "unknown edit kind '" + std::string(s) + "'");
}

/// add/delete use `t`; move goes t -> t2; (un)mark_blank covers [t, t2].
struct PeakEdit {
  EditKind kind = EditKind::add;
  double t = 0.0;
  double t2 = 0.0;

  bool operator==(const PeakEdit&) const = default;
};

inline constexpr double kSnapToleranceS = 0.15;

/// Editable peak set. Single writer; callers serialise access.
class AnnotationSession {
 public:
  AnnotationSession() = default;
  AnnotationSession(std::string id, std::vector<double> proposal)
      : id_(std::move(id)), proposal_(std::move(proposal)), peaks_(proposal_) {
    for (std::size_t i = 1; i < peaks_.size(); ++i) {
      if (!(peaks_[i] > peaks_[i - 1])) throw Error(ErrorKind::validation, "proposal not strictly increasing");
    }
  }

  const std::string& id() const { return id_; }
  const std::vector<double>& peaks() const { return peaks_; }
  const std::vector<double>& proposal() const { return proposal_; }
  const std::vector<BlankRegion>& blank_regions() const { return blanks_; }
  const std::vector<PeakEdit>& edit_log() const { return log_; }
  std::uint64_t version() const { return version_; }
  bool dirty() const { return dirty_; }
  void mark_clean() { dirty_ = false; }

  std::string signal_id;
  std::string kind = "ppg";
  std::string annotator;
  std::string created_at;

  /// Applies one edit; with `expected_version` set, a stale version is
  /// rejected before anything changes.
  void apply(const PeakEdit& edit, std::optional<std::uint64_t> expected_version = std::nullopt) {
    if (expected_version && *expected_version != version_) {
      throw Error(ErrorKind::version_conflict, "session at version " + std::to_string(version_) +
                                                   ", edit expected " + std::to_string(*expected_version));
    }
    if (edit.kind == EditKind::undo) {
      undo();
    } else {
      undo_stack_.push_back(apply_forward(edit));
    }
    log_.push_back(edit);
    ++version_;
    dirty_ = true;
  }

  /// Rebuilds the session state from the proposal and the edit log.
  static AnnotationSession replay(std::string id, std::vector<double> proposal, std::span<const PeakEdit> log) {
    AnnotationSession s(std::move(id), std::move(proposal));
    for (const auto& e : log) s.apply(e);
    return s;
  }

  /// RR intervals (beat time of the closing peak, ms); pairs spanning a
  /// blank region are skipped.
  std::vector<std::pair<double, double>> rr_intervals() const {
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i + 1 < peaks_.size(); ++i) {
      if (spans_blank(peaks_[i], peaks_[i + 1])) continue;
      out.emplace_back(peaks_[i + 1], 1000.0 * (peaks_[i + 1] - peaks_[i]));
    }
    return out;
  }

  bool spans_blank(double a, double b) const {
    return std::any_of(blanks_.begin(), blanks_.end(), [&](const auto& r) { return r.t0 < b && r.t1 > a; });
  }

 private:
  struct Applied {
    std::vector<double> removed;
    std::vector<double> added;
    std::optional<std::vector<BlankRegion>> blanks_before;
  };

  std::optional<std::size_t> nearest_peak(double t) const {
    if (peaks_.empty()) return std::nullopt;
    const auto it = std::lower_bound(peaks_.begin(), peaks_.end(), t);
    std::optional<std::size_t> best;
    double best_d = kSnapToleranceS;
    auto consider = [&](std::vector<double>::const_iterator c) {
      const double d = std::abs(*c - t);
      if (d <= best_d && (!best || d < best_d)) {
        best = static_cast<std::size_t>(c - peaks_.begin());
        best_d = d;
      }
    };
    if (it != peaks_.begin()) consider(std::prev(it));
    if (it != peaks_.end()) consider(it);
    return best;
  }

  void insert_peak(double t) {
    const auto it = std::lower_bound(peaks_.begin(), peaks_.end(), t);
    if (it != peaks_.end() && *it == t) throw Error(ErrorKind::validation, "peak already exists");
    peaks_.insert(it, t);
  }

  void erase_peak(double t) {
    const auto it = std::lower_bound(peaks_.begin(), peaks_.end(), t);
    if (it == peaks_.end() || *it != t) throw Error(ErrorKind::runtime, "undo: peak missing");
    peaks_.erase(it);
  }

  Applied apply_forward(const PeakEdit& e) {
    Applied a;
    switch (e.kind) {
      case EditKind::add: {
        if (!std::isfinite(e.t)) throw Error(ErrorKind::validation, "non-finite time");
        if (in_any_blank(e.t, blanks_)) throw Error(ErrorKind::validation, "cannot add a peak inside a blank region");
        insert_peak(e.t);
        a.added = {e.t};
        break;
      }
      case EditKind::remove: {
        const auto i = nearest_peak(e.t);
        if (!i) throw Error(ErrorKind::not_found, "no peak within snap tolerance");
        a.removed = {peaks_[*i]};
        peaks_.erase(peaks_.begin() + static_cast<std::ptrdiff_t>(*i));
        break;
      }
      case EditKind::move: {
        if (!std::isfinite(e.t2)) throw Error(ErrorKind::validation, "non-finite time");
        const auto i = nearest_peak(e.t);
        if (!i) throw Error(ErrorKind::not_found, "no peak within snap tolerance");
        if (in_any_blank(e.t2, blanks_)) throw Error(ErrorKind::validation, "cannot move a peak into a blank region");
        const double from = peaks_[*i];
        peaks_.erase(peaks_.begin() + static_cast<std::ptrdiff_t>(*i));
        try {
          insert_peak(e.t2);
        } catch (...) {
          insert_peak(from);
          throw;
        }
        a.removed = {from};
        a.added = {e.t2};
        break;
      }
      case EditKind::mark_blank: {
        if (!(e.t < e.t2)) throw Error(ErrorKind::validation, "blank region needs t0 < t1");
        a.blanks_before = blanks_;
        BlankRegion merged{e.t, e.t2};
        std::vector<BlankRegion> next;
        for (const auto& r : blanks_) {
          if (r.t0 <= merged.t1 && merged.t0 <= r.t1) {
            merged.t0 = std::min(merged.t0, r.t0);
            merged.t1 = std::max(merged.t1, r.t1);
          } else {
            next.push_back(r);
          }
        }
        next.push_back(merged);
        std::sort(next.begin(), next.end(), [](auto& x, auto& y) { return x.t0 < y.t0; });
        blanks_ = std::move(next);
        std::vector<double> kept;
        for (double p : peaks_) {
          if (merged.contains(p)) a.removed.push_back(p);
          else kept.push_back(p);
        }
        peaks_ = std::move(kept);
        break;
      }
      case EditKind::unmark_blank: {
        if (!(e.t < e.t2)) throw Error(ErrorKind::validation, "region needs t0 < t1");
        std::vector<BlankRegion> next;
        bool touched = false;
        for (const auto& r : blanks_) {
          if (r.t1 <= e.t || r.t0 >= e.t2) {
            next.push_back(r);
            continue;
          }
          touched = true;
          if (r.t0 < e.t) next.push_back({r.t0, e.t});
          if (r.t1 > e.t2) next.push_back({e.t2, r.t1});
        }
        if (!touched) throw Error(ErrorKind::not_found, "no blank region in range");
        a.blanks_before = blanks_;
        blanks_ = std::move(next);
        break;
      }
      case EditKind::undo: break;
    }
    return a;
  }

  void undo() {
    if (undo_stack_.empty()) throw Error(ErrorKind::validation, "nothing to undo");
    Applied a = std::move(undo_stack_.back());
    undo_stack_.pop_back();
    for (double t : a.added) erase_peak(t);
    for (double t : a.removed) insert_peak(t);
    if (a.blanks_before) blanks_ = std::move(*a.blanks_before);
  }

  std::string id_;
  std::vector<double> proposal_;
  std::vector<double> peaks_;
  std::vector<BlankRegion> blanks_;
  std::vector<PeakEdit> log_;
  std::vector<Applied> undo_stack_;
  std::uint64_t version_ = 0;
  bool dirty_ = false;
};

/// Contents of an annotation file.
struct AnnotationFile {
  std::uint64_t version = 0;
  std::string signal_id;
  std::string kind = "ppg";
  std::vector<double> peaks;
  std::vector<BlankRegion> blank_regions;
  std::string annotator;
  std::string created_at;

  bool operator==(const AnnotationFile&) const = default;
};

inline AnnotationFile snapshot(const AnnotationSession& s) {
  return {s.version(), s.signal_id, s.kind, s.peaks(), s.blank_regions(), s.annotator, s.created_at};
}

inline nlohmann::ordered_json to_json(const AnnotationFile& f) {
  nlohmann::ordered_json j;
  j["version"] = f.version;
  j["signal_id"] = f.signal_id;
  j["kind"] = f.kind;
  j["peaks"] = f.peaks;
  auto blanks = nlohmann::ordered_json::array();
  for (const auto& b : f.blank_regions) blanks.push_back({b.t0, b.t1});
  j["blank_regions"] = std::move(blanks);
  j["annotator"] = f.annotator;
  j["created_at"] = f.created_at;
  return j;
}

inline std::string serialize_annotations(const AnnotationFile& f) { return to_json(f).dump(2) + "\n"; }

/// Serialises the session; a stale `expected_version` is a version error.
inline std::string export_annotations(const AnnotationSession& s,
                                      std::optional<std::uint64_t> expected_version = std::nullopt) {
  if (expected_version && *expected_version != s.version()) {
    throw Error(ErrorKind::version_conflict, "export of stale session version");
  }
  return serialize_annotations(snapshot(s));
}

inline AnnotationFile parse_annotations(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string("annotation file: ") + e.what());
  }
  AnnotationFile f;
  try {
    f.version = j.value("version", std::uint64_t{0});
    f.signal_id = j.value("signal_id", std::string{});
    f.kind = j.value("kind", std::string{"ppg"});
    f.peaks = j.at("peaks").get<std::vector<double>>();
    for (const auto& b : j.at("blank_regions")) {
      if (!b.is_array() || b.size() != 2) throw Error(ErrorKind::validation, "blank region must be [t0, t1]");
      f.blank_regions.push_back({b[0].get<double>(), b[1].get<double>()});
    }
    f.annotator = j.value("annotator", std::string{});
    f.created_at = j.value("created_at", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, std::string("annotation file: ") + e.what());
  }
  for (std::size_t i = 1; i < f.peaks.size(); ++i) {
    if (!(f.peaks[i] > f.peaks[i - 1])) throw Error(ErrorKind::validation, "peaks not strictly increasing");
  }
  for (const auto& b : f.blank_regions) {
    if (!(b.t0 < b.t1)) throw Error(ErrorKind::validation, "blank region needs t0 < t1");
  }
  return f;
}

}  // namespace pulse
