#pragma once

// Spatial averaging of RoI pixels and the plane-orthogonal-to-skin (POS)
// combination of the three colour traces into one raw pulse signal.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "pulse/error.hpp"
#include "pulse/stats.hpp"

namespace pulse {

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  bool operator==(const Rgb&) const = default;
};

/// Arithmetic mean of each colour channel over the pixels of one frame.
inline Rgb spatial_average(std::span<const Rgb> pixels) {
  if (pixels.empty()) throw Error(ErrorKind::insufficient_data, "empty RoI");
  Rgb sum;
  for (const auto& p : pixels) {
    sum.r += p.r;
    sum.g += p.g;
    sum.b += p.b;
  }
  const double n = static_cast<double>(pixels.size());
  return {sum.r / n, sum.g / n, sum.b / n};
}

/// Per-frame RoI means with occluded (empty) frames carrying the previous
/// frame's mean forward. Leading empty frames are an error: nothing to carry.
inline std::vector<Rgb> roi_means_carry_forward(std::span<const std::vector<Rgb>> frames) {
  std::vector<Rgb> out;
  out.reserve(frames.size());
  for (const auto& frame : frames) {
    if (frame.empty()) {
      if (out.empty()) throw Error(ErrorKind::insufficient_data, "first frame has an empty RoI");
      out.push_back(out.back());
    } else {
      out.push_back(spatial_average(frame));
    }
  }
  return out;
}

/// View over one analysis window of the three resampled colour channels.
struct RgbWindow {
  std::span<const double> r, g, b;
  double rate = 30.0;

  std::size_t size() const { return r.size(); }
};

inline bool is_window_length(std::size_t n) { return n == 256 || n == 512; }

/// POS: normalise each channel by its window mean, project onto
/// S1 = G - B and S2 = G + B - 2R, then h = S1 + (sigma(S1)/sigma(S2)) * S2.
inline std::vector<double> pos_project(const RgbWindow& w) {
  const std::size_t n = w.r.size();
  if (w.g.size() != n || w.b.size() != n) {
    throw Error(ErrorKind::validation, "colour channels differ in length");
  }
  if (!is_window_length(n)) throw Error(ErrorKind::validation, "window length must be 256 or 512");

  const double mr = stats::mean(w.r);
  const double mg = stats::mean(w.g);
  const double mb = stats::mean(w.b);
  if (!(mr > 0.0) || !(mg > 0.0) || !(mb > 0.0)) {
    throw Error(ErrorKind::degenerate, "colour channel with zero window mean");
  }

  std::vector<double> s1(n), s2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rn = w.r[i] / mr;
    const double gn = w.g[i] / mg;
    const double bn = w.b[i] / mb;
    s1[i] = gn - bn;
    s2[i] = gn + bn - 2.0 * rn;
  }

  const double sd1 = stats::pstdev(s1);
  const double sd2 = stats::pstdev(s2);
  const double alpha = sd2 > 0.0 ? sd1 / sd2 : 0.0;
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = s1[i] + alpha * s2[i];
  return h;
}

}  // namespace pulse
