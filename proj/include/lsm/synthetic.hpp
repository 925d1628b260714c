#pragma once

// Deterministic synthetic scenes with known ground truth.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "lsm/data_terms.hpp"
#include "lsm/grid.hpp"

namespace lsm::synthetic {

// Band-limited colour texture defined on continuous coordinates, so shifted
// copies are exact. Values stay inside [0, 1].
class Texture {
public:
  explicit Texture(std::uint64_t seed, std::size_t terms = 24, double min_wavelength = 10.0,
                   double max_wavelength = 64.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> wl(min_wavelength, max_wavelength);
    std::uniform_real_distribution<double> amp(0.5, 1.0);
    for (std::size_t i = 0; i < terms; ++i) {
      Term t;
      const double a = angle(rng), k = 2.0 * std::numbers::pi / wl(rng);
      t.kx = k * std::cos(a);
      t.ky = k * std::sin(a);
      t.phase = angle(rng);
      for (double& w : t.rgb) w = amp(rng);
      terms_.push_back(t);
    }
    for (const auto& t : terms_)
      for (int c = 0; c < 3; ++c) norm_[c] += t.rgb[c];
  }

  double operator()(double x, double y, std::size_t c) const {
    double s = 0.0;
    for (const auto& t : terms_) s += t.rgb[c] * std::sin(t.kx * x + t.ky * y + t.phase);
    return 0.5 + 0.5 * s / norm_[c];
  }

  // Even in (x - cx): cos(kx (x - cx)) * sin(ky y + phase).
  double even(double x, double y, double cx, std::size_t c) const {
    double s = 0.0;
    for (const auto& t : terms_) s += t.rgb[c] * std::cos(t.kx * (x - cx)) * std::sin(t.ky * y + t.phase + 0.3);
    return 0.5 + 0.5 * s / norm_[c];
  }

private:
  struct Term {
    double kx = 0, ky = 0, phase = 0;
    double rgb[3] = {0, 0, 0};
  };
  std::vector<Term> terms_;
  double norm_[3] = {0, 0, 0};
};

struct ImagePair {
  GridD target;
  GridD source;
};

// source(q) = target(q - (dx, dy)), so source(p + (dx, dy)) = target(p).
inline ImagePair translated_pair(std::size_t w, std::size_t h, double dx, double dy, std::uint64_t seed = 7) {
  const Texture tex(seed);
  ImagePair out{GridD(w, h, 3), GridD(w, h, 3)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double fx = static_cast<double>(x), fy = static_cast<double>(y);
        out.target(x, y, c) = tex(fx, fy, c);
        out.source(x, y, c) = tex(fx - dx, fy - dy, c);
      }
    }
  }
  return out;
}

// Horizontally mirror-symmetric stereo pair: target = mirror(source) and
// source(p + (shift, 0)) = target(p).
inline ImagePair mirror_symmetric_pair(std::size_t w, std::size_t h, double shift, std::uint64_t seed = 11) {
  const Texture tex(seed);
  const double cx = (static_cast<double>(w) - 1.0 - shift) / 2.0;
  ImagePair out{GridD(w, h, 3), GridD(w, h, 3)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double fx = static_cast<double>(x), fy = static_cast<double>(y);
        out.target(x, y, c) = tex.even(fx, fy, cx, c);
        out.source(x, y, c) = tex.even(fx - shift, fy, cx, c);
      }
    }
  }
  return out;
}

inline GridD mirror_horizontal(const GridD& g) {
  GridD out(g.width(), g.height(), g.channels());
  for (std::size_t y = 0; y < g.height(); ++y)
    for (std::size_t x = 0; x < g.width(); ++x)
      for (std::size_t c = 0; c < g.channels(); ++c) out(x, y, c) = g(g.width() - 1 - x, y, c);
  return out;
}

struct TwoColorScene {
  GridD image;      // RGB
  GridD partition;  // 1 = foreground colour
  Scribbles scribbles;
};

// Foreground is an axis-aligned rectangle [x0, x1) x [y0, y1).
inline TwoColorScene two_color_scene(std::size_t w = 128, std::size_t h = 128, std::size_t x0 = 32,
                                     std::size_t y0 = 24, std::size_t x1 = 96, std::size_t y1 = 104) {
  TwoColorScene s{GridD(w, h, 3), GridD(w, h, 1), {}};
  const double fg[3] = {0.85, 0.25, 0.2};
  const double bg[3] = {0.15, 0.35, 0.8};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const bool in = x >= x0 && x < x1 && y >= y0 && y < y1;
      s.partition(x, y) = in ? 1.0 : 0.0;
      for (std::size_t c = 0; c < 3; ++c) s.image(x, y, c) = in ? fg[c] : bg[c];
    }
  }
  const std::size_t cy = (y0 + y1) / 2;
  for (std::size_t x = x0 + (x1 - x0) / 4; x < x1 - (x1 - x0) / 4; ++x) s.scribbles.foreground.push_back({x, cy});
  for (std::size_t y = h / 8; y < h - h / 8; ++y) s.scribbles.background.push_back({x0 / 2, y});
  return s;
}

inline double iou(const GridD& a, const GridD& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    const bool pa = a.at_pixel(p) > 0.5, pb = b.at_pixel(p) > 0.5;
    inter += (pa && pb) ? 1 : 0;
    uni += (pa || pb) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Mean endpoint error of a displacement field against a constant ground truth,
// over pixels at least `margin` away from the border.
inline double mean_epe(const GridD& field, double gt_u, double gt_v, std::size_t margin) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t y = margin; y + margin < field.height(); ++y) {
    for (std::size_t x = margin; x + margin < field.width(); ++x) {
      const double du = field(x, y, 0) - gt_u;
      const double dv = field.channels() > 1 ? field(x, y, 1) - gt_v : 0.0;
      s += std::sqrt(du * du + dv * dv);
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace lsm::synthetic
