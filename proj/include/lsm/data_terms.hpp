#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "lsm/error.hpp"
#include "lsm/grid.hpp"

namespace lsm {

// Quadratic model of a data term at the current solution. `d` and `h` are the
// first and (Gauss-Newton) second derivatives of D(x)/2, i.e. the common factor
// 2 is dropped; `energy` is D(x) itself.
//   scalar tasks: d has 1 channel, h has 1 channel
//   flow:         d has 2 channels (x, y), h has 3 channels (xx, xy, yy)
struct QuadraticModel {
  GridD d;
  GridD h;
  double energy = 0.0;

  bool is_flow() const noexcept { return d.channels() == 2; }
};

// Per-group partial derivatives: the feature channels split into `groups`
// contiguous groups, each group's data term differentiated on its own.
//   scalar tasks: first = groups channels, second = groups channels
//   flow:         first = 2*groups channels (x, y per group),
//                 second = 3*groups channels (xx, xy, yy per group)
struct GroupedPartials {
  std::size_t groups = 0;
  GridD first;
  GridD second;
};

struct CorrespondenceModel {
  QuadraticModel model;
  GroupedPartials grouped;
};

struct LabelProbabilities {
  GridD alpha;
  GridD beta;
};

struct PixelCoord {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
  friend auto operator<=>(const PixelCoord&, const PixelCoord&) = default;
};

struct Scribbles {
  std::vector<PixelCoord> foreground;
  std::vector<PixelCoord> background;
};

inline constexpr double kProbabilityEpsilon = 1e-12;

// ---- binary labeling ---------------------------------------------------------

inline double labeling_energy(const GridD& x, const LabelProbabilities& probs) {
  double e = 0.0;
  for (std::size_t p = 0; p < x.pixels(); ++p) {
    const double t = std::tanh(x.at_pixel(p));
    const double a = probs.alpha.at_pixel(p), b = probs.beta.at_pixel(p);
    e += a * (t - 1.0) * (t - 1.0) + b * (t + 1.0) * (t + 1.0);
  }
  return e;
}

inline QuadraticModel labeling_quadratic(const GridD& x, const LabelProbabilities& probs) {
  if (x.channels() != 1 || x.pixels() != probs.alpha.pixels() || x.pixels() != probs.beta.pixels()) {
    throw InvalidArgument("labeling_quadratic: solution and probability grids disagree");
  }
  QuadraticModel q{GridD(x.width(), x.height(), 1), GridD(x.width(), x.height(), 1), 0.0};
  for (std::size_t p = 0; p < x.pixels(); ++p) {
    const double t = std::tanh(x.at_pixel(p));
    const double dt = 1.0 - t * t;
    const double a = probs.alpha.at_pixel(p), b = probs.beta.at_pixel(p);
    q.d.at_pixel(p) = ((a + b) * t + (b - a)) * dt;
    q.h.at_pixel(p) = (a + b) * dt * dt;
    q.energy += a * (t - 1.0) * (t - 1.0) + b * (t + 1.0) * (t + 1.0);
  }
  return q;
}

// Labeling terms do not decompose over feature channels; each group carries an
// equal share of the full model so the group sum reproduces it.
inline GroupedPartials labeling_grouped(const QuadraticModel& q, std::size_t groups) {
  if (groups == 0) throw InvalidArgument("group count must be positive");
  GroupedPartials g{groups, GridD(q.d.width(), q.d.height(), groups), GridD(q.d.width(), q.d.height(), groups)};
  const double share = 1.0 / static_cast<double>(groups);
  for (std::size_t p = 0; p < q.d.pixels(); ++p) {
    for (std::size_t k = 0; k < groups; ++k) {
      g.first.at_pixel(p, k) = q.d.at_pixel(p) * share;
      g.second.at_pixel(p, k) = q.h.at_pixel(p) * share;
    }
  }
  return g;
}

namespace detail {

inline double feature_affinity(const GridD& fa, std::size_t pa, const GridD& fb, std::size_t pb, double inv_two_sigma2) {
  double s = 0.0;
  for (std::size_t c = 0; c < fa.channels(); ++c) {
    const double diff = fa.at_pixel(pa, c) - fb.at_pixel(pb, c);
    s += diff * diff;
  }
  return std::exp(-s * inv_two_sigma2);
}

inline double top_k_mean(std::vector<double>& v, std::size_t k) {
  const std::size_t n = std::min(k, v.size());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n), v.end(), std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i];
  return s / static_cast<double>(n);
}

}  // namespace detail

// Nonparametric scribble likelihoods: mean of the top_k Gaussian feature
// affinities to each scribble class, normalized into alpha / beta.
inline LabelProbabilities scribble_probabilities(const GridD& features, const Scribbles& scribbles, double sigma,
                                                 std::size_t top_k) {
  if (scribbles.foreground.empty() || scribbles.background.empty()) {
    throw InvalidArgument("scribble_probabilities needs foreground and background scribbles");
  }
  if (!(sigma > 0.0) || top_k < 1) throw InvalidArgument("scribble_probabilities: sigma > 0 and top_k >= 1 required");
  auto index_of = [&](const PixelCoord& q) {
    if (q.x >= features.width() || q.y >= features.height()) {
      throw InvalidArgument("scribble point out of bounds");
    }
    return q.y * features.width() + q.x;
  };
  std::vector<std::size_t> fg, bg;
  for (const auto& q : scribbles.foreground) fg.push_back(index_of(q));
  for (const auto& q : scribbles.background) bg.push_back(index_of(q));

  const double inv = 1.0 / (2.0 * sigma * sigma);
  LabelProbabilities out{GridD(features.width(), features.height(), 1), GridD(features.width(), features.height(), 1)};
  std::vector<double> buf;
  for (std::size_t p = 0; p < features.pixels(); ++p) {
    buf.clear();
    for (std::size_t q : fg) buf.push_back(detail::feature_affinity(features, p, features, q, inv));
    const double sf = detail::top_k_mean(buf, top_k);
    buf.clear();
    for (std::size_t q : bg) buf.push_back(detail::feature_affinity(features, p, features, q, inv));
    const double sb = detail::top_k_mean(buf, top_k);
    const double a = sf / (sf + sb + kProbabilityEpsilon);
    out.alpha.at_pixel(p) = a;
    out.beta.at_pixel(p) = 1.0 - a;
  }
  return out;
}

// Foreground likelihood from affinities to the previous frame's labeled
// neighbours inside a window x window neighbourhood.
inline LabelProbabilities temporal_probabilities(const GridD& features_cur, const GridD& features_prev,
                                                 const GridD& mask_prev, std::size_t window, double sigma) {
  if (window < 1 || window % 2 == 0) throw InvalidArgument("temporal window must be odd and >= 1");
  if (!(sigma > 0.0)) throw InvalidArgument("temporal sigma must be positive");
  if (!features_cur.same_shape(features_prev) || mask_prev.width() != features_cur.width() ||
      mask_prev.height() != features_cur.height()) {
    throw InvalidArgument("temporal_probabilities: grid sizes disagree");
  }
  const auto w = static_cast<std::ptrdiff_t>(features_cur.width());
  const auto h = static_cast<std::ptrdiff_t>(features_cur.height());
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  LabelProbabilities out{GridD(features_cur.width(), features_cur.height(), 1),
                         GridD(features_cur.width(), features_cur.height(), 1)};
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const auto p = static_cast<std::size_t>(y * w + x);
      double fg = 0.0, all = 0.0;
      for (std::ptrdiff_t yy = std::max<std::ptrdiff_t>(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
        for (std::ptrdiff_t xx = std::max<std::ptrdiff_t>(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
          const auto q = static_cast<std::size_t>(yy * w + xx);
          const double a = detail::feature_affinity(features_cur, p, features_prev, q, inv);
          all += a;
          if (mask_prev.at_pixel(q) > 0.5) fg += a;
        }
      }
      const double alpha = fg / (all + kProbabilityEpsilon);
      out.alpha.at_pixel(p) = alpha;
      out.beta.at_pixel(p) = 1.0 - alpha;
    }
  }
  return out;
}

// ---- dense correspondence ------------------------------------------------------

namespace detail {

inline void check_correspondence_inputs(const GridD& src, const GridD& tgt, const GridD& x, std::size_t solution_channels,
                                        std::size_t groups) {
  if (!src.same_shape(tgt)) throw InvalidArgument("source and target feature grids differ in shape or channels");
  if (x.width() != tgt.width() || x.height() != tgt.height() || x.channels() != solution_channels) {
    throw InvalidArgument("solution field does not match the feature grid");
  }
  if (groups == 0 || tgt.channels() % groups != 0) {
    throw InvalidArgument("feature channels (" + std::to_string(tgt.channels()) + ") not divisible by group count " +
                          std::to_string(groups));
  }
}

}  // namespace detail

// Sum over pixels and channels of (F_S(p + x_p) - F_T(p))^2; a 1-channel x is a
// horizontal displacement, a 2-channel x is (u, v).
inline double correspondence_energy(const GridD& src, const GridD& tgt, const GridD& x) {
  double e = 0.0;
  for (std::size_t y = 0; y < tgt.height(); ++y) {
    for (std::size_t xx = 0; xx < tgt.width(); ++xx) {
      const double sx = static_cast<double>(xx) + x(xx, y, 0);
      const double sy = static_cast<double>(y) + (x.channels() == 2 ? x(xx, y, 1) : 0.0);
      for (std::size_t c = 0; c < tgt.channels(); ++c) {
        const double r = bilinear_sample(src, sx, sy, c) - tgt(xx, y, c);
        e += r * r;
      }
    }
  }
  return e;
}

inline CorrespondenceModel stereo_quadratic(const GridD& src, const GridD& tgt, const GridD& x, std::size_t groups) {
  detail::check_correspondence_inputs(src, tgt, x, 1, groups);
  const std::size_t w = tgt.width(), h = tgt.height(), nc = tgt.channels(), gsize = nc / groups;
  CorrespondenceModel out;
  out.model = QuadraticModel{GridD(w, h, 1), GridD(w, h, 1), 0.0};
  out.grouped = GroupedPartials{groups, GridD(w, h, groups), GridD(w, h, groups)};
  std::vector<double> val(nc), gx(nc), gy(nc);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      sample_with_gradient(src, static_cast<double>(xx) + x(xx, y), static_cast<double>(y), val, gx, gy);
      double d = 0.0, hh = 0.0;
      for (std::size_t g = 0; g < groups; ++g) {
        double gd = 0.0, gh = 0.0;
        for (std::size_t c = g * gsize; c < (g + 1) * gsize; ++c) {
          const double r = val[c] - tgt(xx, y, c);
          gd += gx[c] * r;
          gh += gx[c] * gx[c];
          out.model.energy += r * r;
        }
        out.grouped.first(xx, y, g) = gd;
        out.grouped.second(xx, y, g) = gh;
        d += gd;
        hh += gh;
      }
      out.model.d(xx, y) = d;
      out.model.h(xx, y) = hh;
    }
  }
  return out;
}

inline CorrespondenceModel flow_quadratic(const GridD& src, const GridD& tgt, const GridD& x, std::size_t groups) {
  detail::check_correspondence_inputs(src, tgt, x, 2, groups);
  const std::size_t w = tgt.width(), h = tgt.height(), nc = tgt.channels(), gsize = nc / groups;
  CorrespondenceModel out;
  out.model = QuadraticModel{GridD(w, h, 2), GridD(w, h, 3), 0.0};
  out.grouped = GroupedPartials{groups, GridD(w, h, 2 * groups), GridD(w, h, 3 * groups)};
  std::vector<double> val(nc), gx(nc), gy(nc);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      sample_with_gradient(src, static_cast<double>(xx) + x(xx, y, 0), static_cast<double>(y) + x(xx, y, 1), val, gx,
                           gy);
      double dx = 0, dy = 0, hxx = 0, hxy = 0, hyy = 0;
      for (std::size_t g = 0; g < groups; ++g) {
        double gdx = 0, gdy = 0, gxx = 0, gxy = 0, gyy = 0;
        for (std::size_t c = g * gsize; c < (g + 1) * gsize; ++c) {
          const double r = val[c] - tgt(xx, y, c);
          gdx += gx[c] * r;
          gdy += gy[c] * r;
          gxx += gx[c] * gx[c];
          gxy += gx[c] * gy[c];
          gyy += gy[c] * gy[c];
          out.model.energy += r * r;
        }
        out.grouped.first(xx, y, 2 * g) = gdx;
        out.grouped.first(xx, y, 2 * g + 1) = gdy;
        out.grouped.second(xx, y, 3 * g) = gxx;
        out.grouped.second(xx, y, 3 * g + 1) = gxy;
        out.grouped.second(xx, y, 3 * g + 2) = gyy;
        dx += gdx;
        dy += gdy;
        hxx += gxx;
        hxy += gxy;
        hyy += gyy;
      }
      out.model.d(xx, y, 0) = dx;
      out.model.d(xx, y, 1) = dy;
      out.model.h(xx, y, 0) = hxx;
      out.model.h(xx, y, 1) = hxy;
      out.model.h(xx, y, 2) = hyy;
    }
  }
  return out;
}

}  // namespace lsm
