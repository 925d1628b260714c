#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "lsm/error.hpp"

namespace lsm {

// Dense row-major grid with interleaved channels: index = (y * width + x) * channels + c.
template <typename T>
class Grid {
public:
  using value_type = T;

  Grid() = default;

  Grid(std::size_t width, std::size_t height, std::size_t channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels),
        data_(width * height * channels, fill) {
    if (width == 0 || height == 0 || channels == 0) {
      throw InvalidArgument("grid dimensions must be positive");
    }
  }

  Grid(std::size_t width, std::size_t height, std::size_t channels, std::vector<T> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width == 0 || height == 0 || channels == 0) {
      throw InvalidArgument("grid dimensions must be positive");
    }
    if (data_.size() != width * height * channels) {
      throw InvalidArgument("grid data length does not match width*height*channels");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return width_ * height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t x, std::size_t y, std::size_t c = 0) {
    return data_[(y * width_ + x) * channels_ + c];
  }
  const T& operator()(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return data_[(y * width_ + x) * channels_ + c];
  }

  // Channel c of pixel index p (p = y * width + x).
  T& at_pixel(std::size_t p, std::size_t c = 0) { return data_[p * channels_ + c]; }
  const T& at_pixel(std::size_t p, std::size_t c = 0) const { return data_[p * channels_ + c]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool same_shape(const Grid& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  // Copy of a single channel as a 1-channel grid.
  Grid channel(std::size_t c) const {
    Grid out(width_, height_, 1);
    for (std::size_t p = 0; p < pixels(); ++p) out.at_pixel(p) = at_pixel(p, c);
    return out;
  }

  template <typename U>
  Grid<U> cast() const {
    std::vector<U> v(data_.begin(), data_.end());
    return Grid<U>(width_, height_, channels_, std::move(v));
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t channels_ = 0;
  std::vector<T> data_;
};

using GridD = Grid<double>;
using GridF = Grid<float>;

namespace detail {

// One axis of a clamped bilinear lookup: value taps (i0, i1, t) and the
// derivative stencil (im, ip, scale) so that d/dx = scale * (f[ip] - f[im]).
struct AxisTaps {
  std::size_t i0 = 0, i1 = 0;
  double t = 0.0;
  std::size_t im = 0, ip = 0;
  double scale = 0.0;
};

inline AxisTaps axis_taps(double coord, std::size_t n) {
  AxisTaps a;
  if (n == 1) return a;
  const double hi = static_cast<double>(n - 1);
  if (!(coord > 0.0)) {
    // Left of (or exactly at) the first sample.
    a.i0 = a.i1 = 0;
    a.t = 0.0;
    if (coord == 0.0) {
      a.im = 0;
      a.ip = 1;
      a.scale = 0.5;
    }
    return a;
  }
  if (!(coord < hi)) {
    a.i0 = a.i1 = n - 1;
    a.t = 0.0;
    if (coord == hi) {
      a.im = n - 2;
      a.ip = n - 1;
      a.scale = 0.5;
    }
    return a;
  }
  const double fl = std::floor(coord);
  a.i0 = static_cast<std::size_t>(fl);
  a.i1 = a.i0 + 1;
  a.t = coord - fl;
  if (a.t == 0.0) {
    // Lattice point: the interpolant has a kink, use the central difference.
    a.im = a.i0 - 1;
    a.ip = a.i0 + 1;
    a.scale = 0.5;
  } else {
    a.im = a.i0;
    a.ip = a.i1;
    a.scale = 1.0;
  }
  return a;
}

}  // namespace detail

// Bilinear interpolation with clamp-to-edge.
template <typename T>
double bilinear_sample(const Grid<T>& g, double x, double y, std::size_t ch) {
  const auto ax = detail::axis_taps(x, g.width());
  const auto ay = detail::axis_taps(y, g.height());
  const double v00 = g(ax.i0, ay.i0, ch);
  const double v10 = g(ax.i1, ay.i0, ch);
  const double v01 = g(ax.i0, ay.i1, ch);
  const double v11 = g(ax.i1, ay.i1, ch);
  const double top = v00 + ax.t * (v10 - v00);
  const double bot = v01 + ax.t * (v11 - v01);
  return top + ay.t * (bot - top);
}

// Samples every channel at (x, y) together with the spatial derivatives of the
// clamped bilinear interpolant. At lattice coordinates, where the interpolant is
// not differentiable, the derivative is the central difference of the clamped grid.
// Outside the grid the interpolant is constant and the derivative is zero.
template <typename T>
void sample_with_gradient(const Grid<T>& g, double x, double y, std::span<double> value,
                          std::span<double> dx, std::span<double> dy) {
  const auto ax = detail::axis_taps(x, g.width());
  const auto ay = detail::axis_taps(y, g.height());
  const std::size_t nc = g.channels();
  for (std::size_t c = 0; c < nc; ++c) {
    const double v00 = g(ax.i0, ay.i0, c);
    const double v10 = g(ax.i1, ay.i0, c);
    const double v01 = g(ax.i0, ay.i1, c);
    const double v11 = g(ax.i1, ay.i1, c);
    const double top = v00 + ax.t * (v10 - v00);
    const double bot = v01 + ax.t * (v11 - v01);
    value[c] = top + ay.t * (bot - top);

    double gx = 0.0;
    if (ax.scale != 0.0) {
      const double r0 = static_cast<double>(g(ax.ip, ay.i0, c)) - g(ax.im, ay.i0, c);
      const double r1 = static_cast<double>(g(ax.ip, ay.i1, c)) - g(ax.im, ay.i1, c);
      gx = ax.scale * (r0 + ay.t * (r1 - r0));
    }
    double gy = 0.0;
    if (ay.scale != 0.0) {
      const double c0 = static_cast<double>(g(ax.i0, ay.ip, c)) - g(ax.i0, ay.im, c);
      const double c1 = static_cast<double>(g(ax.i1, ay.ip, c)) - g(ax.i1, ay.im, c);
      gy = ay.scale * (c0 + ax.t * (c1 - c0));
    }
    dx[c] = gx;
    dy[c] = gy;
  }
}

// Summed-area table per channel: out(x, y) = sum of g over [0..x] x [0..y].
template <typename T>
GridD integral_image(const Grid<T>& g) {
  const std::size_t w = g.width(), h = g.height(), nc = g.channels();
  GridD out(w, h, nc);
  std::vector<double> row(nc);
  for (std::size_t y = 0; y < h; ++y) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < nc; ++c) {
        row[c] += g(x, y, c);
        out(x, y, c) = row[c] + (y > 0 ? out(x, y - 1, c) : 0.0);
      }
    }
  }
  return out;
}

// Per-pixel mean over a kernel x kernel window clipped at the borders.
inline GridD box_mean(const GridD& integral, std::size_t kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw InvalidArgument("box_mean kernel must be odd and >= 1, got " + std::to_string(kernel));
  }
  const std::size_t w = integral.width(), h = integral.height(), nc = integral.channels();
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(kernel / 2);
  const auto W = static_cast<std::ptrdiff_t>(w), H = static_cast<std::ptrdiff_t>(h);
  GridD out(w, h, nc);
  auto at = [&](std::ptrdiff_t x, std::ptrdiff_t y, std::size_t c) -> double {
    return (x < 0 || y < 0) ? 0.0 : integral(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
  };
  for (std::ptrdiff_t y = 0; y < H; ++y) {
    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, y - r) - 1;
    const std::ptrdiff_t y1 = std::min(H - 1, y + r);
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, x - r) - 1;
      const std::ptrdiff_t x1 = std::min(W - 1, x + r);
      const double area = static_cast<double>((x1 - x0) * (y1 - y0));
      for (std::size_t c = 0; c < nc; ++c) {
        const double s = at(x1, y1, c) - at(x0, y1, c) - at(x1, y0, c) + at(x0, y0, c);
        out(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = s / area;
      }
    }
  }
  return out;
}

}  // namespace lsm
