#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "lsm/binary.hpp"
#include "lsm/error.hpp"
#include "lsm/grid.hpp"

namespace lsm {

enum class FeatureKind { handcrafted, external_precomputed };

struct PyramidConfig {
  std::vector<std::size_t> strides{32, 16, 8, 4};
  std::vector<std::size_t> channels_per_level{32, 32, 16, 16};
  FeatureKind feature_kind = FeatureKind::handcrafted;
  // Gaussian sigma before subsampling, in units of the level stride.
  double blur_sigma = 0.5;
  // LSMF file, used when feature_kind is external_precomputed.
  std::string external_path;

  void validate() const {
    if (strides.size() < 2 || strides.size() != channels_per_level.size()) {
      throw InvalidArgument("pyramid config needs >= 2 levels with one channel count per stride");
    }
    for (std::size_t i = 0; i < strides.size(); ++i) {
      if (strides[i] == 0 || channels_per_level[i] == 0) {
        throw InvalidArgument("pyramid strides and channel counts must be positive");
      }
      if (i > 0 && strides[i] >= strides[i - 1]) {
        throw InvalidArgument("pyramid strides must decrease coarse to fine");
      }
    }
    if (!(blur_sigma > 0.0)) throw InvalidArgument("blur_sigma must be positive");
  }

  std::size_t levels() const noexcept { return strides.size(); }
};

// Levels ordered coarse to fine. Level pixel X is centred on input pixel
// X * stride + (stride - 1) / 2.
struct FeaturePyramid {
  std::vector<GridD> levels;
  std::vector<std::size_t> strides;
  std::size_t input_width = 0;
  std::size_t input_height = 0;

  std::size_t size() const noexcept { return levels.size(); }
  const GridD& level(std::size_t i) const { return levels.at(i); }
};

inline std::size_t level_extent(std::size_t input, std::size_t stride) {
  return (input + stride - 1) / stride;
}

inline double level_to_input(double level_coord, std::size_t stride) {
  return level_coord * static_cast<double>(stride) + 0.5 * static_cast<double>(stride - 1);
}

inline double input_to_level(double input_coord, std::size_t stride) {
  return (input_coord - 0.5 * static_cast<double>(stride - 1)) / static_cast<double>(stride);
}

inline constexpr std::size_t kFilterBankChannels = 11;

namespace detail {

inline std::vector<double> gaussian_taps(double sigma, double center_frac, std::ptrdiff_t& first) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  first = -radius;
  std::vector<double> w;
  double sum = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius + 1; ++k) {
    const double d = static_cast<double>(k) - center_frac;
    const double v = std::exp(-0.5 * d * d / (sigma * sigma));
    w.push_back(v);
    sum += v;
  }
  for (double& v : w) v /= sum;
  return w;
}

inline std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return 0;
  if (i >= static_cast<std::ptrdiff_t>(n)) return n - 1;
  return static_cast<std::size_t>(i);
}

// Gaussian blur evaluated only at the level's sample centres, clamp-to-edge.
inline GridD blur_subsample(const GridD& image, std::size_t stride, double sigma) {
  const std::size_t w = image.width(), h = image.height(), nc = image.channels();
  const std::size_t lw = level_extent(w, stride), lh = level_extent(h, stride);
  const double half = 0.5 * static_cast<double>(stride - 1);
  const double frac = half - std::floor(half);
  std::ptrdiff_t first = 0;
  const std::vector<double> taps = gaussian_taps(sigma, frac, first);

  GridD rows(lw, h, nc);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t X = 0; X < lw; ++X) {
      const auto base = static_cast<std::ptrdiff_t>(X * stride + static_cast<std::size_t>(std::floor(half)));
      for (std::size_t c = 0; c < nc; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < taps.size(); ++k) {
          acc += taps[k] * image(clamp_index(base + first + static_cast<std::ptrdiff_t>(k), w), y, c);
        }
        rows(X, y, c) = acc;
      }
    }
  }
  GridD out(lw, lh, nc);
  for (std::size_t Y = 0; Y < lh; ++Y) {
    const auto base = static_cast<std::ptrdiff_t>(Y * stride + static_cast<std::size_t>(std::floor(half)));
    for (std::size_t X = 0; X < lw; ++X) {
      for (std::size_t c = 0; c < nc; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < taps.size(); ++k) {
          acc += taps[k] * rows(X, clamp_index(base + first + static_cast<std::ptrdiff_t>(k), h), c);
        }
        out(X, Y, c) = acc;
      }
    }
  }
  return out;
}

inline GridD gaussian_blur(const GridD& g, double sigma) {
  const std::size_t w = g.width(), h = g.height(), nc = g.channels();
  std::ptrdiff_t first = 0;
  std::vector<double> taps = gaussian_taps(sigma, 0.0, first);
  taps.pop_back();  // symmetric kernel: drop the extra right tap
  double sum = 0.0;
  for (double t : taps) sum += t;
  for (double& t : taps) t /= sum;
  GridD tmp(w, h, nc), out(w, h, nc);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < nc; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < taps.size(); ++k)
          acc += taps[k] * g(clamp_index(static_cast<std::ptrdiff_t>(x) + first + static_cast<std::ptrdiff_t>(k), w), y, c);
        tmp(x, y, c) = acc;
      }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < nc; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < taps.size(); ++k)
          acc += taps[k] * tmp(x, clamp_index(static_cast<std::ptrdiff_t>(y) + first + static_cast<std::ptrdiff_t>(k), h), c);
        out(x, y, c) = acc;
      }
  return out;
}

inline void central_gradient(const GridD& g, std::size_t c, std::size_t x, std::size_t y, double& gx, double& gy) {
  const std::size_t w = g.width(), h = g.height();
  const std::size_t xm = x > 0 ? x - 1 : 0, xp = x + 1 < w ? x + 1 : w - 1;
  const std::size_t ym = y > 0 ? y - 1 : 0, yp = y + 1 < h ? y + 1 : h - 1;
  gx = 0.5 * (g(xp, y, c) - g(xm, y, c));
  gy = 0.5 * (g(x, yp, c) - g(x, ym, c));
}

}  // namespace detail

// The handcrafted per-level filter bank on an RGB (3-channel) level image:
//   0 intensity, 1-3 R G B, 4-5 intensity d/dx d/dy, 6 gradient magnitude,
//   7-10 derivative-of-Gaussian responses at 0, 45, 90 and 135 degrees.
inline GridD filter_bank(const GridD& rgb) {
  if (rgb.channels() != 3) throw InvalidArgument("filter_bank expects a 3-channel image");
  const std::size_t w = rgb.width(), h = rgb.height();
  GridD intensity(w, h, 1);
  for (std::size_t p = 0; p < rgb.pixels(); ++p) {
    intensity.at_pixel(p) = (rgb.at_pixel(p, 0) + rgb.at_pixel(p, 1) + rgb.at_pixel(p, 2)) / 3.0;
  }
  const GridD smooth = detail::gaussian_blur(intensity, 1.0);
  GridD out(w, h, kFilterBankChannels);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double ix = 0, iy = 0, sx = 0, sy = 0;
      detail::central_gradient(intensity, 0, x, y, ix, iy);
      detail::central_gradient(smooth, 0, x, y, sx, sy);
      out(x, y, 0) = intensity(x, y);
      for (std::size_t c = 0; c < 3; ++c) out(x, y, 1 + c) = rgb(x, y, c);
      out(x, y, 4) = ix;
      out(x, y, 5) = iy;
      out(x, y, 6) = std::sqrt(ix * ix + iy * iy);
      const double r = std::numbers::sqrt2 / 2.0;
      out(x, y, 7) = sx;
      out(x, y, 8) = r * (sx + sy);
      out(x, y, 9) = sy;
      out(x, y, 10) = r * (sy - sx);
    }
  }
  return out;
}

// Zero mean, unit variance per channel; constant channels become all zeros.
inline void normalize_channels(GridD& g) {
  const std::size_t n = g.pixels();
  for (std::size_t c = 0; c < g.channels(); ++c) {
    double mean = 0.0;
    for (std::size_t p = 0; p < n; ++p) mean += g.at_pixel(p, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const double d = g.at_pixel(p, c) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t p = 0; p < n; ++p) {
      g.at_pixel(p, c) = sd > 1e-10 ? (g.at_pixel(p, c) - mean) / sd : 0.0;
    }
  }
}

// Features of one level before normalization: blur, subsample, filter bank,
// channels repeated cyclically (or truncated) to `channels`.
inline GridD raw_level_features(const GridD& rgb, std::size_t stride, std::size_t channels, double blur_sigma) {
  const GridD small = detail::blur_subsample(rgb, stride, blur_sigma * static_cast<double>(stride));
  const GridD bank = filter_bank(small);
  GridD out(bank.width(), bank.height(), channels);
  for (std::size_t p = 0; p < bank.pixels(); ++p) {
    for (std::size_t c = 0; c < channels; ++c) out.at_pixel(p, c) = bank.at_pixel(p, c % kFilterBankChannels);
  }
  return out;
}

inline GridD to_rgb(const GridD& image) {
  if (image.channels() == 3) return image;
  if (image.channels() != 1) {
    throw InvalidArgument("images must have 1 or 3 channels, got " + std::to_string(image.channels()));
  }
  GridD rgb(image.width(), image.height(), 3);
  for (std::size_t p = 0; p < image.pixels(); ++p) {
    for (std::size_t c = 0; c < 3; ++c) rgb.at_pixel(p, c) = image.at_pixel(p);
  }
  return rgb;
}

// ---- LSMF feature container -------------------------------------------------

inline std::vector<std::uint8_t> encode_feature_file(const std::vector<GridF>& levels) {
  std::vector<std::uint8_t> out;
  binary::put_bytes(out, "LSMF");
  binary::put_u32(out, 1);
  binary::put_u32(out, static_cast<std::uint32_t>(levels.size()));
  for (const auto& l : levels) {
    binary::put_u32(out, static_cast<std::uint32_t>(l.width()));
    binary::put_u32(out, static_cast<std::uint32_t>(l.height()));
    binary::put_u32(out, static_cast<std::uint32_t>(l.channels()));
  }
  for (const auto& l : levels) {
    for (float v : l.data()) binary::put_f32(out, v);
  }
  return out;
}

inline std::vector<GridF> decode_feature_file(const std::vector<std::uint8_t>& bytes) {
  binary::Reader rd(bytes);
  rd.expect_magic("LSMF", "LSMF feature file");
  const std::size_t version_at = rd.offset();
  if (rd.u32("version") != 1) throw FormatError("unsupported LSMF version", version_at);
  const std::size_t count_at = rd.offset();
  const std::uint32_t count = rd.u32("level count");
  if (count == 0 || count > 64) throw FormatError("implausible LSMF level count", count_at);
  std::vector<std::array<std::uint32_t, 3>> dims(count);
  for (auto& d : dims) {
    const std::size_t at = rd.offset();
    d = {rd.u32("level width"), rd.u32("level height"), rd.u32("level channels")};
    if (d[0] == 0 || d[1] == 0 || d[2] == 0) throw FormatError("zero LSMF level dimension", at);
  }
  std::vector<GridF> levels;
  for (const auto& d : dims) {
    const std::size_t n = std::size_t{d[0]} * d[1] * d[2];
    rd.require(n * 4, "LSMF level payload");
    std::vector<float> v(n);
    for (auto& f : v) f = rd.f32("feature value");
    levels.emplace_back(d[0], d[1], d[2], std::move(v));
  }
  if (rd.remaining() != 0) throw FormatError("trailing bytes after LSMF payload", rd.offset());
  return levels;
}

inline void write_feature_file(const std::string& path, const std::vector<GridF>& levels) {
  binary::write_file(path, encode_feature_file(levels));
}

inline std::vector<GridF> read_feature_file(const std::string& path) {
  return decode_feature_file(binary::read_file(path));
}

// -----------------------------------------------------------------------------

inline FeaturePyramid build_pyramid(const GridD& image, const PyramidConfig& cfg) {
  cfg.validate();
  if (image.channels() != 1 && image.channels() != 3) {
    throw InvalidArgument("images must have 1 or 3 channels, got " + std::to_string(image.channels()));
  }
  FeaturePyramid pyr;
  pyr.strides = cfg.strides;
  pyr.input_width = image.width();
  pyr.input_height = image.height();

  if (cfg.feature_kind == FeatureKind::external_precomputed) {
    const auto levels = read_feature_file(cfg.external_path);
    if (levels.size() != cfg.levels()) {
      throw InvalidArgument("feature file has " + std::to_string(levels.size()) + " levels, config expects " +
                            std::to_string(cfg.levels()));
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const auto& l = levels[i];
      if (l.width() != level_extent(image.width(), cfg.strides[i]) ||
          l.height() != level_extent(image.height(), cfg.strides[i])) {
        throw InvalidArgument("feature file level " + std::to_string(i) + " does not match the stride schedule");
      }
      pyr.levels.push_back(l.cast<double>());
    }
    return pyr;
  }

  const GridD rgb = to_rgb(image);
  for (std::size_t i = 0; i < cfg.levels(); ++i) {
    GridD level = raw_level_features(rgb, cfg.strides[i], cfg.channels_per_level[i], cfg.blur_sigma);
    normalize_channels(level);
    pyr.levels.push_back(std::move(level));
  }
  return pyr;
}

enum class FieldKind { labeling, displacement };

// Bilinear resampling between centre-aligned grids whose resolutions differ by
// `scale` (fine / coarse). Displacement channels are measured in pixels of the
// grid they live on, so they are multiplied by `scale`.
inline GridD upsample_solution(const GridD& x, std::size_t target_w, std::size_t target_h, double scale,
                               FieldKind kind) {
  GridD out(target_w, target_h, x.channels());
  const double gain = kind == FieldKind::displacement ? scale : 1.0;
  for (std::size_t y = 0; y < target_h; ++y) {
    const double sy = (static_cast<double>(y) + 0.5) / scale - 0.5;
    for (std::size_t xx = 0; xx < target_w; ++xx) {
      const double sx = (static_cast<double>(xx) + 0.5) / scale - 0.5;
      for (std::size_t c = 0; c < x.channels(); ++c) out(xx, y, c) = gain * bilinear_sample(x, sx, sy, c);
    }
  }
  return out;
}

// Area-average of a binary input-resolution mask onto a level, thresholded at 0.5.
inline GridD downsample_mask(const GridD& mask, std::size_t stride) {
  const std::size_t lw = level_extent(mask.width(), stride), lh = level_extent(mask.height(), stride);
  GridD out(lw, lh, 1);
  for (std::size_t Y = 0; Y < lh; ++Y) {
    for (std::size_t X = 0; X < lw; ++X) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t y = Y * stride; y < std::min(mask.height(), (Y + 1) * stride); ++y) {
        for (std::size_t x = X * stride; x < std::min(mask.width(), (X + 1) * stride); ++x) {
          sum += mask(x, y) > 0.5 ? 1.0 : 0.0;
          ++n;
        }
      }
      out(X, Y) = sum >= 0.5 * static_cast<double>(n) ? 1.0 : 0.0;
    }
  }
  return out;
}

// Point-samples an input-resolution field at a level's sample centres (no value scaling).
inline GridD sample_to_level(const GridD& field, std::size_t stride) {
  const std::size_t lw = level_extent(field.width(), stride), lh = level_extent(field.height(), stride);
  GridD out(lw, lh, field.channels());
  for (std::size_t Y = 0; Y < lh; ++Y) {
    for (std::size_t X = 0; X < lw; ++X) {
      for (std::size_t c = 0; c < field.channels(); ++c) {
        out(X, Y, c) = bilinear_sample(field, level_to_input(static_cast<double>(X), stride),
                                       level_to_input(static_cast<double>(Y), stride), c);
      }
    }
  }
  return out;
}

}  // namespace lsm
