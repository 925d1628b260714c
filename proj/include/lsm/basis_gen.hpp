#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "lsm/binary.hpp"
#include "lsm/data_terms.hpp"
#include "lsm/error.hpp"
#include "lsm/grid.hpp"
#include "lsm/linalg.hpp"
#include "lsm/subspace.hpp"

namespace lsm {

// ---- analytic bases ----------------------------------------------------------

enum class AnalyticKind { constant_dct, bilinear_patches };

namespace detail {

// JPEG-style zigzag over (u, v) frequency pairs, skipping modes the grid cannot hold.
inline std::vector<std::pair<std::size_t, std::size_t>> zigzag_modes(std::size_t w, std::size_t h, std::size_t k) {
  std::vector<std::pair<std::size_t, std::size_t>> modes;
  for (std::size_t s = 0; modes.size() < k && s < w + h; ++s) {
    for (std::size_t i = 0; i <= s && modes.size() < k; ++i) {
      const std::size_t u = (s % 2 == 0) ? s - i : i;
      const std::size_t v = s - u;
      if (u < w && v < h) modes.emplace_back(u, v);
    }
  }
  return modes;
}

// Factor k = gx * gy with gx / gy as close as possible to the grid aspect ratio.
inline std::pair<std::size_t, std::size_t> patch_grid(std::size_t w, std::size_t h, std::size_t k) {
  std::pair<std::size_t, std::size_t> best{k, 1};
  double best_err = 1e300;
  const double aspect = std::log(static_cast<double>(w) / static_cast<double>(h));
  for (std::size_t gx = 1; gx <= k; ++gx) {
    if (k % gx != 0) continue;
    const std::size_t gy = k / gx;
    if (gx > w || gy > h) continue;
    const double err = std::abs(std::log(static_cast<double>(gx) / static_cast<double>(gy)) - aspect);
    if (err < best_err) {
      best_err = err;
      best = {gx, gy};
    }
  }
  if (best.first > w || best.second > h) throw InvalidArgument("cannot fit bilinear patches on the level grid");
  return best;
}

inline double hat(double pos, std::size_t node, std::size_t count, std::size_t extent) {
  if (count == 1) return 1.0;
  const double spacing = static_cast<double>(extent - 1) / static_cast<double>(count - 1);
  const double t = std::abs(pos - spacing * static_cast<double>(node)) / spacing;
  return t < 1.0 ? 1.0 - t : 0.0;
}

}  // namespace detail

// Raw (not orthonormalized) analytic basis columns, column-major N x k.
inline std::vector<double> analytic_basis_columns(std::size_t w, std::size_t h, std::size_t k, AnalyticKind kind) {
  if (k < 1) throw InvalidArgument("basis dimension must be >= 1");
  if (k > w * h) {
    throw InvalidArgument("basis dimension " + std::to_string(k) + " exceeds level pixel count " + std::to_string(w * h));
  }
  const std::size_t n = w * h;
  std::vector<double> cols(n * k, 0.0);
  if (kind == AnalyticKind::constant_dct) {
    const auto modes = detail::zigzag_modes(w, h, k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto [u, v] = modes[j];
      for (std::size_t y = 0; y < h; ++y) {
        const double cy = std::cos(std::numbers::pi * static_cast<double>(v) * (static_cast<double>(y) + 0.5) /
                                   static_cast<double>(h));
        for (std::size_t x = 0; x < w; ++x) {
          const double cx = std::cos(std::numbers::pi * static_cast<double>(u) * (static_cast<double>(x) + 0.5) /
                                     static_cast<double>(w));
          cols[j * n + y * w + x] = cx * cy;
        }
      }
    }
  } else {
    const auto [gx, gy] = detail::patch_grid(w, h, k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t ix = j % gx, iy = j / gx;
      for (std::size_t y = 0; y < h; ++y) {
        const double wy = detail::hat(static_cast<double>(y), iy, gy, h);
        for (std::size_t x = 0; x < w; ++x) {
          cols[j * n + y * w + x] = detail::hat(static_cast<double>(x), ix, gx, w) * wy;
        }
      }
    }
  }
  return cols;
}

inline SubspaceBasis analytic_basis(std::size_t w, std::size_t h, std::size_t k, AnalyticKind kind) {
  return SubspaceBasis(w * h, k, analytic_basis_columns(w, h, k, kind));
}

// ---- minimization contexts ---------------------------------------------------

// Zero mean, unit variance; a constant field maps to zeros.
inline GridD normalize_field(const GridD& x) {
  GridD out(x.width(), x.height(), 1);
  const std::size_t n = x.pixels();
  double mean = 0.0;
  for (std::size_t p = 0; p < n; ++p) mean += x.at_pixel(p);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t p = 0; p < n; ++p) var += (x.at_pixel(p) - mean) * (x.at_pixel(p) - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (std::size_t p = 0; p < n; ++p) out.at_pixel(p) = sd > 1e-12 ? (x.at_pixel(p) - mean) / sd : 0.0;
  return out;
}

struct MinimizationContext {
  GridD grouped_first;   // m channels
  GridD grouped_second;  // m channels
  GridD normalized_x;    // 1 channel
};

inline MinimizationContext build_min_context(const GroupedPartials& grouped, const GridD& x) {
  if (grouped.first.channels() != grouped.groups || grouped.second.channels() != grouped.groups) {
    throw InvalidArgument("build_min_context expects scalar-task grouped partials");
  }
  if (x.channels() != 1 || x.pixels() != grouped.first.pixels()) {
    throw InvalidArgument("solution field does not match the grouped partials");
  }
  return {grouped.first, grouped.second, normalize_field(x)};
}

// Per-pixel, per-group determinants of the 2x2 flow blocks: det = |H|, det_x
// with column 0 replaced by the gradient d, det_y with column 1 replaced by d.
struct CramerContext {
  GridD det_full;
  GridD det_x;
  GridD det_y;
};

inline CramerContext build_cramer_context(const GroupedPartials& grouped) {
  const std::size_t m = grouped.groups;
  if (grouped.first.channels() != 2 * m || grouped.second.channels() != 3 * m) {
    throw InvalidArgument("build_cramer_context expects flow grouped partials");
  }
  const std::size_t w = grouped.first.width(), h = grouped.first.height();
  CramerContext out{GridD(w, h, m), GridD(w, h, m), GridD(w, h, m)};
  for (std::size_t p = 0; p < grouped.first.pixels(); ++p) {
    for (std::size_t g = 0; g < m; ++g) {
      const double dx = grouped.first.at_pixel(p, 2 * g), dy = grouped.first.at_pixel(p, 2 * g + 1);
      const double hxx = grouped.second.at_pixel(p, 3 * g), hxy = grouped.second.at_pixel(p, 3 * g + 1),
                   hyy = grouped.second.at_pixel(p, 3 * g + 2);
      out.det_full.at_pixel(p, g) = det2(Mat2{{{hxx, hxy}, {hxy, hyy}}});
      out.det_x.at_pixel(p, g) = det2(Mat2{{{dx, hxy}, {dy, hyy}}});
      out.det_y.at_pixel(p, g) = det2(Mat2{{{hxx, dx}, {hxy, dy}}});
    }
  }
  return out;
}

// Contexts for the horizontal (component 0) or vertical (component 1) flow subspace.
inline MinimizationContext flow_component_context(const CramerContext& cramer, const GridD& flow, std::size_t component) {
  const GridD& num = component == 0 ? cramer.det_x : cramer.det_y;
  return {num, cramer.det_full, normalize_field(flow.channel(component))};
}

// ---- generator weights -------------------------------------------------------

// Affine channel mix: out = W in + b, W is rows x cols (row-major).
struct Layer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  friend bool operator==(const Layer&, const Layer&) = default;
};

inline constexpr std::size_t kPoolingScales = 4;
inline constexpr std::size_t kResidualBlocks = 4;

struct LevelWeights {
  std::size_t c = 0;  // feature channels
  std::size_t m = 0;  // image-context channels / groups
  std::size_t k = 0;  // basis dimension
  Layer image_reduce;                                  // m x c
  std::array<Layer, kPoolingScales> scale_proj;        // 2m x (3m+1)
  std::array<Layer, 2 * kResidualBlocks> residual;     // 8m x 8m, pairs (first, second)
  Layer output;                                        // k x 8m

  friend bool operator==(const LevelWeights&, const LevelWeights&) = default;
};

struct GeneratorWeights {
  std::vector<LevelWeights> levels;
  friend bool operator==(const GeneratorWeights&, const GeneratorWeights&) = default;
};

namespace detail {

inline void check_layer(const Layer& l, std::size_t rows, std::size_t cols, const char* name) {
  if (l.rows != rows || l.cols != cols || l.weights.size() != rows * cols || l.bias.size() != rows) {
    throw InvalidWeights(std::string("layer ") + name + " has shape " + std::to_string(l.rows) + "x" +
                         std::to_string(l.cols) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace detail

inline void validate_level(const LevelWeights& lw) {
  if (lw.c == 0 || lw.m == 0 || lw.k == 0) throw InvalidWeights("level weights need c, m, K >= 1");
  const std::size_t m = lw.m;
  detail::check_layer(lw.image_reduce, m, lw.c, "image_reduce");
  for (const auto& l : lw.scale_proj) detail::check_layer(l, 2 * m, 3 * m + 1, "scale_proj");
  for (const auto& l : lw.residual) detail::check_layer(l, 8 * m, 8 * m, "residual");
  detail::check_layer(lw.output, lw.k, 8 * m, "output");
}

enum class WeightInit { identity, random, zero_unit_bias };

inline Layer make_layer(std::size_t rows, std::size_t cols, WeightInit init, std::mt19937_64& rng) {
  Layer l{rows, cols, std::vector<float>(rows * cols, 0.0f), std::vector<float>(rows, 0.0f)};
  switch (init) {
    case WeightInit::identity:
      for (std::size_t i = 0; i < std::min(rows, cols); ++i) l.weights[i * cols + i] = 1.0f;
      break;
    case WeightInit::random: {
      std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
      for (auto& v : l.weights) v = static_cast<float>(nd(rng));
      std::normal_distribution<double> nb(0.0, 0.1);
      for (auto& v : l.bias) v = static_cast<float>(nb(rng));
      break;
    }
    case WeightInit::zero_unit_bias:
      std::fill(l.bias.begin(), l.bias.end(), 1.0f);
      break;
  }
  return l;
}

inline LevelWeights make_level_weights(std::size_t c, std::size_t m, std::size_t k, WeightInit init,
                                       std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  LevelWeights lw;
  lw.c = c;
  lw.m = m;
  lw.k = k;
  lw.image_reduce = make_layer(m, c, init, rng);
  for (auto& l : lw.scale_proj) l = make_layer(2 * m, 3 * m + 1, init, rng);
  for (auto& l : lw.residual) l = make_layer(8 * m, 8 * m, init, rng);
  lw.output = make_layer(k, 8 * m, init, rng);
  return lw;
}

// ---- LSMW weight file --------------------------------------------------------

namespace detail {

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

template <typename Fn>
void for_each_layer(const LevelWeights& lw, Fn&& fn) {
  fn(lw.image_reduce);
  for (const auto& l : lw.scale_proj) fn(l);
  for (const auto& l : lw.residual) fn(l);
  fn(lw.output);
}

template <typename Fn>
void for_each_layer(LevelWeights& lw, Fn&& fn) {
  fn(lw.image_reduce);
  for (auto& l : lw.scale_proj) fn(l);
  for (auto& l : lw.residual) fn(l);
  fn(lw.output);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_weights(const GeneratorWeights& w) {
  std::vector<std::uint8_t> out;
  binary::put_bytes(out, "LSMW");
  binary::put_u32(out, 1);
  binary::put_u32(out, static_cast<std::uint32_t>(w.levels.size()));
  for (const auto& lw : w.levels) {
    binary::put_u32(out, static_cast<std::uint32_t>(lw.c));
    binary::put_u32(out, static_cast<std::uint32_t>(lw.m));
    binary::put_u32(out, static_cast<std::uint32_t>(lw.k));
  }
  for (const auto& lw : w.levels) {
    detail::for_each_layer(lw, [&](const Layer& l) {
      binary::put_u32(out, static_cast<std::uint32_t>(l.rows));
      binary::put_u32(out, static_cast<std::uint32_t>(l.cols));
      for (float v : l.weights) binary::put_f32(out, v);
      for (float v : l.bias) binary::put_f32(out, v);
    });
  }
  binary::put_u32(out, detail::crc32_of(out.data(), out.size()));
  return out;
}

// Any structural or checksum problem is reported as InvalidWeights.
inline GeneratorWeights decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16) throw InvalidWeights("LSMW file truncated (" + std::to_string(bytes.size()) + " bytes)");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (detail::crc32_of(bytes.data(), body) != stored) throw InvalidWeights("LSMW checksum mismatch");
  try {
    const std::vector<std::uint8_t> payload(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(body));
    binary::Reader rd(payload);
    rd.expect_magic("LSMW", "LSMW weight file");
    if (rd.u32("version") != 1) throw InvalidWeights("unsupported LSMW version");
    const std::uint32_t count = rd.u32("level count");
    if (count == 0 || count > 64) throw InvalidWeights("implausible LSMW level count");
    GeneratorWeights w;
    w.levels.resize(count);
    for (auto& lw : w.levels) {
      lw.c = rd.u32("c");
      lw.m = rd.u32("m");
      lw.k = rd.u32("K");
    }
    for (auto& lw : w.levels) {
      detail::for_each_layer(lw, [&](Layer& l) {
        l.rows = rd.u32("rows");
        l.cols = rd.u32("cols");
        const std::size_t n = l.rows * l.cols;
        rd.require(4 * (n + l.rows), "layer payload");
        l.weights.resize(n);
        for (auto& v : l.weights) v = rd.f32("weight");
        l.bias.resize(l.rows);
        for (auto& v : l.bias) v = rd.f32("bias");
      });
      validate_level(lw);
    }
    if (rd.remaining() != 0) throw InvalidWeights("trailing bytes in LSMW payload");
    return w;
  } catch (const FormatError& e) {
    throw InvalidWeights(std::string("malformed LSMW file: ") + e.what());
  }
}

inline void write_weights(const std::string& path, const GeneratorWeights& w) {
  binary::write_file(path, encode_weights(w));
}

inline GeneratorWeights read_weights(const std::string& path) { return decode_weights(binary::read_file(path)); }

// ---- generator pipeline ------------------------------------------------------

namespace detail {

inline GridD apply_layer(const Layer& l, const GridD& in) {
  if (in.channels() != l.cols) {
    throw InvalidWeights("layer expects " + std::to_string(l.cols) + " input channels, got " +
                         std::to_string(in.channels()));
  }
  GridD out(in.width(), in.height(), l.rows);
  for (std::size_t p = 0; p < in.pixels(); ++p) {
    for (std::size_t r = 0; r < l.rows; ++r) {
      double s = l.bias[r];
      const float* row = l.weights.data() + r * l.cols;
      for (std::size_t c = 0; c < l.cols; ++c) s += static_cast<double>(row[c]) * in.at_pixel(p, c);
      out.at_pixel(p, r) = s;
    }
  }
  return out;
}

inline GridD concat_channels(const std::vector<const GridD*>& parts) {
  std::size_t total = 0;
  for (const auto* g : parts) total += g->channels();
  GridD out(parts.front()->width(), parts.front()->height(), total);
  for (std::size_t p = 0; p < out.pixels(); ++p) {
    std::size_t off = 0;
    for (const auto* g : parts) {
      for (std::size_t c = 0; c < g->channels(); ++c) out.at_pixel(p, off + c) = g->at_pixel(p, c);
      off += g->channels();
    }
  }
  return out;
}

inline std::size_t round_to_odd(std::size_t v) {
  if (v < 1) return 1;
  return v % 2 == 0 ? v + 1 : v;
}

}  // namespace detail

// Pooling window sizes {1, w/8, w/4, w/2}, each rounded up to odd.
inline std::array<std::size_t, kPoolingScales> pooling_kernels(std::size_t level_width) {
  return {1, detail::round_to_odd(level_width / 8), detail::round_to_odd(level_width / 4),
          detail::round_to_odd(level_width / 2)};
}

// Channel counts at each pipeline stage, for shape checks:
// image context, concatenated input, per-scale projection, multi-scale, residual output, basis.
struct GeneratorTrace {
  std::vector<std::size_t> stage_channels;
  std::array<std::size_t, kPoolingScales> kernels{};
};

// Raw generator output, N x K column-major (before orthonormalization).
inline std::vector<double> generate_basis_columns(const GridD& image_ctx, const MinimizationContext& min_ctx,
                                                  const LevelWeights& weights, std::size_t k,
                                                  GeneratorTrace* trace = nullptr) {
  validate_level(weights);
  const std::size_t m = weights.m;
  if (weights.k != k) throw InvalidWeights("weights emit K = " + std::to_string(weights.k) + ", requested " + std::to_string(k));
  if (image_ctx.channels() != weights.c) {
    throw InvalidWeights("image context has " + std::to_string(image_ctx.channels()) + " channels, weights expect " +
                         std::to_string(weights.c));
  }
  if (min_ctx.grouped_first.channels() != m || min_ctx.grouped_second.channels() != m ||
      min_ctx.normalized_x.channels() != 1) {
    throw InvalidWeights("minimization context does not have m = " + std::to_string(m) + " groups");
  }
  if (min_ctx.grouped_first.pixels() != image_ctx.pixels() || min_ctx.normalized_x.pixels() != image_ctx.pixels()) {
    throw InvalidWeights("context grids differ in size");
  }

  const GridD reduced = detail::apply_layer(weights.image_reduce, image_ctx);
  const GridD input = detail::concat_channels({&reduced, &min_ctx.grouped_first, &min_ctx.grouped_second,
                                               &min_ctx.normalized_x});
  const GridD integral = integral_image(input);
  const auto kernels = pooling_kernels(image_ctx.width());
  std::array<GridD, kPoolingScales> scales;
  for (std::size_t s = 0; s < kPoolingScales; ++s) {
    scales[s] = detail::apply_layer(weights.scale_proj[s], box_mean(integral, kernels[s]));
  }
  GridD feat = detail::concat_channels({&scales[0], &scales[1], &scales[2], &scales[3]});
  const std::size_t multiscale_channels = feat.channels();
  for (std::size_t b = 0; b < kResidualBlocks; ++b) {
    GridD inner = detail::apply_layer(weights.residual[2 * b], feat);
    for (auto& v : inner.storage()) v = std::max(0.0, v);
    const GridD branch = detail::apply_layer(weights.residual[2 * b + 1], inner);
    for (std::size_t i = 0; i < feat.size(); ++i) feat.storage()[i] += branch.storage()[i];
  }
  const GridD out = detail::apply_layer(weights.output, feat);

  if (trace) {
    trace->stage_channels = {reduced.channels(), input.channels(), scales[0].channels(), multiscale_channels,
                             feat.channels(), out.channels()};
    trace->kernels = kernels;
  }
  const std::size_t n = out.pixels();
  std::vector<double> cols(n * k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t p = 0; p < n; ++p) cols[j * n + p] = out.at_pixel(p, j);
  }
  return cols;
}

inline SubspaceBasis generate_basis(const GridD& image_ctx, const MinimizationContext& min_ctx,
                                    const LevelWeights& weights, std::size_t k, GeneratorTrace* trace = nullptr) {
  auto cols = generate_basis_columns(image_ctx, min_ctx, weights, k, trace);
  return SubspaceBasis(image_ctx.pixels(), k, std::move(cols));
}

}  // namespace lsm
