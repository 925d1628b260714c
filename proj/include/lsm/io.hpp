#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsm/binary.hpp"
#include "lsm/data_terms.hpp"
#include "lsm/driver.hpp"
#include "lsm/error.hpp"
#include "lsm/grid.hpp"

namespace lsm::io {

// ---- Middlebury .flo ---------------------------------------------------------

inline constexpr float kFloMagic = 202021.25f;

inline std::vector<std::uint8_t> encode_flo(const GridF& flow) {
  if (flow.channels() != 2) throw InvalidArgument(".flo requires a 2-channel field");
  std::vector<std::uint8_t> out;
  out.reserve(12 + flow.size() * 4);
  binary::put_f32(out, kFloMagic);
  binary::put_i32(out, static_cast<std::int32_t>(flow.width()));
  binary::put_i32(out, static_cast<std::int32_t>(flow.height()));
  for (float v : flow.data()) binary::put_f32(out, v);
  return out;
}

inline GridF decode_flo(const std::vector<std::uint8_t>& bytes) {
  binary::Reader rd(bytes);
  if (rd.f32("flo magic") != kFloMagic) throw FormatError("bad .flo magic", 0);
  const std::size_t dims_at = rd.offset();
  const std::int32_t w = rd.i32("flo width");
  const std::int32_t h = rd.i32("flo height");
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) throw FormatError("bad .flo dimensions", dims_at);
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 2;
  rd.require(n * 4, "flo payload");
  std::vector<float> v(n);
  for (auto& f : v) f = rd.f32("flo value");
  if (rd.remaining() != 0) throw FormatError("trailing bytes after .flo payload", rd.offset());
  return GridF(static_cast<std::size_t>(w), static_cast<std::size_t>(h), 2, std::move(v));
}

inline void write_flo(const std::string& path, const GridF& flow) { binary::write_file(path, encode_flo(flow)); }
inline GridF read_flo(const std::string& path) { return decode_flo(binary::read_file(path)); }

// ---- PFM ---------------------------------------------------------------------

// Always written little-endian (negative scale), rows bottom to top.
inline std::vector<std::uint8_t> encode_pfm(const GridF& g) {
  if (g.channels() != 1 && g.channels() != 3) throw InvalidArgument("PFM holds 1 or 3 channels");
  std::vector<std::uint8_t> out;
  const std::string header = std::string(g.channels() == 1 ? "Pf" : "PF") + "\n" + std::to_string(g.width()) + " " +
                             std::to_string(g.height()) + "\n-1.0\n";
  binary::put_bytes(out, header);
  for (std::size_t row = g.height(); row-- > 0;) {
    for (std::size_t x = 0; x < g.width(); ++x)
      for (std::size_t c = 0; c < g.channels(); ++c) binary::put_f32(out, g(x, row, c));
  }
  return out;
}

inline GridF decode_pfm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto token = [&](const char* what) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    const std::size_t begin = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (begin == pos) throw FormatError(std::string("missing PFM ") + what, begin);
    return std::pair<std::string, std::size_t>(std::string(bytes.begin() + static_cast<std::ptrdiff_t>(begin),
                                                           bytes.begin() + static_cast<std::ptrdiff_t>(pos)),
                                               begin);
  };
  const auto [magic, magic_at] = token("magic");
  std::size_t channels = 0;
  if (magic == "Pf") channels = 1;
  else if (magic == "PF") channels = 3;
  else throw FormatError("bad PFM magic", magic_at);
  auto parse_int = [&](const char* what) {
    const auto [t, at] = token(what);
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (*end != '\0' || v <= 0 || v > (1 << 16)) throw FormatError(std::string("bad PFM ") + what, at);
    return static_cast<std::size_t>(v);
  };
  const std::size_t w = parse_int("width");
  const std::size_t h = parse_int("height");
  const auto [scale_tok, scale_at] = token("scale");
  char* end = nullptr;
  const double scale = std::strtod(scale_tok.c_str(), &end);
  if (*end != '\0' || scale == 0.0 || !std::isfinite(scale)) throw FormatError("bad PFM scale", scale_at);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PFM header not terminated", pos);
  ++pos;  // single whitespace byte before the raster
  const bool little = scale < 0.0;
  const std::size_t n = w * h * channels;
  if (bytes.size() - pos != n * 4) throw FormatError("PFM raster size mismatch", pos);
  GridF g(w, h, channels);
  for (std::size_t row = h; row-- > 0;) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::uint32_t u = 0;
        for (int i = 0; i < 4; ++i) {
          const std::uint32_t b = bytes[pos + static_cast<std::size_t>(i)];
          u |= little ? b << (8 * i) : b << (8 * (3 - i));
        }
        pos += 4;
        g(x, row, c) = std::bit_cast<float>(u);
      }
    }
  }
  return g;
}

inline void write_pfm(const std::string& path, const GridF& g) { binary::write_file(path, encode_pfm(g)); }
inline GridF read_pfm(const std::string& path) { return decode_pfm(binary::read_file(path)); }

// ---- PNG ---------------------------------------------------------------------

// Decodes any PNG to a grid in [0, 1]: 1 channel for grey inputs, else RGB.
inline GridD decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("invalid PNG: " + msg, 0);
  }
  const bool grey = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = grey ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const std::size_t channels = grey ? 1 : 3;
  const std::size_t w = img.width, h = img.height;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("invalid PNG: " + msg, 0);
  }
  GridD out(w, h, channels);
  for (std::size_t i = 0; i < buf.size(); ++i) out.storage()[i] = buf[i] / 255.0;
  return out;
}

// Width and height from the IHDR chunk without decoding pixels.
inline std::pair<std::size_t, std::size_t> png_dimensions(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (bytes.size() < 24 || std::memcmp(bytes.data(), sig, 8) != 0 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
    throw FormatError("not a PNG stream", 0);
  }
  auto be32 = [&](std::size_t at) {
    return (std::size_t{bytes[at]} << 24) | (std::size_t{bytes[at + 1]} << 16) | (std::size_t{bytes[at + 2]} << 8) |
           std::size_t{bytes[at + 3]};
  };
  return {be32(16), be32(20)};
}

// 8-bit PNG from values in [0, 1]; 1 channel -> grey, 3 channels -> RGB.
inline std::vector<std::uint8_t> encode_png(const GridD& g) {
  if (g.channels() != 1 && g.channels() != 3) throw InvalidArgument("PNG output needs 1 or 3 channels");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(g.width());
  img.height = static_cast<png_uint_32>(g.height());
  img.format = g.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(g.storage()[i], 0.0, 1.0) * 255.0));
  }
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, px.data(), 0, nullptr)) {
    throw Error(std::string("PNG encoding failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, px.data(), 0, nullptr)) {
    throw Error(std::string("PNG encoding failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

// Binary mask as 8-bit {0, 255} grey PNG.
inline std::vector<std::uint8_t> encode_png_mask(const GridD& mask) {
  GridD m(mask.width(), mask.height(), 1);
  for (std::size_t p = 0; p < m.pixels(); ++p) m.at_pixel(p) = mask.at_pixel(p) > 0.5 ? 1.0 : 0.0;
  return encode_png(m);
}

inline GridD read_png(const std::string& path) { return decode_png(binary::read_file(path)); }
inline void write_png(const std::string& path, const GridD& g) { binary::write_file(path, encode_png(g)); }
inline void write_png_mask(const std::string& path, const GridD& mask) {
  binary::write_file(path, encode_png_mask(mask));
}

// Mask PNG back to {0, 1} (any value >= 128 is foreground).
inline GridD read_png_mask(const std::string& path) {
  const GridD g = read_png(path);
  GridD m(g.width(), g.height(), 1);
  for (std::size_t p = 0; p < m.pixels(); ++p) m.at_pixel(p) = g.at_pixel(p, 0) >= 0.5 ? 1.0 : 0.0;
  return m;
}

// ---- scribbles ---------------------------------------------------------------

using Polyline = std::vector<std::array<long, 2>>;

struct ScribblePolylines {
  std::vector<Polyline> foreground;
  std::vector<Polyline> background;
};

// {"foreground": [[[x, y], ...], ...], "background": [...]}; missing keys are empty.
inline ScribblePolylines parse_scribbles(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("scribble document must be a JSON object");
  ScribblePolylines out;
  auto read = [&](const char* key, std::vector<Polyline>& dst) {
    if (!j.contains(key)) return;
    const auto& lines = j.at(key);
    if (!lines.is_array()) throw InvalidArgument(std::string("'") + key + "' must be an array of polylines");
    for (const auto& line : lines) {
      if (!line.is_array() || line.empty()) throw InvalidArgument(std::string("empty or malformed polyline in '") + key + "'");
      Polyline pl;
      for (const auto& pt : line) {
        if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
          throw InvalidArgument("polyline points must be [x, y] number pairs");
        }
        pl.push_back({std::lround(pt[0].get<double>()), std::lround(pt[1].get<double>())});
      }
      dst.push_back(std::move(pl));
    }
  };
  read("foreground", out.foreground);
  read("background", out.background);
  return out;
}

inline bool polylines_in_bounds(const ScribblePolylines& s, std::size_t w, std::size_t h) {
  for (const auto* set : {&s.foreground, &s.background})
    for (const auto& line : *set)
      for (const auto& p : line)
        if (p[0] < 0 || p[1] < 0 || p[0] >= static_cast<long>(w) || p[1] >= static_cast<long>(h)) return false;
  return true;
}

// Bresenham rasterization of each segment; single-point polylines give one pixel.
inline std::vector<PixelCoord> rasterize(const std::vector<Polyline>& lines) {
  std::vector<PixelCoord> out;
  auto plot = [&](long x, long y) { out.push_back({static_cast<std::size_t>(x), static_cast<std::size_t>(y)}); };
  for (const auto& line : lines) {
    if (line.size() == 1) plot(line[0][0], line[0][1]);
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
      long x0 = line[i][0], y0 = line[i][1];
      const long x1 = line[i + 1][0], y1 = line[i + 1][1];
      const long dx = std::labs(x1 - x0), sx = x0 < x1 ? 1 : -1;
      const long dy = -std::labs(y1 - y0), sy = y0 < y1 ? 1 : -1;
      long err = dx + dy;
      while (true) {
        plot(x0, y0);
        if (x0 == x1 && y0 == y1) break;
        const long e2 = 2 * err;
        if (e2 >= dy) {
          err += dy;
          x0 += sx;
        }
        if (e2 <= dx) {
          err += dx;
          y0 += sy;
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline Scribbles rasterize(const ScribblePolylines& s, std::size_t w, std::size_t h) {
  if (!polylines_in_bounds(s, w, h)) throw InvalidArgument("scribble polyline leaves the image bounds");
  return {rasterize(s.foreground), rasterize(s.background)};
}

inline Scribbles read_scribbles(const std::string& path, std::size_t w, std::size_t h) {
  const auto bytes = binary::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid scribble JSON: ") + e.what(), e.byte);
  }
  return rasterize(parse_scribbles(j), w, h);
}

// ---- report ------------------------------------------------------------------

inline nlohmann::json report_json(const TaskResult& r) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : r.levels) {
    nlohmann::json its = nlohmann::json::array();
    for (const auto& it : l.iterations) {
      double cn = 0.0;
      for (double c : it.report.coefficients) cn += c * c;
      its.push_back({{"energy_before", it.energy_before},
                     {"energy_after", it.energy_after},
                     {"step_norm", it.step_norm},
                     {"damping", it.damping},
                     {"accepted", it.accepted},
                     {"step_scale", it.step_scale},
                     {"predicted_decrease", it.report.predicted_decrease},
                     {"coefficient_norm", std::sqrt(cn)},
                     {"projection_residual_norm", it.report.projection_residual_norm}});
    }
    levels.push_back({{"level", l.level}, {"stride", l.stride}, {"k", l.k}, {"iterations", its}});
  }
  return {{"task", task_name(r.task)}, {"levels", levels}, {"wall_ms", r.wall_ms}};
}

}  // namespace lsm::io
