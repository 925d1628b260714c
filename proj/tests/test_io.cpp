#include <gtest/gtest.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "lsm/io.hpp"
#include "lsm/synthetic.hpp"

using lsm::GridD;
using lsm::GridF;

namespace {

std::vector<std::uint8_t> header_bytes(const std::string& s) { return {s.begin(), s.end()}; }

void append_f32(std::vector<std::uint8_t>& out, float v, bool little) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * (little ? i : 3 - i))));
}

}  // namespace

TEST(Flo, RoundTripAndLayout) {
  GridF f(3, 2, 2);
  for (std::size_t i = 0; i < f.size(); ++i) f.storage()[i] = static_cast<float>(i) * 0.5f - 1.0f;
  const auto bytes = lsm::io::encode_flo(f);
  ASSERT_EQ(bytes.size(), 12u + 3 * 2 * 2 * 4);
  float magic;
  std::memcpy(&magic, bytes.data(), 4);
  EXPECT_EQ(magic, 202021.25f);
  EXPECT_EQ(lsm::io::decode_flo(bytes), f);

  const std::string path = ::testing::TempDir() + "t.flo";
  lsm::io::write_flo(path, f);
  EXPECT_EQ(lsm::io::read_flo(path), f);
  std::remove(path.c_str());
}

TEST(Flo, CorruptInputs) {
  auto bytes = lsm::io::encode_flo(GridF(2, 2, 2, 1.0f));
  auto bad = bytes;
  bad[0] ^= 0xff;
  try {
    lsm::io::decode_flo(bad);
    FAIL();
  } catch (const lsm::FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(lsm::io::decode_flo(extra), lsm::FormatError);
  bytes.resize(bytes.size() - 1);
  EXPECT_THROW(lsm::io::decode_flo(bytes), lsm::FormatError);
  EXPECT_THROW(lsm::io::encode_flo(GridF(2, 2, 1)), lsm::InvalidArgument);
}

TEST(Pfm, HandBuiltLittleEndianFixture) {
  // Rows are stored bottom to top.
  auto bytes = header_bytes("Pf\n2 2\n-1.0\n");
  for (float v : {3.0f, 4.0f, 1.0f, 2.0f}) append_f32(bytes, v, true);
  const GridF g = lsm::io::decode_pfm(bytes);
  EXPECT_EQ(g(0, 0), 1.0f);
  EXPECT_EQ(g(1, 0), 2.0f);
  EXPECT_EQ(g(0, 1), 3.0f);
  EXPECT_EQ(g(1, 1), 4.0f);
  EXPECT_EQ(lsm::io::encode_pfm(g), bytes);
}

TEST(Pfm, BigEndianAndColour) {
  auto bytes = header_bytes("PF\n1 1\n1.0\n");
  for (float v : {0.25f, -2.0f, 8.0f}) append_f32(bytes, v, false);
  const GridF g = lsm::io::decode_pfm(bytes);
  ASSERT_EQ(g.channels(), 3u);
  EXPECT_EQ(g(0, 0, 0), 0.25f);
  EXPECT_EQ(g(0, 0, 1), -2.0f);
  EXPECT_EQ(g(0, 0, 2), 8.0f);
  EXPECT_EQ(lsm::io::decode_pfm(lsm::io::encode_pfm(g)), g);
}

TEST(Pfm, RoundTripAndErrors) {
  GridF g(5, 3, 1);
  for (std::size_t i = 0; i < g.size(); ++i) g.storage()[i] = static_cast<float>(i) / 7.0f;
  const std::string path = ::testing::TempDir() + "t.pfm";
  lsm::io::write_pfm(path, g);
  EXPECT_EQ(lsm::io::read_pfm(path), g);
  std::remove(path.c_str());

  try {
    lsm::io::decode_pfm(header_bytes("P6\n1 1\n-1\n    "));
    FAIL();
  } catch (const lsm::FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  EXPECT_THROW(lsm::io::decode_pfm(header_bytes("Pf\n2 2\n-1.0\n1234")), lsm::FormatError);
  EXPECT_THROW(lsm::io::decode_pfm(header_bytes("Pf\n2 x\n-1.0\n")), lsm::FormatError);
  EXPECT_THROW(lsm::io::decode_pfm(header_bytes("Pf\n1 1\n0\n    ")), lsm::FormatError);
}

TEST(Png, ColourRoundTripIsExactAt8Bits) {
  GridD img(7, 5, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.storage()[i] = static_cast<double>(i % 256) / 255.0;
  const auto bytes = lsm::io::encode_png(img);
  EXPECT_EQ(lsm::io::png_dimensions(bytes), (std::pair<std::size_t, std::size_t>{7, 5}));
  const GridD back = lsm::io::decode_png(bytes);
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.storage()[i], img.storage()[i], 1e-12);
}

TEST(Png, MaskIsZeroOr255AndTruncationFails) {
  GridD mask(4, 3, 1);
  mask(1, 1) = 1.0;
  mask(3, 2) = 1.0;
  const auto bytes = lsm::io::encode_png_mask(mask);
  const GridD back = lsm::io::decode_png(bytes);
  for (std::size_t p = 0; p < back.pixels(); ++p) EXPECT_EQ(back.at_pixel(p), mask.at_pixel(p));

  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  EXPECT_THROW(lsm::io::decode_png(truncated), lsm::FormatError);
  EXPECT_THROW(lsm::io::decode_png(header_bytes("not a png")), lsm::FormatError);
  EXPECT_THROW(lsm::io::png_dimensions(header_bytes("short")), lsm::FormatError);
}

TEST(Scribbles, BresenhamSegments) {
  const auto diag = lsm::io::rasterize(std::vector<lsm::io::Polyline>{{{0, 0}, {3, 3}}});
  EXPECT_EQ(diag, (std::vector<lsm::PixelCoord>{{0, 0}, {1, 1}, {2, 2}, {3, 3}}));
  const auto shallow = lsm::io::rasterize(std::vector<lsm::io::Polyline>{{{0, 0}, {4, 2}}});
  EXPECT_EQ(shallow.size(), 5u);
  const auto single = lsm::io::rasterize(std::vector<lsm::io::Polyline>{{{5, 6}}});
  EXPECT_EQ(single, (std::vector<lsm::PixelCoord>{{5, 6}}));
  // Overlapping polylines are deduplicated.
  const auto dup = lsm::io::rasterize(std::vector<lsm::io::Polyline>{{{0, 0}, {2, 0}}, {{2, 0}, {0, 0}}});
  EXPECT_EQ(dup.size(), 3u);
}

TEST(Scribbles, JsonParsingAndBounds) {
  const auto j = nlohmann::json::parse(R"({"foreground": [[[1, 1], [3, 1]]], "background": [[[0, 4]]]})");
  const auto s = lsm::io::rasterize(lsm::io::parse_scribbles(j), 5, 5);
  EXPECT_EQ(s.foreground.size(), 3u);
  EXPECT_EQ(s.background.size(), 1u);
  EXPECT_THROW(lsm::io::rasterize(lsm::io::parse_scribbles(j), 3, 3), lsm::InvalidArgument);

  for (const char* bad : {R"([1, 2])", R"({"foreground": 3})", R"({"foreground": [[]]})",
                          R"({"foreground": [[[1]]]})", R"({"background": [[["a", 1]]]})"}) {
    EXPECT_THROW(lsm::io::parse_scribbles(nlohmann::json::parse(bad)), lsm::InvalidArgument) << bad;
  }

  const std::string path = ::testing::TempDir() + "s.json";
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(lsm::io::read_scribbles(path, 5, 5), lsm::FormatError);
  std::remove(path.c_str());
}

TEST(Report, SchemaMatchesRun) {
  const auto scene = lsm::synthetic::two_color_scene();
  const auto r = lsm::run_iseg(scene.image, scene.scribbles, {});
  const auto j = lsm::io::report_json(r);
  EXPECT_EQ(j.at("task"), "iseg");
  ASSERT_EQ(j.at("levels").size(), 4u);
  for (const auto& lvl : j.at("levels")) {
    EXPECT_TRUE(lvl.contains("stride"));
    EXPECT_TRUE(lvl.contains("k"));
    for (const auto& it : lvl.at("iterations")) {
      for (const char* key : {"energy_before", "energy_after", "step_norm", "damping", "accepted"})
        EXPECT_TRUE(it.contains(key)) << key;
      EXPECT_LE(it.at("energy_after").get<double>(), it.at("energy_before").get<double>());
    }
  }
  EXPECT_TRUE(j.at("wall_ms").is_number());
}
