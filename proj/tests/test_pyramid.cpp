#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "lsm/pyramid.hpp"
#include "lsm/synthetic.hpp"

using lsm::GridD;

namespace {

GridD random_image(std::size_t w, std::size_t h, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GridD g(w, h, c);
  for (auto& v : g.storage()) v = u(rng);
  return g;
}

std::string temp_path(const char* name) { return ::testing::TempDir() + name; }

}  // namespace

TEST(Pyramid, LevelSizesFollowStrideSchedule) {
  const auto pyr = lsm::build_pyramid(random_image(512, 384, 3, 1), {});
  ASSERT_EQ(pyr.size(), 4u);
  const std::size_t expect[4][2] = {{16, 12}, {32, 24}, {64, 48}, {128, 96}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(pyr.level(i).width(), expect[i][0]);
    EXPECT_EQ(pyr.level(i).height(), expect[i][1]);
  }
  EXPECT_EQ(pyr.level(0).channels(), 32u);
  EXPECT_EQ(pyr.level(3).channels(), 16u);

  const auto odd = lsm::build_pyramid(random_image(101, 77, 1, 2), {});
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(odd.level(i).width(), (101 + odd.strides[i] - 1) / odd.strides[i]);
    EXPECT_EQ(odd.level(i).height(), (77 + odd.strides[i] - 1) / odd.strides[i]);
  }
}

TEST(Pyramid, ConfigValidation) {
  lsm::PyramidConfig cfg;
  cfg.strides = {8};
  cfg.channels_per_level = {16};
  EXPECT_THROW(cfg.validate(), lsm::InvalidArgument);
  cfg.strides = {8, 16};
  cfg.channels_per_level = {16, 16};
  EXPECT_THROW(cfg.validate(), lsm::InvalidArgument);
  EXPECT_THROW(lsm::build_pyramid(GridD(8, 8, 2), {}), lsm::InvalidArgument);
}

TEST(Pyramid, ConstantImageHasZeroDerivativeChannels) {
  GridD img(40, 30, 3);
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    img.at_pixel(p, 0) = 0.2;
    img.at_pixel(p, 1) = 0.5;
    img.at_pixel(p, 2) = 0.9;
  }
  const GridD raw = lsm::raw_level_features(img, 4, 11, 0.5);
  for (std::size_t p = 0; p < raw.pixels(); ++p)
    for (std::size_t c = 4; c < 11; ++c) EXPECT_EQ(raw.at_pixel(p, c), 0.0);
  const auto pyr = lsm::build_pyramid(img, {});
  for (const auto& l : pyr.levels)
    for (double v : l.data()) EXPECT_EQ(v, 0.0);
}

TEST(Pyramid, ChannelsAreNormalized) {
  const auto pyr = lsm::build_pyramid(random_image(160, 120, 3, 3), {});
  for (const auto& l : pyr.levels) {
    for (std::size_t c = 0; c < l.channels(); ++c) {
      double mean = 0.0, sq = 0.0;
      for (std::size_t p = 0; p < l.pixels(); ++p) mean += l.at_pixel(p, c);
      mean /= static_cast<double>(l.pixels());
      for (std::size_t p = 0; p < l.pixels(); ++p) sq += (l.at_pixel(p, c) - mean) * (l.at_pixel(p, c) - mean);
      EXPECT_LE(std::abs(mean), 1e-6);
      EXPECT_LE(std::abs(std::sqrt(sq / static_cast<double>(l.pixels())) - 1.0), 1e-6);
    }
  }
}

TEST(Pyramid, ChannelsRepeatTheFilterBankCyclically) {
  const GridD raw = lsm::raw_level_features(random_image(32, 32, 3, 4), 4, 24, 0.5);
  for (std::size_t p = 0; p < raw.pixels(); ++p) {
    EXPECT_EQ(raw.at_pixel(p, 11), raw.at_pixel(p, 0));
    EXPECT_EQ(raw.at_pixel(p, 23), raw.at_pixel(p, 1));
  }
}

TEST(Pyramid, TranslatedPairResidualIsSmallAtTrueWarp) {
  // 8 input px = 2 level px at stride 4.
  const auto pair = lsm::synthetic::translated_pair(192, 144, 8.0, -4.0);
  const auto pt = lsm::build_pyramid(pair.target, {});
  const auto ps = lsm::build_pyramid(pair.source, {});
  const GridD& ft = pt.level(3);
  const GridD& fs = ps.level(3);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 6; y + 6 < ft.height(); ++y)
    for (std::size_t x = 6; x + 6 < ft.width(); ++x)
      for (std::size_t c = 0; c < ft.channels(); ++c) {
        sum += std::abs(fs(x + 2, y - 1, c) - ft(x, y, c));
        ++n;
      }
  EXPECT_LT(sum / static_cast<double>(n), 0.05);
}

TEST(Upsample, ConstantFieldsAndDisplacementScaling) {
  GridD flow(5, 4, 2);
  for (std::size_t p = 0; p < flow.pixels(); ++p) flow.at_pixel(p, 0) = 1.0;
  const GridD up = lsm::upsample_solution(flow, 10, 8, 2.0, lsm::FieldKind::displacement);
  for (std::size_t p = 0; p < up.pixels(); ++p) {
    EXPECT_DOUBLE_EQ(up.at_pixel(p, 0), 2.0);
    EXPECT_DOUBLE_EQ(up.at_pixel(p, 1), 0.0);
  }
  const GridD lab(5, 4, 1, 0.7);
  const GridD lab_up = lsm::upsample_solution(lab, 10, 8, 2.0, lsm::FieldKind::labeling);
  for (double v : lab_up.data()) EXPECT_DOUBLE_EQ(v, 0.7);
}

TEST(Upsample, LinearRampMatchesAnalytic) {
  GridD ramp(8, 6, 1);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 8; ++x) ramp(x, y) = 0.3 * static_cast<double>(x) - 0.2 * static_cast<double>(y) + 1.0;
  const GridD up = lsm::upsample_solution(ramp, 16, 12, 2.0, lsm::FieldKind::labeling);
  // Interior samples (no border clamping): coarse coordinate (X + 0.5) / 2 - 0.5.
  for (std::size_t y = 1; y + 1 < 12; ++y)
    for (std::size_t x = 1; x + 1 < 16; ++x) {
      const double sx = (static_cast<double>(x) + 0.5) / 2.0 - 0.5, sy = (static_cast<double>(y) + 0.5) / 2.0 - 0.5;
      EXPECT_NEAR(up(x, y), 0.3 * sx - 0.2 * sy + 1.0, 1e-6);
    }
}

TEST(Pyramid, MaskDownsampleAndLevelSampling) {
  GridD mask(8, 8, 1);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 4; x < 8; ++x) mask(x, y) = 1.0;
  const GridD m = lsm::downsample_mask(mask, 4);
  ASSERT_EQ(m.width(), 2u);
  EXPECT_EQ(m(0, 0), 0.0);
  EXPECT_EQ(m(1, 0), 1.0);

  GridD field(8, 8, 1, 0.25);
  const GridD s = lsm::sample_to_level(field, 4);
  for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(FeatureFile, RoundTripAndExternalMode) {
  const auto pyr = lsm::build_pyramid(random_image(64, 48, 3, 5), {});
  std::vector<lsm::GridF> levels;
  for (const auto& l : pyr.levels) levels.push_back(l.cast<float>());
  const auto bytes = lsm::encode_feature_file(levels);
  EXPECT_EQ(lsm::decode_feature_file(bytes), levels);

  const std::string path = temp_path("features.lsmf");
  lsm::write_feature_file(path, levels);
  lsm::PyramidConfig cfg;
  cfg.feature_kind = lsm::FeatureKind::external_precomputed;
  cfg.external_path = path;
  const auto ext = lsm::build_pyramid(GridD(64, 48, 3), cfg);
  for (std::size_t i = 0; i < ext.size(); ++i) EXPECT_EQ(ext.level(i).cast<float>(), levels[i]);

  // Wrong input size for the stored levels.
  EXPECT_THROW(lsm::build_pyramid(GridD(128, 48, 3), cfg), lsm::InvalidArgument);
  std::remove(path.c_str());
}

TEST(FeatureFile, CorruptHeadersReportOffsets) {
  std::vector<lsm::GridF> levels{lsm::GridF(2, 2, 1, 1.0f), lsm::GridF(4, 4, 1, 2.0f)};
  auto bytes = lsm::encode_feature_file(levels);
  auto bad = bytes;
  bad[0] = 'X';
  try {
    lsm::decode_feature_file(bad);
    FAIL();
  } catch (const lsm::FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(lsm::decode_feature_file(bytes), lsm::FormatError);
}
