#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "lsm/basis_gen.hpp"
#include "lsm/io.hpp"
#include "lsm/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(LSM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) / ("lsm_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::vector<std::uint8_t> slurp(const std::string& p) { return lsm::binary::read_file(p); }

}  // namespace

TEST_F(CliTest, FlowOnIdenticalFramesIsZero) {
  const auto pair = lsm::synthetic::translated_pair(128, 96, 0, 0);
  lsm::io::write_png(path("a.png"), pair.target);
  ASSERT_EQ(run("flow " + path("a.png") + " " + path("a.png") + " --out " + path("f.flo")), 0);
  const auto f = lsm::io::read_flo(path("f.flo"));
  EXPECT_EQ(f.width(), 128u);
  EXPECT_EQ(f.height(), 96u);
  for (float v : f.data()) EXPECT_EQ(v, 0.0f);
}

TEST_F(CliTest, StereoIsDeterministicAndReports) {
  const auto pair = lsm::synthetic::translated_pair(128, 96, 2, 0);
  lsm::io::write_png(path("l.png"), pair.target);
  lsm::io::write_png(path("r.png"), pair.source);
  const std::string base = "stereo " + path("l.png") + " " + path("r.png");
  ASSERT_EQ(run(base + " --out " + path("d1.pfm") + " --json-report " + path("rep.json")), 0);
  ASSERT_EQ(run(base + " --out " + path("d2.pfm")), 0);
  EXPECT_EQ(slurp(path("d1.pfm")), slurp(path("d2.pfm")));
  const auto rep = nlohmann::json::parse(std::ifstream(path("rep.json")));
  EXPECT_EQ(rep.at("task"), "stereo");
  EXPECT_EQ(rep.at("levels").size(), 4u);

  ASSERT_EQ(run(base + " --levels 2 --k-schedule 4,8 --iters 2 --out " + path("d3.pfm")), 0);
  EXPECT_EQ(lsm::io::read_pfm(path("d3.pfm")).width(), 128u);
}

TEST_F(CliTest, SegmentationCommands) {
  const auto scene = lsm::synthetic::two_color_scene();
  lsm::io::write_png(path("img.png"), scene.image);
  std::ofstream(path("s.json")) << R"({"foreground": [[[48, 64], [80, 64]]], "background": [[[16, 16], [16, 112]]]})";
  ASSERT_EQ(run("iseg " + path("img.png") + " --scribbles " + path("s.json") + " --out " + path("m.png")), 0);
  const auto mask = lsm::io::read_png_mask(path("m.png"));
  EXPECT_GE(lsm::synthetic::iou(mask, scene.partition), 0.95);

  lsm::io::write_png_mask(path("prev.png"), scene.partition);
  ASSERT_EQ(run("vseg " + path("img.png") + " " + path("img.png") + " --prev-mask " + path("prev.png") + " --out " +
                path("v.png")),
            0);
  EXPECT_GE(lsm::synthetic::iou(lsm::io::read_png_mask(path("v.png")), scene.partition), 0.9);

  std::ofstream(path("bad.json")) << R"({"foreground": [[[500, 1]]], "background": [[[1, 1]]]})";
  EXPECT_EQ(run("iseg " + path("img.png") + " --scribbles " + path("bad.json") + " --out " + path("x.png")), 1);
}

TEST_F(CliTest, GeneratedBasisAndWeightErrors) {
  const auto pair = lsm::synthetic::translated_pair(128, 96, 1, 0);
  lsm::io::write_png(path("l.png"), pair.target);
  lsm::io::write_png(path("r.png"), pair.source);
  ASSERT_EQ(run("weights --init random --seed 3 --out " + path("w.lsmw")), 0);
  const std::string base = "stereo " + path("l.png") + " " + path("r.png") + " --out " + path("d.pfm");
  EXPECT_EQ(run(base + " --basis generated:" + path("w.lsmw")), 0);
  EXPECT_EQ(run(base + " --basis generated:" + std::string(LSM_SOURCE_DIR) + "/data/weights/random.lsmw"), 0);

  auto bytes = slurp(path("w.lsmw"));
  bytes[bytes.size() - 1] ^= 0x5a;
  lsm::binary::write_file(path("bad.lsmw"), bytes);
  EXPECT_EQ(run(base + " --basis generated:" + path("bad.lsmw")), 1);

  // Weights for a different K schedule.
  ASSERT_EQ(run("weights --k-schedule 2,2,2,2 --out " + path("k2.lsmw")), 0);
  EXPECT_EQ(run(base + " --basis generated:" + path("k2.lsmw")), 1);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  lsm::io::write_png(path("a.png"), lsm::GridD(64, 64, 3, 0.5));
  EXPECT_EQ(run("flow " + path("a.png") + " " + path("a.png") + " --out " + path("f.flo") + " --bogus"), 2);
  EXPECT_EQ(run("flow " + path("missing.png") + " " + path("a.png") + " --out " + path("f.flo")), 2);
  EXPECT_EQ(run("flow " + path("a.png") + " " + path("a.png")), 2);
  EXPECT_EQ(run("stereo " + path("a.png") + " " + path("a.png") + " --out " + path("d.pfm") + " --basis nope"), 2);
  EXPECT_EQ(run("stereo " + path("a.png") + " " + path("a.png") + " --out " + path("d.pfm") + " --k-schedule 2,4"), 2);
  EXPECT_EQ(run("stereo " + path("a.png") + " " + path("a.png") + " --out " + path("d.pfm") + " --levels 5"), 2);
  EXPECT_EQ(run(""), 2);
}

TEST_F(CliTest, CorruptImageExitsOne) {
  std::ofstream(path("junk.png")) << "definitely not a png";
  EXPECT_EQ(run("flow " + path("junk.png") + " " + path("junk.png") + " --out " + path("f.flo")), 1);
}

TEST_F(CliTest, VerifyPasses) {
  ASSERT_EQ(run("verify --json-report " + path("v.json")), 0);
  const auto j = nlohmann::json::parse(std::ifstream(path("v.json")));
  EXPECT_TRUE(j.at("passed").get<bool>());
  EXPECT_GE(j.at("suites").size(), 7u);
}
