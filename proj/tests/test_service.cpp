#include <gtest/gtest.h>

#include <thread>

#include "lsm/service.hpp"
#include "lsm/synthetic.hpp"

using lsm::GridD;

namespace {

std::string decode_base64(const std::string& in) {
  static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char ch : in) {
    if (ch == '=') break;
    const auto pos = alphabet.find(ch);
    if (pos == std::string::npos) continue;
    acc = (acc << 6) | static_cast<std::uint32_t>(pos);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((acc >> bits) & 0xff));
    }
  }
  return out;
}

std::string as_string(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

GridD decode_mask(const std::string& png) {
  return lsm::io::decode_png(std::vector<std::uint8_t>(png.begin(), png.end()));
}

nlohmann::json polylines(const std::vector<lsm::PixelCoord>& fg, const std::vector<lsm::PixelCoord>& bg) {
  auto lines = [](const std::vector<lsm::PixelCoord>& pts) {
    nlohmann::json arr = nlohmann::json::array();
    if (!pts.empty()) {
      nlohmann::json line = nlohmann::json::array();
      for (const auto& p : pts) line.push_back({p.x, p.y});
      arr.push_back(line);
    }
    return arr;
  };
  return {{"foreground", lines(fg)}, {"background", lines(bg)}};
}

class ServiceTest : public ::testing::Test {
protected:
  void SetUp() override { start({}); }

  void start(lsm::service::ServiceConfig cfg) {
    stop();
    service_ = std::make_unique<lsm::service::Service>(std::move(cfg));
    server_ = std::make_unique<httplib::Server>();
    service_->install(*server_);
    port_ = server_->bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(120, 0);
  }

  void stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
    client_.reset();
    server_.reset();
  }

  void TearDown() override { stop(); }

  std::string create(const GridD& image) {
    auto res = client_->Post("/sessions", as_string(lsm::io::encode_png(image)), "image/png");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, 201) << res->body;
    return nlohmann::json::parse(res->body).at("session_id");
  }

  httplib::Result scribble(const std::string& id, const nlohmann::json& body, const httplib::Headers& headers = {}) {
    return client_->Post("/sessions/" + id + "/scribbles", headers, body.dump(), "application/json");
  }

  std::unique_ptr<lsm::service::Service> service_;
  std::unique_ptr<httplib::Server> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_F(ServiceTest, CreateSessionAndRejectBadImages) {
  const auto pair = lsm::synthetic::translated_pair(512, 384, 0, 0);
  auto res = client_->Post("/sessions", as_string(lsm::io::encode_png(pair.target)), "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  EXPECT_EQ(nlohmann::json::parse(res->body).at("session_id").get<std::string>().size(), 32u);
  EXPECT_TRUE(res->has_header("Location"));

  auto png = lsm::io::encode_png(GridD(64, 64, 3, 0.5));
  png.resize(png.size() / 2);
  res = client_->Post("/sessions", as_string(png), "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  res = client_->Post("/sessions", as_string(lsm::io::encode_png(GridD(4096, 4096, 1, 0.0))), "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 413);

  // Too small for the coarsest level to hold K = 2 pixels.
  res = client_->Post("/sessions", as_string(lsm::io::encode_png(GridD(16, 16, 3, 0.5))), "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(ServiceTest, TwoColorScribblesProduceAccurateMask) {
  const auto scene = lsm::synthetic::two_color_scene();
  const std::string id = create(scene.image);

  auto res = client_->Get("/sessions/" + id + "/mask");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);

  res = client_->Post("/sessions/" + id + "/ground_truth", as_string(lsm::io::encode_png_mask(scene.partition)),
                      "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);

  res = scribble(id, polylines(scene.scribbles.foreground, scene.scribbles.background));
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto body = nlohmann::json::parse(res->body);
  EXPECT_EQ(body.at("revision"), 1);
  EXPECT_GE(body.at("iou_estimate").get<double>(), 0.95);
  EXPECT_EQ(res->get_header_value("ETag"), "\"1\"");
  const std::string mask_png = decode_base64(body.at("mask"));
  EXPECT_GE(lsm::synthetic::iou(decode_mask(mask_png), scene.partition), 0.95);

  res = client_->Get("/sessions/" + id + "/mask");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, mask_png);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
}

TEST_F(ServiceTest, ScribbleErrors) {
  const auto scene = lsm::synthetic::two_color_scene();
  const std::string id = create(scene.image);

  auto res = scribble("00ff", polylines(scene.scribbles.foreground, scene.scribbles.background));
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);

  res = scribble(id, nlohmann::json{{"foreground", nlohmann::json::array()}, {"background", nlohmann::json::array()}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);

  res = scribble(id, polylines({{1, 1}}, {{500, 2}}));
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);

  res = scribble(id, polylines({{64, 64}}, {}));
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);

  res = client_->Post("/sessions/" + id + "/scribbles", "{oops", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  // None of the rejected requests changed the session.
  res = scribble(id, polylines(scene.scribbles.foreground, scene.scribbles.background), {{"If-Match", "\"0\""}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200) << res->body;

  // Replaying the same body against the old revision conflicts.
  res = scribble(id, polylines(scene.scribbles.foreground, scene.scribbles.background), {{"If-Match", "\"0\""}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);
  EXPECT_EQ(res->get_header_value("ETag"), "\"1\"");

  res = scribble(id, polylines({{64, 64}}, {}), {{"If-Match", "abc"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(ServiceTest, DeleteRemovesSession) {
  const std::string id = create(lsm::synthetic::two_color_scene().image);
  auto res = client_->Delete("/sessions/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  res = client_->Get("/sessions/" + id + "/mask");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = client_->Delete("/sessions/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

TEST_F(ServiceTest, InterleavedSessionsStayIsolated) {
  const auto a = lsm::synthetic::two_color_scene();
  const auto b = lsm::synthetic::two_color_scene(128, 128, 40, 32, 112, 104);
  const std::string ida = create(a.image), idb = create(b.image);
  ASSERT_NE(ida, idb);

  const auto half = [](const std::vector<lsm::PixelCoord>& v, bool first) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    return first ? std::vector<lsm::PixelCoord>(v.begin(), mid) : std::vector<lsm::PixelCoord>(mid, v.end());
  };
  std::string last_a, last_b;
  for (bool first : {true, false}) {
    auto ra = scribble(ida, polylines(half(a.scribbles.foreground, first), half(a.scribbles.background, first)));
    auto rb = scribble(idb, polylines(half(b.scribbles.foreground, first), half(b.scribbles.background, first)));
    ASSERT_TRUE(ra && rb);
    ASSERT_EQ(ra->status, 200) << ra->body;
    ASSERT_EQ(rb->status, 200) << rb->body;
    last_a = decode_base64(nlohmann::json::parse(ra->body).at("mask"));
    last_b = decode_base64(nlohmann::json::parse(rb->body).at("mask"));
  }
  EXPECT_GE(lsm::synthetic::iou(decode_mask(last_a), a.partition), 0.95);
  EXPECT_GE(lsm::synthetic::iou(decode_mask(last_b), b.partition), 0.95);
  EXPECT_NE(last_a, last_b);
}

TEST_F(ServiceTest, BatchingDoesNotChangeMask) {
  const auto scene = lsm::synthetic::two_color_scene();
  const auto& fg = scene.scribbles.foreground;
  const auto& bg = scene.scribbles.background;

  const std::string one = create(scene.image);
  auto res = scribble(one, polylines(fg, bg));
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const std::string single = decode_base64(nlohmann::json::parse(res->body).at("mask"));

  // Same strokes split over three requests in a different order.
  const std::string many = create(scene.image);
  const std::vector<lsm::PixelCoord> fg1(fg.begin(), fg.begin() + 5), fg2(fg.begin() + 5, fg.end());
  const std::vector<lsm::PixelCoord> bg1(bg.begin(), bg.begin() + 10), bg2(bg.begin() + 10, bg.end());
  for (const auto& body : {polylines(fg2, bg2), polylines({}, bg1), polylines(fg1, {})}) {
    res = scribble(many, body);
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
  }
  EXPECT_EQ(decode_base64(nlohmann::json::parse(res->body).at("mask")), single);

  // Cold start from the accumulated set on the 8-bit image the service decoded.
  const GridD decoded = lsm::io::decode_png(lsm::io::encode_png(scene.image));
  const auto cold = lsm::run_iseg(decoded, scene.scribbles, {});
  EXPECT_EQ(as_string(lsm::io::encode_png_mask(cold.mask)), single);
}

TEST_F(ServiceTest, CorsHeadersWhenConfigured) {
  lsm::service::ServiceConfig cfg;
  cfg.allow_origin = "http://localhost:5173";
  start(cfg);
  auto res = client_->Options("/sessions");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Headers").find("If-Match"), std::string::npos);

  const std::string id = create(lsm::synthetic::two_color_scene().image);
  res = client_->Get("/sessions/" + id + "/mask");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
}
