#pragma once

// HTTP session service for interactive segmentation.
//
//   POST   /sessions                  raw PNG body        -> 201 {"session_id"}
//   POST   /sessions/{id}/scribbles   {"foreground","background"} polylines,
//                                     optional If-Match: <revision>
//                                                         -> 200 {"mask", "revision"[, "iou_estimate"]}
//   GET    /sessions/{id}/mask                            -> 200 image/png
//   POST   /sessions/{id}/ground_truth  PNG mask          -> 204
//   DELETE /sessions/{id}                                 -> 204

#include <httplib.h>

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsm/driver.hpp"
#include "lsm/error.hpp"
#include "lsm/io.hpp"
#include "lsm/pyramid.hpp"
#include "lsm/synthetic.hpp"

namespace lsm::service {

struct ServiceConfig {
  std::size_t max_width = 1024;
  std::size_t max_height = 1024;
  SolverConfig solver;
  std::string allow_origin;  // empty: no CORS headers
};

struct Session {
  std::mutex mutex;
  GridD image;
  FeaturePyramid pyramid;
  std::set<PixelCoord> foreground;
  std::set<PixelCoord> background;
  std::uint64_t revision = 0;
  std::vector<std::uint8_t> last_mask_png;
  std::optional<GridD> ground_truth;
};

class SessionStore {
public:
  std::string create(std::shared_ptr<Session> s) {
    std::unique_lock lock(mutex_);
    std::string id;
    do {
      id = random_id();
    } while (sessions_.count(id));
    sessions_.emplace(id, std::move(s));
    return id;
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  bool erase(const std::string& id) {
    std::unique_lock lock(mutex_);
    return sessions_.erase(id) > 0;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
  }

private:
  std::string random_id() {
    static constexpr char hex[] = "0123456789abcdef";
    std::string id(32, '0');
    for (auto& ch : id) ch = hex[rng_() & 15u];
    return id;
  }

  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mt19937_64 rng_{std::random_device{}()};
};

namespace detail {

inline void json_reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void error_reply(httplib::Response& res, int status, const std::string& message) {
  json_reply(res, status, {{"error", message}});
}

// Accepts 3, "3" and W/"3".
inline std::optional<std::uint64_t> parse_revision(std::string v) {
  if (v.rfind("W/", 0) == 0) v = v.substr(2);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos || v.size() > 19) return std::nullopt;
  return std::stoull(v);
}

inline std::string revision_etag(std::uint64_t r) { return "\"" + std::to_string(r) + "\""; }

}  // namespace detail

class Service {
public:
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)) { cfg_.solver.validate(); }

  const SessionStore& sessions() const { return store_; }

  void install(httplib::Server& server) {
    if (!cfg_.allow_origin.empty()) {
      server.set_default_headers({{"Access-Control-Allow-Origin", cfg_.allow_origin},
                                  {"Access-Control-Expose-Headers", "ETag"},
                                  {"Vary", "Origin"}});
      server.Options(R"(/sessions.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type, If-Match");
        res.status = 204;
      });
    }
    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) { create(req, res); });
    server.Post(R"(/sessions/([0-9a-f]+)/scribbles)",
                [this](const httplib::Request& req, httplib::Response& res) { scribbles(req, res); });
    server.Post(R"(/sessions/([0-9a-f]+)/ground_truth)",
                [this](const httplib::Request& req, httplib::Response& res) { ground_truth(req, res); });
    server.Get(R"(/sessions/([0-9a-f]+)/mask)",
               [this](const httplib::Request& req, httplib::Response& res) { mask(req, res); });
    server.Delete(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (!store_.erase(req.matches[1])) return detail::error_reply(res, 404, "unknown session");
      res.status = 204;
    });
  }

private:
  void create(const httplib::Request& req, httplib::Response& res) {
    const std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
    auto session = std::make_shared<Session>();
    try {
      const auto [w, h] = io::png_dimensions(bytes);
      if (w > cfg_.max_width || h > cfg_.max_height) {
        return detail::error_reply(res, 413,
                                   "image is " + std::to_string(w) + "x" + std::to_string(h) + ", limit is " +
                                       std::to_string(cfg_.max_width) + "x" + std::to_string(cfg_.max_height));
      }
      session->image = io::decode_png(bytes);
    } catch (const FormatError& e) {
      return detail::error_reply(res, 400, e.what());
    }
    try {
      session->pyramid = build_pyramid(session->image, cfg_.solver.pyramid);
    } catch (const Error& e) {
      return detail::error_reply(res, 400, e.what());
    }
    for (std::size_t l = 0; l < session->pyramid.size(); ++l) {
      if (session->pyramid.level(l).pixels() < cfg_.solver.k_schedule[l]) {
        return detail::error_reply(res, 400, "image too small for the pyramid and basis schedule");
      }
    }
    const std::string id = store_.create(std::move(session));
    res.set_header("Location", "/sessions/" + id);
    detail::json_reply(res, 201, {{"session_id", id}});
  }

  void scribbles(const httplib::Request& req, httplib::Response& res) {
    const auto session = store_.find(req.matches[1]);
    if (!session) return detail::error_reply(res, 404, "unknown session");

    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
      return detail::error_reply(res, 400, std::string("invalid JSON: ") + e.what());
    }
    io::ScribblePolylines lines;
    try {
      lines = io::parse_scribbles(body);
    } catch (const InvalidArgument& e) {
      return detail::error_reply(res, 422, e.what());
    }
    if (lines.foreground.empty() && lines.background.empty()) {
      return detail::error_reply(res, 422, "update contains no polylines");
    }
    std::optional<std::uint64_t> expected;
    if (req.has_header("If-Match")) {
      expected = detail::parse_revision(req.get_header_value("If-Match"));
      if (!expected) return detail::error_reply(res, 400, "malformed If-Match revision");
    }

    std::lock_guard lock(session->mutex);
    if (expected && *expected != session->revision) {
      res.set_header("ETag", detail::revision_etag(session->revision));
      return detail::error_reply(res, 409, "revision conflict: current revision is " + std::to_string(session->revision));
    }
    if (!io::polylines_in_bounds(lines, session->image.width(), session->image.height())) {
      return detail::error_reply(res, 422, "scribble polyline leaves the image bounds");
    }
    auto fg = session->foreground;
    auto bg = session->background;
    for (const auto& p : io::rasterize(lines.foreground)) fg.insert(p);
    for (const auto& p : io::rasterize(lines.background)) bg.insert(p);
    if (fg.empty() || bg.empty()) {
      return detail::error_reply(res, 422, "at least one foreground and one background scribble are required");
    }

    // Solved from zero on the accumulated set: the mask depends only on the
    // scribbles, not on how they were batched.
    const Scribbles all{{fg.begin(), fg.end()}, {bg.begin(), bg.end()}};
    TaskResult result;
    try {
      result = run_iseg_with_pyramid(session->pyramid, all, cfg_.solver);
    } catch (const Error& e) {
      return detail::error_reply(res, 500, std::string("solver failed: ") + e.what());
    }
    session->foreground = std::move(fg);
    session->background = std::move(bg);
    session->last_mask_png = io::encode_png_mask(result.mask);
    ++session->revision;

    const std::string png(session->last_mask_png.begin(), session->last_mask_png.end());
    nlohmann::json out{{"mask", httplib::detail::base64_encode(png)}, {"revision", session->revision}};
    if (session->ground_truth) out["iou_estimate"] = synthetic::iou(result.mask, *session->ground_truth);
    res.set_header("ETag", detail::revision_etag(session->revision));
    detail::json_reply(res, 200, out);
  }

  void ground_truth(const httplib::Request& req, httplib::Response& res) {
    const auto session = store_.find(req.matches[1]);
    if (!session) return detail::error_reply(res, 404, "unknown session");
    GridD g;
    try {
      g = io::decode_png(std::vector<std::uint8_t>(req.body.begin(), req.body.end()));
    } catch (const FormatError& e) {
      return detail::error_reply(res, 400, e.what());
    }
    std::lock_guard lock(session->mutex);
    if (g.width() != session->image.width() || g.height() != session->image.height()) {
      return detail::error_reply(res, 422, "ground truth size differs from the session image");
    }
    GridD m(g.width(), g.height(), 1);
    for (std::size_t p = 0; p < m.pixels(); ++p) m.at_pixel(p) = g.at_pixel(p, 0) >= 0.5 ? 1.0 : 0.0;
    session->ground_truth = std::move(m);
    res.status = 204;
  }

  void mask(const httplib::Request& req, httplib::Response& res) {
    const auto session = store_.find(req.matches[1]);
    if (!session) return detail::error_reply(res, 404, "unknown session");
    std::lock_guard lock(session->mutex);
    if (session->last_mask_png.empty()) return detail::error_reply(res, 409, "no mask yet");
    res.set_header("ETag", detail::revision_etag(session->revision));
    res.set_content(std::string(session->last_mask_png.begin(), session->last_mask_png.end()), "image/png");
  }

  ServiceConfig cfg_;
  SessionStore store_;
};

}  // namespace lsm::service
