#pragma once

// Synthetic end-to-end scenes with known answers, shared by the `bench`
// command and the acceptance tests.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "lsm/driver.hpp"
#include "lsm/synthetic.hpp"

namespace lsm::bench {

struct SceneResult {
  std::string name;
  std::string metric;  // "mae", "epe", "iou", ...
  double value = 0.0;
  double ms = 0.0;
  std::vector<TaskResult> runs;
};

inline constexpr std::size_t kInteriorMargin = 16;

// Horizontal 3 px shift at 256x192; mean |x - 3| over interior pixels.
inline SceneResult stereo_shift(const SolverConfig& cfg, double shift = 3.0) {
  const auto pair = synthetic::translated_pair(256, 192, shift, 0.0);
  SceneResult s{"stereo-shift", "mae", 0.0, 0.0, {}};
  s.runs.push_back(run_stereo(pair.target, pair.source, cfg));
  s.value = synthetic::mean_epe(s.runs[0].solution_full, shift, 0.0, kInteriorMargin);
  s.ms = s.runs[0].wall_ms;
  return s;
}

// |EPE(l2r) - EPE(r2l)| on a mirror-symmetric pair.
inline SceneResult stereo_bidirectional(const SolverConfig& cfg, double shift = 3.0) {
  const auto pair = synthetic::mirror_symmetric_pair(256, 192, shift);
  auto [l2r, r2l] = run_stereo_bidirectional(pair.target, pair.source, cfg);
  const double e1 = synthetic::mean_epe(l2r.solution_full, shift, 0.0, kInteriorMargin);
  const double e2 = synthetic::mean_epe(r2l.solution_full, -shift, 0.0, kInteriorMargin);
  SceneResult s{"stereo-bidirectional", "epe-gap", std::abs(e1 - e2), l2r.wall_ms + r2l.wall_ms, {}};
  s.runs.push_back(std::move(l2r));
  s.runs.push_back(std::move(r2l));
  return s;
}

// Global translation (2.0, -1.5); mean endpoint error over interior pixels.
inline SceneResult flow_translation(const SolverConfig& cfg, double u = 2.0, double v = -1.5) {
  const auto pair = synthetic::translated_pair(256, 192, u, v, 13);
  SceneResult s{"flow-translation", "epe", 0.0, 0.0, {}};
  s.runs.push_back(run_flow(pair.target, pair.source, cfg));
  s.value = synthetic::mean_epe(s.runs[0].solution_full, u, v, kInteriorMargin);
  s.ms = s.runs[0].wall_ms;
  return s;
}

// Identical frames: largest |x| anywhere (0 for an exact fixed point).
inline SceneResult flow_zero_motion(const SolverConfig& cfg) {
  const auto pair = synthetic::translated_pair(256, 192, 0.0, 0.0, 13);
  SceneResult s{"flow-zero-motion", "max-abs", 0.0, 0.0, {}};
  s.runs.push_back(run_flow(pair.target, pair.target, cfg));
  for (double x : s.runs[0].solution_full.data()) s.value = std::max(s.value, std::abs(x));
  s.ms = s.runs[0].wall_ms;
  return s;
}

inline SceneResult iseg_two_color(const SolverConfig& cfg) {
  const auto scene = synthetic::two_color_scene();
  SceneResult s{"iseg-two-color", "iou", 0.0, 0.0, {}};
  s.runs.push_back(run_iseg(scene.image, scene.scribbles, cfg));
  s.value = synthetic::iou(s.runs[0].mask, scene.partition);
  s.ms = s.runs[0].wall_ms;
  return s;
}

// Static two-frame sequence: the first frame's exact mask propagated to the second.
inline SceneResult vseg_static(const SolverConfig& cfg) {
  const auto scene = synthetic::two_color_scene();
  SceneResult s{"vseg-static", "iou", 0.0, 0.0, {}};
  s.runs.push_back(run_vseg(scene.image, scene.image, scene.partition, cfg));
  s.value = synthetic::iou(s.runs[0].mask, scene.partition);
  s.ms = s.runs[0].wall_ms;
  return s;
}

// True when every accepted iteration of every run kept energy_after <= energy_before.
inline bool monotone(const std::vector<TaskResult>& runs, std::size_t* checked = nullptr) {
  std::size_t n = 0;
  bool ok = true;
  for (const auto& r : runs)
    for (const auto& l : r.levels)
      for (const auto& it : l.iterations) {
        if (!it.accepted) continue;
        ++n;
        ok = ok && it.energy_after <= it.energy_before;
      }
  if (checked) *checked = n;
  return ok;
}

}  // namespace lsm::bench
