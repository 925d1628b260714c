#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lsm/basis_gen.hpp"
#include "lsm/data_terms.hpp"
#include "lsm/error.hpp"
#include "lsm/grid.hpp"
#include "lsm/pyramid.hpp"
#include "lsm/subspace.hpp"

namespace lsm {

enum class TaskKind { iseg, vseg, stereo, flow };

inline const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::iseg: return "iseg";
    case TaskKind::vseg: return "vseg";
    case TaskKind::stereo: return "stereo";
    case TaskKind::flow: return "flow";
  }
  return "?";
}

enum class BasisSource { analytic, generated };

struct SolverConfig {
  std::vector<std::size_t> k_schedule{2, 4, 8, 16};
  std::size_t iterations_per_level = 3;
  // Relative Levenberg damping: lambda = damping * trace(A) / dim(A).
  double damping = 1e-6;
  BasisSource basis_source = BasisSource::analytic;
  AnalyticKind analytic_kind = AnalyticKind::constant_dct;
  std::shared_ptr<const GeneratorWeights> weights;
  PyramidConfig pyramid;
  double convergence_tol = 1e-4;
  std::size_t max_halvings = 4;

  // Label probability estimation.
  double probability_sigma = 0.5;
  std::size_t probability_top_k = 5;
  std::size_t temporal_window = 9;
  // Leading feature channels used for label probabilities (intensity and colour
  // in the handcrafted bank); 0 means all channels.
  std::size_t probability_channels = 4;

  void validate() const {
    pyramid.validate();
    if (k_schedule.size() != pyramid.levels()) {
      throw InvalidArgument("k_schedule has " + std::to_string(k_schedule.size()) + " entries for " +
                            std::to_string(pyramid.levels()) + " pyramid levels");
    }
    if (iterations_per_level == 0) throw InvalidArgument("iterations_per_level must be >= 1");
    if (damping < 0.0) throw InvalidArgument("damping must be non-negative");
    if (basis_source == BasisSource::generated) {
      if (!weights) throw InvalidArgument("generated basis requested without weights");
      if (weights->levels.size() != pyramid.levels()) {
        throw InvalidWeights("weights describe " + std::to_string(weights->levels.size()) + " levels, pyramid has " +
                             std::to_string(pyramid.levels()));
      }
      for (std::size_t i = 0; i < pyramid.levels(); ++i) {
        const auto& lw = weights->levels[i];
        if (lw.c != pyramid.channels_per_level[i] || lw.k != k_schedule[i]) {
          throw InvalidWeights("weights level " + std::to_string(i) + " is c=" + std::to_string(lw.c) + ", K=" +
                               std::to_string(lw.k) + "; solver expects c=" +
                               std::to_string(pyramid.channels_per_level[i]) + ", K=" + std::to_string(k_schedule[i]));
        }
        if (lw.c % lw.m != 0) throw InvalidWeights("weights level m does not divide c");
      }
    }
  }
};

struct IterationRecord {
  double energy_before = 0.0;
  double energy_after = 0.0;
  double step_norm = 0.0;
  double damping = 0.0;
  double step_scale = 1.0;
  bool accepted = true;
  SolveReport report;
};

struct LevelRecord {
  std::size_t level = 0;
  std::size_t stride = 0;
  std::size_t k = 0;
  std::vector<IterationRecord> iterations;
};

struct TaskResult {
  TaskKind task = TaskKind::stereo;
  GridD solution;       // finest pyramid level
  GridD solution_full;  // input resolution (displacements in input pixels)
  GridD mask;           // labeling tasks: {0,1} at input resolution
  std::vector<LevelRecord> levels;
  double wall_ms = 0.0;
};

namespace detail {

inline double weighted_trace(const SubspaceBasis& basis, std::span<const double> h) {
  double t = 0.0;
  for (std::size_t j = 0; j < basis.k(); ++j) {
    const auto col = basis.column(j);
    for (std::size_t i = 0; i < basis.n(); ++i) t += h[i] * col[i] * col[i];
  }
  return t;
}

inline double field_norm(const GridD& g) { return norm2(g.data()); }

inline std::size_t group_count(const SolverConfig& cfg, std::size_t level, std::size_t channels) {
  if (cfg.basis_source == BasisSource::generated) return cfg.weights->levels[level].m;
  const std::size_t m = std::max<std::size_t>(1, channels / 8);
  return channels % m == 0 ? m : 1;
}

inline GridD leading_channels(const GridD& g, std::size_t count) {
  if (count == 0 || count >= g.channels()) return g;
  GridD out(g.width(), g.height(), count);
  for (std::size_t p = 0; p < g.pixels(); ++p)
    for (std::size_t c = 0; c < count; ++c) out.at_pixel(p, c) = g.at_pixel(p, c);
  return out;
}

// Shared coarse-to-fine loop. `Hooks` supplies the task-specific pieces.
struct LevelHooks {
  // Energy of a candidate solution at the current level.
  std::function<double(const GridD&)> energy;
  // One solve at x: returns the step and its report.
  std::function<SolveResult(const GridD& x, std::size_t iteration)> solve;
};

inline void iterate_level(const SolverConfig& cfg, LevelRecord& record, GridD& x, const LevelHooks& hooks) {
  for (std::size_t it = 0; it < cfg.iterations_per_level; ++it) {
    IterationRecord rec;
    rec.energy_before = hooks.energy(x);
    SolveResult step = hooks.solve(x, it);
    rec.report = step.report;
    rec.damping = step.report.damping_used;

    double scale = 1.0;
    GridD trial = x;
    bool accepted = false;
    for (std::size_t attempt = 0; attempt <= cfg.max_halvings; ++attempt) {
      for (std::size_t i = 0; i < x.size(); ++i) trial.storage()[i] = x.storage()[i] + scale * step.delta.storage()[i];
      const double e = hooks.energy(trial);
      if (e <= rec.energy_before) {
        accepted = true;
        rec.energy_after = e;
        break;
      }
      scale *= 0.5;
    }
    rec.accepted = accepted;
    if (!accepted) {
      rec.energy_after = rec.energy_before;
      rec.step_scale = 0.0;
      rec.step_norm = 0.0;
      record.iterations.push_back(rec);
      break;
    }
    rec.step_scale = scale;
    rec.step_norm = scale * field_norm(step.delta);
    x = std::move(trial);
    record.iterations.push_back(rec);
    const double xn = field_norm(x);
    if (rec.step_norm <= cfg.convergence_tol * xn || rec.step_norm == 0.0) break;
  }
}

inline SolveResult scalar_solve(const SolverConfig& cfg, const QuadraticModel& q, const SubspaceBasis& basis,
                                const GridD& x) {
  const double lambda = cfg.damping * weighted_trace(basis, q.h.data()) / static_cast<double>(basis.k());
  return solve_projected(q, basis, x, lambda);
}

inline SolveResult flow_solve(const SolverConfig& cfg, const QuadraticModel& q, const FlowBasisPair& pair,
                              const GridD& x) {
  const std::size_t n = pair.u.n();
  std::vector<double> hxx(n), hyy(n);
  for (std::size_t p = 0; p < n; ++p) {
    hxx[p] = q.h.at_pixel(p, 0);
    hyy[p] = q.h.at_pixel(p, 2);
  }
  const double tr = weighted_trace(pair.u, hxx) + weighted_trace(pair.v, hyy);
  const double lambda = cfg.damping * tr / static_cast<double>(pair.u.k() + pair.v.k());
  return solve_flow_subspace(q, pair, x, lambda);
}

inline void finish(TaskResult& res, const FeaturePyramid& pyr, FieldKind kind,
                   std::chrono::steady_clock::time_point start) {
  const double ratio = static_cast<double>(pyr.strides.back());
  res.solution_full = upsample_solution(res.solution, pyr.input_width, pyr.input_height, ratio, kind);
  if (kind == FieldKind::labeling) {
    res.mask = GridD(pyr.input_width, pyr.input_height, 1);
    for (std::size_t p = 0; p < res.mask.pixels(); ++p) res.mask.at_pixel(p) = res.solution_full.at_pixel(p) > 0.0 ? 1.0 : 0.0;
  }
  res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

template <typename Fn>
auto with_context(std::size_t level, std::size_t iteration, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const IndefiniteSystem& e) {
    throw IndefiniteSystem(std::string(e.what()) + " [level " + std::to_string(level) + ", iteration " +
                           std::to_string(iteration) + "]");
  } catch (const RankDeficientBasis& e) {
    throw RankDeficientBasis(std::string(e.what()) + " [level " + std::to_string(level) + ", iteration " +
                             std::to_string(iteration) + "]");
  }
}

}  // namespace detail

// Dense correspondence on one image pair. `target` defines the pixel grid p;
// the solution x warps p to p + x_p in `source`. A 1-channel solution is a
// horizontal disparity (stereo), 2 channels are (u, v) flow.
inline TaskResult run_correspondence(TaskKind task, const GridD& target, const GridD& source, const SolverConfig& cfg) {
  if (task != TaskKind::stereo && task != TaskKind::flow) throw InvalidArgument("not a correspondence task");
  if (target.width() != source.width() || target.height() != source.height()) {
    throw InvalidArgument("stereo/flow images must have the same size");
  }
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const bool is_flow = task == TaskKind::flow;
  const std::size_t comps = is_flow ? 2 : 1;
  const FeaturePyramid tp = build_pyramid(target, cfg.pyramid);
  PyramidConfig src_cfg = cfg.pyramid;
  const FeaturePyramid sp = build_pyramid(source, src_cfg);

  TaskResult res;
  res.task = task;
  GridD x;
  for (std::size_t l = 0; l < tp.size(); ++l) {
    const GridD& tf = tp.level(l);
    const GridD& sf = sp.level(l);
    if (l == 0) {
      x = GridD(tf.width(), tf.height(), comps, 0.0);
    } else {
      const double ratio = static_cast<double>(tp.strides[l - 1]) / static_cast<double>(tp.strides[l]);
      x = upsample_solution(x, tf.width(), tf.height(), ratio, FieldKind::displacement);
    }
    const std::size_t k = cfg.k_schedule[l];
    const std::size_t groups = detail::group_count(cfg, l, tf.channels());
    std::optional<SubspaceBasis> analytic;
    if (cfg.basis_source == BasisSource::analytic) {
      analytic = analytic_basis(tf.width(), tf.height(), k, cfg.analytic_kind);
    }

    LevelRecord record{l, tp.strides[l], k, {}};
    detail::LevelHooks hooks;
    hooks.energy = [&](const GridD& cand) { return correspondence_energy(sf, tf, cand); };
    hooks.solve = [&](const GridD& cur, std::size_t it) {
      return detail::with_context(l, it, [&]() -> SolveResult {
        if (!is_flow) {
          const auto cm = stereo_quadratic(sf, tf, cur, groups);
          if (analytic) return detail::scalar_solve(cfg, cm.model, *analytic, cur);
          const auto ctx = build_min_context(cm.grouped, cur);
          const auto basis = generate_basis(tf, ctx, cfg.weights->levels[l], k);
          return detail::scalar_solve(cfg, cm.model, basis, cur);
        }
        const auto cm = flow_quadratic(sf, tf, cur, groups);
        if (analytic) return detail::flow_solve(cfg, cm.model, FlowBasisPair(*analytic, *analytic), cur);
        const auto cramer = build_cramer_context(cm.grouped);
        const auto& lw = cfg.weights->levels[l];
        FlowBasisPair pair(generate_basis(tf, flow_component_context(cramer, cur, 0), lw, k),
                           generate_basis(tf, flow_component_context(cramer, cur, 1), lw, k));
        return detail::flow_solve(cfg, cm.model, pair, cur);
      });
    };
    detail::iterate_level(cfg, record, x, hooks);
    res.levels.push_back(std::move(record));
  }
  res.solution = x;
  detail::finish(res, tp, FieldKind::displacement, start);
  return res;
}

inline TaskResult run_stereo(const GridD& target, const GridD& source, const SolverConfig& cfg) {
  return run_correspondence(TaskKind::stereo, target, source, cfg);
}

inline TaskResult run_flow(const GridD& target, const GridD& source, const SolverConfig& cfg) {
  return run_correspondence(TaskKind::flow, target, source, cfg);
}

// Runs stereo with `left` as the reference grid, then with `right`.
inline std::pair<TaskResult, TaskResult> run_stereo_bidirectional(const GridD& left, const GridD& right,
                                                                  const SolverConfig& cfg) {
  return {run_stereo(left, right, cfg), run_stereo(right, left, cfg)};
}

namespace detail {

inline Scribbles scribbles_to_level(const Scribbles& s, std::size_t stride, std::size_t lw, std::size_t lh) {
  auto map = [&](const std::vector<PixelCoord>& pts) {
    std::set<PixelCoord> seen;
    for (const auto& p : pts) {
      const double fx = std::round(input_to_level(static_cast<double>(p.x), stride));
      const double fy = std::round(input_to_level(static_cast<double>(p.y), stride));
      const auto cx = static_cast<std::size_t>(std::clamp(fx, 0.0, static_cast<double>(lw - 1)));
      const auto cy = static_cast<std::size_t>(std::clamp(fy, 0.0, static_cast<double>(lh - 1)));
      seen.insert({cx, cy});
    }
    return std::vector<PixelCoord>(seen.begin(), seen.end());
  };
  return {map(s.foreground), map(s.background)};
}

// Shared labeling loop; `probabilities(level)` yields alpha/beta at that level.
inline TaskResult run_labeling(TaskKind task, const FeaturePyramid& pyr, const SolverConfig& cfg,
                               const std::function<LabelProbabilities(std::size_t)>& probabilities,
                               const GridD* warm_start, std::chrono::steady_clock::time_point start) {
  TaskResult res;
  res.task = task;
  GridD x;
  for (std::size_t l = 0; l < pyr.size(); ++l) {
    const GridD& f = pyr.level(l);
    if (l == 0) {
      x = warm_start ? sample_to_level(*warm_start, pyr.strides[0]) : GridD(f.width(), f.height(), 1, 0.0);
    } else {
      const double ratio = static_cast<double>(pyr.strides[l - 1]) / static_cast<double>(pyr.strides[l]);
      x = upsample_solution(x, f.width(), f.height(), ratio, FieldKind::labeling);
    }
    const std::size_t k = cfg.k_schedule[l];
    const LabelProbabilities probs = probabilities(l);
    const std::size_t groups = group_count(cfg, l, f.channels());
    std::optional<SubspaceBasis> analytic;
    if (cfg.basis_source == BasisSource::analytic) analytic = analytic_basis(f.width(), f.height(), k, cfg.analytic_kind);

    LevelRecord record{l, pyr.strides[l], k, {}};
    LevelHooks hooks;
    hooks.energy = [&](const GridD& cand) { return labeling_energy(cand, probs); };
    hooks.solve = [&](const GridD& cur, std::size_t it) {
      return with_context(l, it, [&]() -> SolveResult {
        const auto q = labeling_quadratic(cur, probs);
        if (analytic) return scalar_solve(cfg, q, *analytic, cur);
        const auto ctx = build_min_context(labeling_grouped(q, groups), cur);
        return scalar_solve(cfg, q, generate_basis(f, ctx, cfg.weights->levels[l], k), cur);
      });
    };
    iterate_level(cfg, record, x, hooks);
    res.levels.push_back(std::move(record));
  }
  res.solution = x;
  finish(res, pyr, FieldKind::labeling, start);
  return res;
}

}  // namespace detail

// Interactive segmentation: scribbles are in input-image pixel coordinates.
// `warm_start`, when given, is an input-resolution labeling field used instead
// of the zero initialization.
inline TaskResult run_iseg(const GridD& image, const Scribbles& scribbles, const SolverConfig& cfg,
                           const GridD* warm_start = nullptr) {
  cfg.validate();
  if (scribbles.foreground.empty() || scribbles.background.empty()) {
    throw InvalidArgument("iseg needs at least one foreground and one background scribble");
  }
  for (const auto* set : {&scribbles.foreground, &scribbles.background}) {
    for (const auto& p : *set) {
      if (p.x >= image.width() || p.y >= image.height()) throw InvalidArgument("scribble point outside the image");
    }
  }
  if (warm_start && (warm_start->width() != image.width() || warm_start->height() != image.height())) {
    throw InvalidArgument("warm start field does not match the image size");
  }
  const auto start = std::chrono::steady_clock::now();
  const FeaturePyramid pyr = build_pyramid(image, cfg.pyramid);
  return detail::run_labeling(
      TaskKind::iseg, pyr, cfg,
      [&](std::size_t l) {
        const GridD& f = pyr.level(l);
        const auto s = detail::scribbles_to_level(scribbles, pyr.strides[l], f.width(), f.height());
        return scribble_probabilities(detail::leading_channels(f, cfg.probability_channels), s, cfg.probability_sigma,
                                      cfg.probability_top_k);
      },
      warm_start, start);
}

// Same as run_iseg but reuses an already built pyramid of the image.
inline TaskResult run_iseg_with_pyramid(const FeaturePyramid& pyr, const Scribbles& scribbles, const SolverConfig& cfg,
                                        const GridD* warm_start = nullptr) {
  cfg.validate();
  if (scribbles.foreground.empty() || scribbles.background.empty()) {
    throw InvalidArgument("iseg needs at least one foreground and one background scribble");
  }
  const auto start = std::chrono::steady_clock::now();
  return detail::run_labeling(
      TaskKind::iseg, pyr, cfg,
      [&](std::size_t l) {
        const GridD& f = pyr.level(l);
        const auto s = detail::scribbles_to_level(scribbles, pyr.strides[l], f.width(), f.height());
        return scribble_probabilities(detail::leading_channels(f, cfg.probability_channels), s, cfg.probability_sigma,
                                      cfg.probability_top_k);
      },
      warm_start, start);
}

// Video segmentation: propagate `prev_mask` (input resolution, {0,1}) from
// `prev_frame` to `cur_frame`.
inline TaskResult run_vseg(const GridD& prev_frame, const GridD& cur_frame, const GridD& prev_mask,
                           const SolverConfig& cfg) {
  cfg.validate();
  if (prev_frame.width() != cur_frame.width() || prev_frame.height() != cur_frame.height() ||
      prev_mask.width() != cur_frame.width() || prev_mask.height() != cur_frame.height() || prev_mask.channels() != 1) {
    throw InvalidArgument("vseg frames and previous mask must share one size");
  }
  const auto start = std::chrono::steady_clock::now();
  const FeaturePyramid cur = build_pyramid(cur_frame, cfg.pyramid);
  const FeaturePyramid prev = build_pyramid(prev_frame, cfg.pyramid);
  return detail::run_labeling(
      TaskKind::vseg, cur, cfg,
      [&](std::size_t l) {
        const GridD mask = downsample_mask(prev_mask, cur.strides[l]);
        return temporal_probabilities(detail::leading_channels(cur.level(l), cfg.probability_channels),
                                      detail::leading_channels(prev.level(l), cfg.probability_channels), mask,
                                      cfg.temporal_window, cfg.probability_sigma);
      },
      nullptr, start);
}

// Task-agnostic entry point.
//   iseg:   image = first, scribbles
//   vseg:   first = previous frame, second = current frame, prev_mask
//   stereo/flow: first = target (reference grid), second = source
struct TaskInputs {
  GridD first;
  GridD second;
  Scribbles scribbles;
  GridD prev_mask;
};

inline TaskResult run_task(TaskKind task, const TaskInputs& in, const SolverConfig& cfg) {
  switch (task) {
    case TaskKind::iseg:
      if (in.first.empty()) throw InvalidArgument("iseg requires an image");
      return run_iseg(in.first, in.scribbles, cfg);
    case TaskKind::vseg:
      if (in.first.empty() || in.second.empty() || in.prev_mask.empty()) {
        throw InvalidArgument("vseg requires two frames and a previous mask");
      }
      return run_vseg(in.first, in.second, in.prev_mask, cfg);
    case TaskKind::stereo:
    case TaskKind::flow:
      if (in.first.empty() || in.second.empty()) throw InvalidArgument("stereo/flow require two images");
      return run_correspondence(task, in.first, in.second, cfg);
  }
  throw InvalidArgument("unknown task");
}

}  // namespace lsm
