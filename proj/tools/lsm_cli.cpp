// Command-line front end: dense correspondence, segmentation, verification
// suites and synthetic benchmarks.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsm/basis_gen.hpp"
#include "lsm/bench.hpp"
#include "lsm/driver.hpp"
#include "lsm/error.hpp"
#include "lsm/io.hpp"
#include "lsm/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::size_t levels = 0;  // 0: default schedule
  std::vector<std::size_t> k_schedule;
  std::size_t iters = 0;
  double damping = -1.0;
  std::string basis = "analytic";
  std::string out;
  std::string json_report;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_out) {
  cmd->add_option("--levels", o.levels, "Number of pyramid levels (finest strides of 32,16,8,4)")
      ->check(CLI::Range(2, 4));
  cmd->add_option("--k-schedule", o.k_schedule, "Basis dimension per level, coarse to fine")->delimiter(',');
  cmd->add_option("--iters", o.iters, "Iterations per level")->check(CLI::PositiveNumber);
  cmd->add_option("--damping", o.damping, "Relative damping")->check(CLI::NonNegativeNumber);
  cmd->add_option("--basis", o.basis, "analytic | analytic:patches | generated:<weights.lsmw>");
  auto* out = cmd->add_option("--out", o.out, "Result file");
  if (needs_out) out->required();
  cmd->add_option("--json-report", o.json_report, "Write a JSON report to this path");
}

template <typename T>
std::vector<T> tail(const std::vector<T>& v, std::size_t n) {
  return std::vector<T>(v.end() - static_cast<std::ptrdiff_t>(n), v.end());
}

lsm::SolverConfig make_config(const CommonOptions& o) {
  lsm::SolverConfig cfg;
  if (o.levels) {
    cfg.pyramid.strides = tail(cfg.pyramid.strides, o.levels);
    cfg.pyramid.channels_per_level = tail(cfg.pyramid.channels_per_level, o.levels);
    cfg.k_schedule = tail(cfg.k_schedule, o.levels);
  }
  if (!o.k_schedule.empty()) {
    if (o.k_schedule.size() != cfg.pyramid.levels()) {
      throw UsageError("--k-schedule needs " + std::to_string(cfg.pyramid.levels()) + " entries");
    }
    cfg.k_schedule = o.k_schedule;
  }
  if (o.iters) cfg.iterations_per_level = o.iters;
  if (o.damping >= 0.0) cfg.damping = o.damping;
  if (o.basis == "analytic" || o.basis == "analytic:dct") {
    cfg.basis_source = lsm::BasisSource::analytic;
  } else if (o.basis == "analytic:patches") {
    cfg.basis_source = lsm::BasisSource::analytic;
    cfg.analytic_kind = lsm::AnalyticKind::bilinear_patches;
  } else if (o.basis.rfind("generated:", 0) == 0) {
    const std::string path = o.basis.substr(10);
    if (path.empty()) throw UsageError("--basis generated: needs a weights path");
    cfg.basis_source = lsm::BasisSource::generated;
    cfg.weights = std::make_shared<const lsm::GeneratorWeights>(lsm::read_weights(path));
  } else {
    throw UsageError("unknown --basis value '" + o.basis + "'");
  }
  cfg.validate();
  return cfg;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  const std::string text = j.dump(2) + "\n";
  lsm::binary::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void maybe_report(const CommonOptions& o, const lsm::TaskResult& r) {
  if (!o.json_report.empty()) write_json(o.json_report, lsm::io::report_json(r));
}

void print_summary(const lsm::TaskResult& r) {
  std::size_t its = 0;
  for (const auto& l : r.levels) its += l.iterations.size();
  double final_energy = 0.0;
  if (!r.levels.empty() && !r.levels.back().iterations.empty()) final_energy = r.levels.back().iterations.back().energy_after;
  std::cout << lsm::task_name(r.task) << ": " << r.levels.size() << " levels, " << its << " iterations, final energy "
            << final_energy << ", " << r.wall_ms << " ms\n";
}

lsm::GridF to_float(const lsm::GridD& g) { return g.cast<float>(); }

// Input files that cannot be opened are usage errors; damaged contents are not.
lsm::GridD load_image(const std::string& path) {
  try {
    return lsm::io::read_png(path);
  } catch (const lsm::IoError& e) {
    throw UsageError(e.what());
  }
}

int run_verify(const std::string& json_path) {
  bool ok = true;
  nlohmann::json suites = nlohmann::json::array();
  for (const auto& s : lsm::verify::run_all()) {
    ok = ok && s.passed;
    std::cout << (s.passed ? "PASS " : "FAIL ") << s.name << "  trials=" << s.trials << "  worst=" << s.worst
              << "  tol=" << s.tolerance << "  " << s.ms << " ms";
    if (!s.note.empty()) std::cout << "  (" << s.note << ")";
    std::cout << "\n";
    suites.push_back({{"name", s.name},
                      {"passed", s.passed},
                      {"worst", s.worst},
                      {"tolerance", s.tolerance},
                      {"trials", s.trials},
                      {"ms", s.ms}});
  }
  std::cout << (ok ? "all suites passed\n" : "some suites FAILED\n");
  if (!json_path.empty()) write_json(json_path, {{"suites", suites}, {"passed", ok}});
  return ok ? kExitOk : kExitFailure;
}

int run_bench(const lsm::SolverConfig& cfg, const std::string& json_path) {
  std::vector<lsm::bench::SceneResult> scenes;
  scenes.push_back(lsm::bench::stereo_shift(cfg));
  scenes.push_back(lsm::bench::stereo_bidirectional(cfg));
  scenes.push_back(lsm::bench::flow_translation(cfg));
  scenes.push_back(lsm::bench::flow_zero_motion(cfg));
  scenes.push_back(lsm::bench::iseg_two_color(cfg));
  scenes.push_back(lsm::bench::vseg_static(cfg));
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : scenes) {
    std::cout << s.name << "  " << s.metric << "=" << s.value << "  " << s.ms << " ms\n";
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& r : s.runs) reports.push_back(lsm::io::report_json(r));
    out.push_back({{"scene", s.name}, {"metric", s.metric}, {"value", s.value}, {"ms", s.ms}, {"reports", reports}});
  }
  if (!json_path.empty()) write_json(json_path, {{"scenes", out}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned-subspace style coarse-to-fine solver for stereo, flow and segmentation"};
  app.require_subcommand(1);

  CommonOptions opt;
  std::string first, second, scribbles, prev_mask;

  auto* stereo = app.add_subcommand("stereo", "Horizontal displacement x with right(p + x) = left(p); writes PFM");
  stereo->add_option("left", first, "Reference image (PNG)")->required();
  stereo->add_option("right", second, "Second image (PNG)")->required();
  add_common(stereo, opt, true);

  auto* flow = app.add_subcommand("flow", "Optical flow (u, v) with second(p + x) = first(p); writes .flo");
  flow->add_option("first", first, "Reference frame (PNG)")->required();
  flow->add_option("second", second, "Next frame (PNG)")->required();
  add_common(flow, opt, true);

  auto* iseg = app.add_subcommand("iseg", "Interactive segmentation from scribble polylines; writes a PNG mask");
  iseg->add_option("image", first, "Image (PNG)")->required();
  iseg->add_option("--scribbles", scribbles, "JSON {foreground:[[[x,y],...]], background:[...]}")->required();
  add_common(iseg, opt, true);

  auto* vseg = app.add_subcommand("vseg", "Propagate a mask from the previous frame; writes a PNG mask");
  vseg->add_option("previous", first, "Previous frame (PNG)")->required();
  vseg->add_option("current", second, "Current frame (PNG)")->required();
  vseg->add_option("--prev-mask", prev_mask, "Mask of the previous frame (PNG)")->required();
  add_common(vseg, opt, true);

  auto* verify = app.add_subcommand("verify", "Run the solver oracle and equivalence suites");
  verify->add_option("--json-report", opt.json_report, "Write suite results as JSON");

  auto* bench = app.add_subcommand("bench", "Synthetic-scene accuracy and timing report");
  add_common(bench, opt, false);

  std::string init = "random";
  std::uint64_t seed = 1;
  auto* weights = app.add_subcommand("weights", "Write an identity or seeded-random LSMW weight file");
  weights->add_option("--init", init, "identity | random")->check(CLI::IsMember({"identity", "random"}));
  weights->add_option("--seed", seed, "Seed for random weights");
  weights->add_option("--levels", opt.levels, "Number of pyramid levels")->check(CLI::Range(2, 4));
  weights->add_option("--k-schedule", opt.k_schedule, "Basis dimension per level")->delimiter(',');
  weights->add_option("--out", opt.out, "Output .lsmw path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*verify) return run_verify(opt.json_report);
    if (*weights) {
      CommonOptions wo = opt;
      wo.basis = "analytic";
      const auto cfg = make_config(wo);
      lsm::GeneratorWeights gw;
      for (std::size_t l = 0; l < cfg.pyramid.levels(); ++l) {
        const std::size_t c = cfg.pyramid.channels_per_level[l];
        gw.levels.push_back(lsm::make_level_weights(c, std::max<std::size_t>(1, c / 8), cfg.k_schedule[l],
                                                    init == "identity" ? lsm::WeightInit::identity
                                                                       : lsm::WeightInit::random,
                                                    seed + l));
      }
      lsm::write_weights(opt.out, gw);
      std::cout << "wrote " << gw.levels.size() << " levels to " << opt.out << "\n";
      return kExitOk;
    }

    const auto cfg = make_config(opt);
    if (*bench) return run_bench(cfg, opt.json_report);

    if (*stereo || *flow) {
      const auto a = load_image(first);
      const auto b = load_image(second);
      const auto r = *stereo ? lsm::run_stereo(a, b, cfg) : lsm::run_flow(a, b, cfg);
      if (*stereo) lsm::io::write_pfm(opt.out, to_float(r.solution_full));
      else lsm::io::write_flo(opt.out, to_float(r.solution_full));
      maybe_report(opt, r);
      print_summary(r);
      return kExitOk;
    }
    if (*iseg) {
      const auto img = load_image(first);
      lsm::Scribbles s;
      try {
        s = lsm::io::read_scribbles(scribbles, img.width(), img.height());
      } catch (const lsm::IoError& e) {
        throw UsageError(e.what());
      }
      const auto r = lsm::run_iseg(img, s, cfg);
      lsm::io::write_png_mask(opt.out, r.mask);
      maybe_report(opt, r);
      print_summary(r);
      return kExitOk;
    }
    if (*vseg) {
      const auto prev = load_image(first);
      const auto cur = load_image(second);
      lsm::GridD mask;
      try {
        mask = lsm::io::read_png_mask(prev_mask);
      } catch (const lsm::IoError& e) {
        throw UsageError(e.what());
      }
      const auto r = lsm::run_vseg(prev, cur, mask, cfg);
      lsm::io::write_png_mask(opt.out, r.mask);
      maybe_report(opt, r);
      print_summary(r);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const lsm::InvalidWeights& e) {
    std::cerr << "invalid weights: " << e.what() << "\n";
    return kExitFailure;
  } catch (const lsm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
