#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rangemap/pipeline.hpp"

namespace {

using rangemap::assoc::MatchMethod;
namespace fs = std::filesystem;

rangemap::io::PipelineConfig load_or_default(const std::string& config_path, std::uint64_t seed,
                                             bool seed_set) {
  rangemap::io::PipelineConfig cfg;
  if (!config_path.empty()) {
    cfg = rangemap::io::load_config(config_path);
  }
  if (seed_set) {
    cfg.rng_seed = seed;
  }
  return rangemap::pipeline::normalized(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seasonal field plot mapping and cross-season plant association"};
  app.require_subcommand(1);
  app.fallthrough();  // --config/--seed may follow the subcommand name

  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "Pipeline config JSON (defaults used when omitted)");
  app.add_option_function<std::uint64_t>(
         "--seed", [&](const std::uint64_t v) { seed = v; seed_set = true; },
         "Override the config RNG seed");

  std::string out_dir = "out";
  std::string session_dir, map_a, map_b, truth_file, matches_file;
  std::string mode = "location-only";
  std::vector<double> noise_sweep;

  auto* generate = app.add_subcommand("generate", "Simulate a world and its seasonal sessions");
  generate->add_option("--out", out_dir, "Output directory");

  auto* map_cmd = app.add_subcommand("map", "Build a season map from one session");
  map_cmd->add_option("--session", session_dir, "Session directory (session.json inside)")
      ->required();
  map_cmd->add_option("--out", out_dir, "Output directory");

  auto* associate = app.add_subcommand("associate", "Match two season maps across seasons");
  associate->add_option("--map-a", map_a, "Earlier season map JSON")->required();
  associate->add_option("--map-b", map_b, "Later season map JSON")->required();
  associate->add_option("--mode", mode, "location-only|anchor-relative")
      ->check(CLI::IsMember({"location-only", "anchor-relative"}));
  associate->add_option("--out", out_dir, "Output directory");

  auto* evaluate = app.add_subcommand("evaluate", "Score matches against simulator ground truth");
  evaluate->add_option("--truth", truth_file, "Ground truth sidecar JSON")->required();
  evaluate->add_option("--matches", matches_file, "Match artifact JSON")->required();
  evaluate->add_option("--map-a", map_a, "Earlier season map JSON")->required();
  evaluate->add_option("--map-b", map_b, "Later season map JSON")->required();
  evaluate->add_option("--out", out_dir, "Output directory");

  auto* report = app.add_subcommand("report", "Noise sweep with CSV tables and SVG plots");
  report->add_option("--noise-sweep", noise_sweep, "Pose noise sigmas to sweep (meters)");
  report->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = load_or_default(config_path, seed, seed_set);
    if (generate->parsed()) {
      const auto result = rangemap::pipeline::run_generate(cfg, out_dir);
      std::cout << "truth: " << result.truth_file.string() << "\n";
      for (const auto& dir : result.session_dirs) {
        std::cout << "session: " << dir.string() << "\n";
      }
    } else if (map_cmd->parsed()) {
      const auto result = rangemap::pipeline::run_map(cfg, session_dir, out_dir);
      std::cout << "map: " << result.map_file.string() << "\n";
      if (result.octree_file) {
        std::cout << "octree: " << result.octree_file->string() << "\n";
      }
    } else if (associate->parsed()) {
      const auto method = rangemap::assoc::match_method_from_string(mode);
      const auto result = rangemap::pipeline::run_associate(cfg, map_a, map_b, *method, out_dir);
      std::cout << "matches: " << result.matches_file.string() << " ("
                << result.matches.matches.size() << " pairs)\n";
      std::cout << "beliefs: " << result.beliefs_file.string() << "\n";
      std::cout << "table: " << result.table_file.string() << "\n";
    } else if (evaluate->parsed()) {
      const auto metrics_file =
          rangemap::pipeline::run_evaluate(cfg, truth_file, matches_file, map_a, map_b, out_dir);
      std::cout << "metrics: " << metrics_file.string() << "\n";
    } else if (report->parsed()) {
      if (!noise_sweep.empty()) {
        cfg.report.noise_sweep = noise_sweep;
      }
      const auto result = rangemap::pipeline::run_report(cfg, out_dir);
      std::cout << "report: " << result.csv_file.string() << "\n";
      std::cout << "summary: " << result.summary_csv_file.string() << "\n";
      std::cout << "plots: " << result.f1_svg_file.string() << ", "
                << result.histogram_svg_file.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << rangemap::io::error_record(rangemap::pipeline::error_code_for(e), e.what())
              << std::endl;
    return 1;
  }
  return 0;
}
