#include "rangemap/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rangemap/report.hpp"
#include "rangemap/rng.hpp"

namespace rangemap::pipeline {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// Posterior over map_a's semi-static instances after folding in the season-b
/// survey: matched -> positive evidence, unmatched but covered -> negative,
/// outside coverage -> decay only.
io::BeliefArtifact track_beliefs(const io::PipelineConfig& cfg, const seasonmap::SeasonMap& map_a,
                                 const seasonmap::SeasonMap& map_b,
                                 const std::vector<assoc::CrossSeasonMatch>& matches) {
  std::set<std::uint32_t> matched;
  for (const auto& m : matches) matched.insert(m.instance_a_id);

  const std::set<perception::ClassLabel> classes(cfg.matching.classes.begin(),
                                                 cfg.matching.classes.end());
  io::BeliefArtifact out;
  out.session_a = map_a.session_id;
  out.session_b = map_b.session_id;
  const double t_a = static_cast<double>(map_a.season_index);
  const double t_b = static_cast<double>(map_b.season_index);

  for (const auto& inst : map_a.instances) {
    if (!classes.count(inst.class_label)) continue;
    auto belief = assoc::PersistenceBelief::fresh(
        map_a.session_id + "/" + std::to_string(inst.instance_id), t_a);
    std::optional<bool> outcome;
    if (matched.count(inst.instance_id)) {
      outcome = true;
    } else {
      const Eigen::Vector2d p(inst.mean_position.east, inst.mean_position.north);
      for (const auto& sample : map_b.trajectory) {
        const Eigen::Vector2d q(sample.position.east, sample.position.north);
        if ((p - q).norm() <= cfg.persistence.coverage_radius) {
          outcome = false;  // surveyed but not seen
          break;
        }
      }
    }
    out.beliefs.push_back(assoc::persistence_update(belief, t_b, outcome, cfg.persistence.detector,
                                                    cfg.persistence.prior));
  }
  return out;
}

std::string match_table(const io::MatchArtifact& matches, const io::BeliefArtifact& beliefs) {
  std::map<std::string, double> posterior;
  for (const auto& b : beliefs.beliefs) posterior[b.landmark_id] = b.survival_posterior;
  std::ostringstream out;
  out << "# instance_a\tinstance_b\tmahalanobis\tdescriptor\tmethod\tposterior\n";
  for (const auto& m : matches.matches) {
    const std::string key = matches.session_a + "/" + std::to_string(m.instance_a_id);
    const auto it = posterior.find(key);
    out << m.instance_a_id << "\t" << m.instance_b_id << "\t" << fmt(m.mahalanobis_distance) << "\t"
        << fmt(m.descriptor_distance) << "\t" << assoc::to_string(m.method) << "\t"
        << (it != posterior.end() ? fmt(it->second) : "n/a") << "\n";
  }
  return out.str();
}

/// Instances outside the configured match classes are not candidates.
seasonmap::SeasonMap filtered_for_matching(const seasonmap::SeasonMap& map,
                                           const io::MatchingConfig& matching) {
  const std::set<perception::ClassLabel> classes(matching.classes.begin(), matching.classes.end());
  seasonmap::SeasonMap out = map;
  out.instances.clear();
  for (const auto& inst : map.instances) {
    if (classes.count(inst.class_label)) out.instances.push_back(inst);
  }
  return out;
}

}  // namespace

io::PipelineConfig normalized(io::PipelineConfig cfg) {
  cfg.world.rng_seed = cfg.rng_seed;
  cfg.map_build.cluster.rng_seed = cfg.rng_seed;
  return cfg;
}

GenerateResult run_generate(const io::PipelineConfig& raw_cfg, const fs::path& out_dir) {
  const io::PipelineConfig cfg = normalized(raw_cfg);
  cfg.validate();
  sim::GroundTruth world = sim::generate_world(cfg.world);
  GenerateResult result;
  for (int season = 0; season < cfg.world.season_count; ++season) {
    const session::Session s = sim::simulate_deployment(world, season, cfg.noise, cfg.trajectory);
    const fs::path dir = out_dir / "sessions" / s.season_tag;
    io::save_session(s, dir);
    result.session_dirs.push_back(dir);
  }
  result.truth_file = out_dir / "truth.json";
  io::save_truth(world, result.truth_file);
  return result;
}

MapResult run_map(const io::PipelineConfig& raw_cfg, const fs::path& session_dir,
                  const fs::path& out_dir) {
  const io::PipelineConfig cfg = normalized(raw_cfg);
  cfg.validate();
  const session::Session s = io::load_session(session_dir);
  const perception::HeuristicClassifier classifier;
  std::optional<octree::OccupancyOctree> tree;
  const seasonmap::SeasonMap map = seasonmap::build_season_map(s, cfg.map_build, classifier, &tree);

  MapResult result;
  result.map_file = out_dir / ("map_" + map.season_tag + ".json");
  io::save_season_map(map, result.map_file);
  if (tree.has_value()) {
    result.octree_file = out_dir / ("octree_" + map.season_tag + ".bin");
    std::ostringstream dump(std::ios::binary);
    tree->save(dump);
    io::atomic_write(*result.octree_file, dump.str());
  }
  return result;
}

AssociateResult run_associate(const io::PipelineConfig& raw_cfg, const fs::path& map_a_file,
                              const fs::path& map_b_file, assoc::MatchMethod method,
                              const fs::path& out_dir) {
  const io::PipelineConfig cfg = normalized(raw_cfg);
  cfg.validate();
  const seasonmap::SeasonMap map_a = io::load_season_map(map_a_file);
  const seasonmap::SeasonMap map_b = io::load_season_map(map_b_file);
  if (map_b.season_index < map_a.season_index) {
    throw assoc::AssociationError("associate: map_b season " + std::to_string(map_b.season_index) +
                                  " precedes map_a season " + std::to_string(map_a.season_index));
  }
  const double dt = static_cast<double>(map_b.season_index - map_a.season_index);
  const seasonmap::SeasonMap a = filtered_for_matching(map_a, cfg.matching);
  const seasonmap::SeasonMap b = filtered_for_matching(map_b, cfg.matching);

  AssociateResult result;
  result.matches.session_a = map_a.session_id;
  result.matches.session_b = map_b.session_id;
  result.matches.method = method;
  result.matches.matches = assoc::match_cross_season(a, b, cfg.match_params(method, dt));
  result.beliefs = track_beliefs(cfg, a, map_b, result.matches.matches);

  result.matches_file = out_dir / "matches.json";
  result.beliefs_file = out_dir / "beliefs.json";
  result.table_file = out_dir / "matches.txt";
  io::save_matches(result.matches, result.matches_file);
  io::save_beliefs(result.beliefs, result.beliefs_file);
  io::atomic_write(result.table_file, match_table(result.matches, result.beliefs));
  return result;
}

fs::path run_evaluate(const io::PipelineConfig& raw_cfg, const fs::path& truth_file,
                      const fs::path& matches_file, const fs::path& map_a_file,
                      const fs::path& map_b_file, const fs::path& out_dir) {
  const io::PipelineConfig cfg = normalized(raw_cfg);
  cfg.validate();
  const sim::GroundTruth truth = io::load_truth(truth_file);
  const io::MatchArtifact matches = io::load_matches(matches_file);
  const seasonmap::SeasonMap map_a = io::load_season_map(map_a_file);
  const seasonmap::SeasonMap map_b = io::load_season_map(map_b_file);
  if (matches.session_a != map_a.session_id || matches.session_b != map_b.session_id) {
    throw sim::UnknownInstance("evaluate: session ids disagree: matches reference (" +
                               matches.session_a + ", " + matches.session_b + ") but maps are (" +
                               map_a.session_id + ", " + map_b.session_id + ")");
  }
  io::MetricsArtifact metrics;
  metrics.session_a = map_a.session_id;
  metrics.session_b = map_b.session_id;
  metrics.method = assoc::to_string(matches.method);
  metrics.result = sim::evaluate_association(matches.matches, truth, map_a, map_b);
  const fs::path file = out_dir / "metrics.json";
  io::save_metrics(metrics, file);
  return file;
}

ReportResult run_report(const io::PipelineConfig& raw_cfg, const fs::path& out_dir) {
  const io::PipelineConfig base = normalized(raw_cfg);
  base.validate();

  report::SweepData data;
  const bool have_anchors = base.world.plots_conmod > 0;
  const perception::HeuristicClassifier classifier;

  for (std::size_t si = 0; si < base.report.noise_sweep.size(); ++si) {
    const double sigma = base.report.noise_sweep[si];
    for (int seed = 0; seed < base.report.seeds; ++seed) {
      io::PipelineConfig cfg = base;
      cfg.rng_seed = Rng(base.rng_seed).substream("report", si * 10000 + seed).next_u64();
      cfg.world.season_count = std::min(cfg.world.season_count, 2);
      cfg.noise.rtk_mode = false;
      cfg.noise.pose_noise_sigma = sigma;
      cfg.noise.pose_noise_max = std::max(cfg.noise.pose_noise_max, 2.2 * sigma);
      cfg = normalized(cfg);

      sim::GroundTruth world = sim::generate_world(cfg.world);
      const session::Session s0 = sim::simulate_deployment(world, 0, cfg.noise, cfg.trajectory);
      const session::Session s1 = sim::simulate_deployment(world, 1, cfg.noise, cfg.trajectory);
      const seasonmap::SeasonMap m0 = seasonmap::build_season_map(s0, cfg.map_build, classifier);
      const seasonmap::SeasonMap m1 = seasonmap::build_season_map(s1, cfg.map_build, classifier);
      const seasonmap::SeasonMap f0 = filtered_for_matching(m0, cfg.matching);
      const seasonmap::SeasonMap f1 = filtered_for_matching(m1, cfg.matching);

      for (const auto method :
           {assoc::MatchMethod::kLocationOnly, assoc::MatchMethod::kAnchorRelative}) {
        if (method == assoc::MatchMethod::kAnchorRelative && !have_anchors) continue;
        const auto matches = assoc::match_cross_season(f0, f1, cfg.match_params(method, 1.0));
        const sim::EvalResult eval = sim::evaluate_association(matches, world, m0, m1);
        report::SweepRow row;
        row.sigma = sigma;
        row.seed = seed;
        row.method = assoc::to_string(method);
        row.result = eval;
        data.rows.push_back(row);
        if (si + 1 == base.report.noise_sweep.size()) {
          for (const auto& m : matches) {
            data.final_sigma_distances[row.method].push_back(m.mahalanobis_distance);
          }
        }
      }
    }
  }

  ReportResult result;
  result.csv_file = out_dir / "report.csv";
  result.summary_csv_file = out_dir / "f1_vs_noise.csv";
  result.f1_svg_file = out_dir / "f1_vs_noise.svg";
  result.histogram_svg_file = out_dir / "match_distances.svg";
  io::atomic_write(result.csv_file, report::sweep_csv(data));
  io::atomic_write(result.summary_csv_file, report::summary_csv(data));
  io::atomic_write(result.f1_svg_file, report::f1_svg(data));
  io::atomic_write(result.histogram_svg_file, report::histogram_svg(data));
  return result;
}

std::string error_code_for(const std::exception& e) {
  if (dynamic_cast<const io::SchemaError*>(&e)) return "schema";
  if (dynamic_cast<const io::IoError*>(&e)) return "io";
  if (dynamic_cast<const sim::InvalidConfig*>(&e)) return "config";
  if (dynamic_cast<const sim::UnknownInstance*>(&e)) return "evaluate";
  if (dynamic_cast<const sim::SimulatorError*>(&e)) return "simulator";
  if (dynamic_cast<const assoc::AssociationError*>(&e)) return "association";
  if (dynamic_cast<const seasonmap::SeasonMapError*>(&e)) return "mapping";
  if (dynamic_cast<const perception::PerceptionError*>(&e)) return "perception";
  if (dynamic_cast<const geo::GeoError*>(&e)) return "geo";
  return "internal";
}

}  // namespace rangemap::pipeline
