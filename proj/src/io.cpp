#include "rangemap/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace rangemap::io {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

void require(bool cond, const std::string& message) {
  if (!cond) throw SchemaError(message);
}

const json& expect_object(const json& j, const std::string& where) {
  require(j.is_object(), where + ": expected an object");
  return j;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  expect_object(j, where);
  for (const auto& [key, value] : j.items()) {
    require(allowed.count(key) > 0, where + ": unknown key '" + key + "'");
  }
}

void check_envelope(const json& j, const std::string& schema) {
  expect_object(j, schema);
  require(j.contains("schema") && j.at("schema") == schema,
          "expected schema '" + schema + "'");
  require(j.contains("version") && j.at("version").is_number_integer() &&
              j.at("version").get<int>() == kSchemaVersion,
          schema + ": unsupported version (this build reads version " +
              std::to_string(kSchemaVersion) + ")");
}

json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
json point_json(const geo::LocalPoint& p) { return json::array({p.east, p.north, p.up}); }

Eigen::Vector3d vec3_from(const json& j, const std::string& where) {
  require(j.is_array() && j.size() == 3, where + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

geo::LocalPoint point_from(const json& j, const std::string& where) {
  const Eigen::Vector3d v = vec3_from(j, where);
  return {v.x(), v.y(), v.z()};
}

json quat_json(const Eigen::Quaterniond& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

Eigen::Quaterniond quat_from(const json& j, const std::string& where) {
  require(j.is_array() && j.size() == 4, where + ": expected [w, x, y, z]");
  return Eigen::Quaterniond(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                            j[3].get<double>());
}

json mat_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

Eigen::Matrix3d mat3_from(const json& j, const std::string& where) {
  require(j.is_array() && j.size() == 9, where + ": expected 9 numbers row-major");
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = j[i].get<double>();
  return m;
}

json vecx_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vecx_from(const json& j, const std::string& where) {
  require(j.is_array(), where + ": expected an array of numbers");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

json geo_json(const geo::GeoCoordinate& g) {
  return json{{"latitude", g.latitude}, {"longitude", g.longitude}, {"height", g.height}};
}

geo::GeoCoordinate geo_from(const json& j, const std::string& where) {
  check_keys(j, {"latitude", "longitude", "height"}, where);
  geo::GeoCoordinate g{j.at("latitude").get<double>(), j.at("longitude").get<double>(),
                       j.at("height").get<double>()};
  g.validate();
  return g;
}

perception::ClassLabel label_from(const json& j, const std::string& where) {
  const auto l = perception::class_label_from_string(j.get<std::string>());
  require(l.has_value(), where + ": unknown class label '" + j.get<std::string>() + "'");
  return *l;
}

/// Row-major whole-image RLE as [value, length] pairs; canonical form merges
/// adjacent segments and alternates values starting with the first nonempty
/// segment.
json rle_encode(const perception::SegmentMask& m) {
  std::vector<perception::PixelRun> runs = m.runs;
  std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
    return std::tuple(a.row, a.col) < std::tuple(b.row, b.col);
  });
  json pairs = json::array();
  std::int64_t pos = 0;
  const std::int64_t total = static_cast<std::int64_t>(m.width) * m.height;
  for (const auto& r : runs) {
    const std::int64_t start = static_cast<std::int64_t>(r.row) * m.width + r.col;
    require(start >= pos, "mask rle: overlapping runs");
    if (start > pos) {
      pairs.push_back(json::array({0, start - pos}));
      pos = start;
    }
    if (!pairs.empty() && pairs.back()[0] == 1 && start == pos) {
      pairs.back()[1] = pairs.back()[1].get<std::int64_t>() + r.length;
    } else {
      pairs.push_back(json::array({1, r.length}));
    }
    pos += r.length;
  }
  if (pos < total) pairs.push_back(json::array({0, total - pos}));
  return pairs;
}

std::vector<perception::PixelRun> rle_decode(const json& pairs, int width, int height,
                                             const std::string& where) {
  require(pairs.is_array(), where + ": rle must be an array of [value, length] pairs");
  std::vector<perception::PixelRun> runs;
  std::int64_t pos = 0;
  const std::int64_t total = static_cast<std::int64_t>(width) * height;
  for (const auto& p : pairs) {
    require(p.is_array() && p.size() == 2, where + ": rle entries are [value, length]");
    const int value = p[0].get<int>();
    const std::int64_t length = p[1].get<std::int64_t>();
    require((value == 0 || value == 1) && length > 0, where + ": rle entry out of range");
    if (value == 1) {
      std::int64_t start = pos;
      std::int64_t remaining = length;
      while (remaining > 0) {
        const int row = static_cast<int>(start / width);
        const int col = static_cast<int>(start % width);
        const std::int64_t in_row = std::min<std::int64_t>(remaining, width - col);
        require(row < height, where + ": rle exceeds the image");
        runs.push_back({row, col, static_cast<int>(in_row)});
        start += in_row;
        remaining -= in_row;
      }
    }
    pos += length;
  }
  require(pos == total, where + ": rle length sum must equal width*height");
  return runs;
}

}  // namespace

void PipelineConfig::validate() const {
  world.validate();
  noise.validate();
  require(trajectory.camera_height > 0.0 && trajectory.row_spacing > 0.0 &&
              trajectory.frame_step > 0.0 && trajectory.speed > 0.0,
          "config: trajectory values must be > 0");
  require(map_build.octree_resolution > 0.0, "config: octree resolution must be > 0");
  require(map_build.cluster.merge_radius >= 0.0 && map_build.cluster.descriptor_gate >= 0.0,
          "config: clustering gates must be >= 0");
  require(!map_build.cluster.k.has_value() || *map_build.cluster.k >= 1,
          "config: clustering k must be >= 1 when set");
  require(gate.chi2_threshold > 0.0, "config: chi2 threshold must be > 0");
  require(gate.location_sigma > 0.0 && gate.anchor_sigma > 0.0, "config: gate sigmas must be > 0");
  require(persistence.detector.p_detect >= 0.0 && persistence.detector.p_detect <= 1.0 &&
              persistence.detector.p_false >= 0.0 && persistence.detector.p_false <= 1.0,
          "config: detector rates must lie in [0, 1]");
  require(persistence.prior.hazard_rate >= 0.0, "config: hazard rate must be >= 0");
  require(matching.drift.size() == perception::kDescriptorSize &&
              matching.drift_variance.size() == perception::kDescriptorSize,
          "config: feature transition vectors must have 10 components");
  require((matching.drift_variance.array() >= 0.0).all(),
          "config: drift variance must be >= 0 componentwise");
  require(report.seeds >= 1, "config: report seeds must be >= 1");
}

assoc::GateParams PipelineConfig::gate_params(assoc::MatchMethod method) const {
  assoc::GateParams g;
  const double sigma =
      method == assoc::MatchMethod::kLocationOnly ? gate.location_sigma : gate.anchor_sigma;
  g.localization_covariance = sigma * sigma * Eigen::Matrix2d::Identity();
  g.chi2_threshold = gate.chi2_threshold;
  return g;
}

assoc::MatchParams PipelineConfig::match_params(assoc::MatchMethod method, double dt_seasons) const {
  assoc::MatchParams p;
  p.gate = gate_params(method);
  p.method = method;
  p.dt_seasons = dt_seasons;
  p.anchor_match_radius = matching.anchor_match_radius;
  p.min_common_anchors = matching.min_common_anchors;
  if (matching.descriptor_gate_enabled) {
    assoc::DescriptorGate dg;
    dg.threshold = matching.descriptor_gate_threshold;
    dg.base_variance = assoc::DescriptorGate::default_base_variance();
    if (matching.transition_enabled) {
      dg.transition = assoc::FeatureTransition{matching.drift, matching.drift_variance};
    }
    p.descriptor_gate = dg;
  }
  return p;
}

namespace {

double num_or(const json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}
int int_or(const json& j, const char* key, int fallback) {
  return j.contains(key) ? j.at(key).get<int>() : fallback;
}
bool bool_or(const json& j, const char* key, bool fallback) {
  return j.contains(key) ? j.at(key).get<bool>() : fallback;
}

}  // namespace

PipelineConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j,
             {"schema", "version", "rng_seed", "world", "noise", "trajectory", "clustering",
              "octree", "projection", "mapping", "gate", "matching", "persistence", "report"},
             "config");
  check_envelope(j, "rangemap/config");

  PipelineConfig cfg;
  if (j.contains("rng_seed")) cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();

  if (j.contains("world")) {
    const json& w = j.at("world");
    check_keys(w,
               {"plots_drill", "plots_conmod", "plots_control", "plot_size", "plot_gap",
                "conmod_diameter", "conmod_spacing", "microsite_radius_min", "microsite_radius_max",
                "microsites_per_plot", "plant_density", "plant_spacing_min", "shrub_density",
                "hazard_rate", "recruitment_rate", "growth_min", "growth_max", "season_count",
                "origin"},
               "config.world");
    auto& wc = cfg.world;
    wc.plots_drill = int_or(w, "plots_drill", wc.plots_drill);
    wc.plots_conmod = int_or(w, "plots_conmod", wc.plots_conmod);
    wc.plots_control = int_or(w, "plots_control", wc.plots_control);
    wc.plot_size = num_or(w, "plot_size", wc.plot_size);
    wc.plot_gap = num_or(w, "plot_gap", wc.plot_gap);
    wc.conmod_diameter = num_or(w, "conmod_diameter", wc.conmod_diameter);
    wc.conmod_spacing = num_or(w, "conmod_spacing", wc.conmod_spacing);
    wc.microsite_radius_min = num_or(w, "microsite_radius_min", wc.microsite_radius_min);
    wc.microsite_radius_max = num_or(w, "microsite_radius_max", wc.microsite_radius_max);
    wc.microsites_per_plot = int_or(w, "microsites_per_plot", wc.microsites_per_plot);
    wc.plant_density = num_or(w, "plant_density", wc.plant_density);
    wc.plant_spacing_min = num_or(w, "plant_spacing_min", wc.plant_spacing_min);
    wc.shrub_density = num_or(w, "shrub_density", wc.shrub_density);
    wc.hazard_rate = num_or(w, "hazard_rate", wc.hazard_rate);
    wc.recruitment_rate = num_or(w, "recruitment_rate", wc.recruitment_rate);
    wc.growth.multiplier_min = num_or(w, "growth_min", wc.growth.multiplier_min);
    wc.growth.multiplier_max = num_or(w, "growth_max", wc.growth.multiplier_max);
    wc.season_count = int_or(w, "season_count", wc.season_count);
    if (w.contains("origin")) wc.origin = geo_from(w.at("origin"), "config.world.origin");
  }

  if (j.contains("noise")) {
    const json& n = j.at("noise");
    check_keys(n,
               {"pose_noise_sigma", "pose_noise_max", "row_walk_step_sigma", "jitter_sigma",
                "rtk_mode", "detection_miss_rate", "false_positive_rate", "descriptor_noise_sigma"},
               "config.noise");
    auto& nm = cfg.noise;
    nm.pose_noise_sigma = num_or(n, "pose_noise_sigma", nm.pose_noise_sigma);
    nm.pose_noise_max = num_or(n, "pose_noise_max", nm.pose_noise_max);
    nm.row_walk_step_sigma = num_or(n, "row_walk_step_sigma", nm.row_walk_step_sigma);
    nm.jitter_sigma = num_or(n, "jitter_sigma", nm.jitter_sigma);
    nm.rtk_mode = bool_or(n, "rtk_mode", nm.rtk_mode);
    nm.detection_miss_rate = num_or(n, "detection_miss_rate", nm.detection_miss_rate);
    nm.false_positive_rate = num_or(n, "false_positive_rate", nm.false_positive_rate);
    nm.descriptor_noise_sigma = num_or(n, "descriptor_noise_sigma", nm.descriptor_noise_sigma);
  }

  if (j.contains("trajectory")) {
    const json& t = j.at("trajectory");
    check_keys(t, {"camera_height", "row_spacing", "frame_step", "speed"}, "config.trajectory");
    cfg.trajectory.camera_height = num_or(t, "camera_height", cfg.trajectory.camera_height);
    cfg.trajectory.row_spacing = num_or(t, "row_spacing", cfg.trajectory.row_spacing);
    cfg.trajectory.frame_step = num_or(t, "frame_step", cfg.trajectory.frame_step);
    cfg.trajectory.speed = num_or(t, "speed", cfg.trajectory.speed);
  }

  if (j.contains("clustering")) {
    const json& c = j.at("clustering");
    check_keys(c, {"k", "merge_radius", "descriptor_gate", "max_iterations", "max_silhouette_k"},
               "config.clustering");
    auto& cl = cfg.map_build.cluster;
    if (c.contains("k") && !c.at("k").is_null()) cl.k = c.at("k").get<int>();
    cl.merge_radius = num_or(c, "merge_radius", cl.merge_radius);
    cl.descriptor_gate = num_or(c, "descriptor_gate", cl.descriptor_gate);
    cl.max_iterations = int_or(c, "max_iterations", cl.max_iterations);
    cl.max_silhouette_k = int_or(c, "max_silhouette_k", cl.max_silhouette_k);
  }
  cfg.map_build.cluster.rng_seed = cfg.rng_seed;

  if (j.contains("octree")) {
    const json& o = j.at("octree");
    check_keys(o,
               {"resolution", "log_odds_hit", "log_odds_miss", "clamp_min", "clamp_max",
                "max_depth", "carve_free_space"},
               "config.octree");
    cfg.map_build.octree_resolution = num_or(o, "resolution", cfg.map_build.octree_resolution);
    auto& op = cfg.map_build.octree;
    op.log_odds_hit = num_or(o, "log_odds_hit", op.log_odds_hit);
    op.log_odds_miss = num_or(o, "log_odds_miss", op.log_odds_miss);
    op.clamp_min = num_or(o, "clamp_min", op.clamp_min);
    op.clamp_max = num_or(o, "clamp_max", op.clamp_max);
    op.max_depth = int_or(o, "max_depth", op.max_depth);
    op.carve_free_space = bool_or(o, "carve_free_space", op.carve_free_space);
  }

  if (j.contains("projection")) {
    const json& p = j.at("projection");
    check_keys(p, {"ground_relief_sigma", "front_max_range"}, "config.projection");
    cfg.map_build.projection.ground_relief_sigma =
        num_or(p, "ground_relief_sigma", cfg.map_build.projection.ground_relief_sigma);
    cfg.map_build.projection.front_max_range =
        num_or(p, "front_max_range", cfg.map_build.projection.front_max_range);
  }

  if (j.contains("mapping")) {
    const json& m = j.at("mapping");
    check_keys(m, {"trust_input_labels", "conmod_spread_limit", "n_anchors", "octree_margin"},
               "config.mapping");
    cfg.map_build.trust_input_labels =
        bool_or(m, "trust_input_labels", cfg.map_build.trust_input_labels);
    cfg.map_build.conmod_spread_limit =
        num_or(m, "conmod_spread_limit", cfg.map_build.conmod_spread_limit);
    cfg.map_build.n_anchors = int_or(m, "n_anchors", cfg.map_build.n_anchors);
    cfg.map_build.octree_margin = num_or(m, "octree_margin", cfg.map_build.octree_margin);
  }

  if (j.contains("gate")) {
    const json& g = j.at("gate");
    check_keys(g, {"chi2_threshold", "location_sigma", "anchor_sigma"}, "config.gate");
    cfg.gate.chi2_threshold = num_or(g, "chi2_threshold", cfg.gate.chi2_threshold);
    cfg.gate.location_sigma = num_or(g, "location_sigma", cfg.gate.location_sigma);
    cfg.gate.anchor_sigma = num_or(g, "anchor_sigma", cfg.gate.anchor_sigma);
  }

  if (j.contains("matching")) {
    const json& m = j.at("matching");
    check_keys(m,
               {"classes", "descriptor_gate_enabled", "descriptor_gate_threshold",
                "transition_enabled", "drift", "drift_variance", "anchor_match_radius",
                "min_common_anchors"},
               "config.matching");
    if (m.contains("classes")) {
      cfg.matching.classes.clear();
      for (const auto& c : m.at("classes")) {
        cfg.matching.classes.push_back(label_from(c, "config.matching.classes"));
      }
    }
    cfg.matching.descriptor_gate_enabled =
        bool_or(m, "descriptor_gate_enabled", cfg.matching.descriptor_gate_enabled);
    cfg.matching.descriptor_gate_threshold =
        num_or(m, "descriptor_gate_threshold", cfg.matching.descriptor_gate_threshold);
    cfg.matching.transition_enabled = bool_or(m, "transition_enabled", cfg.matching.transition_enabled);
    if (m.contains("drift")) cfg.matching.drift = vecx_from(m.at("drift"), "config.matching.drift");
    if (m.contains("drift_variance")) {
      cfg.matching.drift_variance = vecx_from(m.at("drift_variance"), "config.matching.drift_variance");
    }
    cfg.matching.anchor_match_radius =
        num_or(m, "anchor_match_radius", cfg.matching.anchor_match_radius);
    cfg.matching.min_common_anchors = int_or(m, "min_common_anchors", cfg.matching.min_common_anchors);
  }

  if (j.contains("persistence")) {
    const json& p = j.at("persistence");
    check_keys(p, {"hazard_rate", "p_detect", "p_false", "coverage_radius"}, "config.persistence");
    cfg.persistence.prior.hazard_rate = num_or(p, "hazard_rate", cfg.persistence.prior.hazard_rate);
    cfg.persistence.detector.p_detect = num_or(p, "p_detect", cfg.persistence.detector.p_detect);
    cfg.persistence.detector.p_false = num_or(p, "p_false", cfg.persistence.detector.p_false);
    cfg.persistence.coverage_radius = num_or(p, "coverage_radius", cfg.persistence.coverage_radius);
  }

  if (j.contains("report")) {
    const json& r = j.at("report");
    check_keys(r, {"seeds", "noise_sweep"}, "config.report");
    cfg.report.seeds = int_or(r, "seeds", cfg.report.seeds);
    if (r.contains("noise_sweep")) {
      cfg.report.noise_sweep.clear();
      for (const auto& s : r.at("noise_sweep")) cfg.report.noise_sweep.push_back(s.get<double>());
    }
  }

  cfg.world.rng_seed = cfg.rng_seed;
  cfg.validate();
  return cfg;
}

std::string config_to_json_text(const PipelineConfig& cfg) {
  json j;
  j["schema"] = "rangemap/config";
  j["version"] = kSchemaVersion;
  j["rng_seed"] = cfg.rng_seed;
  j["world"] = {{"plots_drill", cfg.world.plots_drill},
                {"plots_conmod", cfg.world.plots_conmod},
                {"plots_control", cfg.world.plots_control},
                {"plot_size", cfg.world.plot_size},
                {"plot_gap", cfg.world.plot_gap},
                {"conmod_diameter", cfg.world.conmod_diameter},
                {"conmod_spacing", cfg.world.conmod_spacing},
                {"microsite_radius_min", cfg.world.microsite_radius_min},
                {"microsite_radius_max", cfg.world.microsite_radius_max},
                {"microsites_per_plot", cfg.world.microsites_per_plot},
                {"plant_density", cfg.world.plant_density},
                {"plant_spacing_min", cfg.world.plant_spacing_min},
                {"shrub_density", cfg.world.shrub_density},
                {"hazard_rate", cfg.world.hazard_rate},
                {"recruitment_rate", cfg.world.recruitment_rate},
                {"growth_min", cfg.world.growth.multiplier_min},
                {"growth_max", cfg.world.growth.multiplier_max},
                {"season_count", cfg.world.season_count},
                {"origin", geo_json(cfg.world.origin)}};
  j["noise"] = {{"pose_noise_sigma", cfg.noise.pose_noise_sigma},
                {"pose_noise_max", cfg.noise.pose_noise_max},
                {"row_walk_step_sigma", cfg.noise.row_walk_step_sigma},
                {"jitter_sigma", cfg.noise.jitter_sigma},
                {"rtk_mode", cfg.noise.rtk_mode},
                {"detection_miss_rate", cfg.noise.detection_miss_rate},
                {"false_positive_rate", cfg.noise.false_positive_rate},
                {"descriptor_noise_sigma", cfg.noise.descriptor_noise_sigma}};
  j["trajectory"] = {{"camera_height", cfg.trajectory.camera_height},
                     {"row_spacing", cfg.trajectory.row_spacing},
                     {"frame_step", cfg.trajectory.frame_step},
                     {"speed", cfg.trajectory.speed}};
  j["clustering"] = {{"k", cfg.map_build.cluster.k.has_value() ? json(*cfg.map_build.cluster.k)
                                                               : json(nullptr)},
                     {"merge_radius", cfg.map_build.cluster.merge_radius},
                     {"descriptor_gate", cfg.map_build.cluster.descriptor_gate},
                     {"max_iterations", cfg.map_build.cluster.max_iterations},
                     {"max_silhouette_k", cfg.map_build.cluster.max_silhouette_k}};
  j["octree"] = {{"resolution", cfg.map_build.octree_resolution},
                 {"log_odds_hit", cfg.map_build.octree.log_odds_hit},
                 {"log_odds_miss", cfg.map_build.octree.log_odds_miss},
                 {"clamp_min", cfg.map_build.octree.clamp_min},
                 {"clamp_max", cfg.map_build.octree.clamp_max},
                 {"max_depth", cfg.map_build.octree.max_depth},
                 {"carve_free_space", cfg.map_build.octree.carve_free_space}};
  j["projection"] = {{"ground_relief_sigma", cfg.map_build.projection.ground_relief_sigma},
                     {"front_max_range", cfg.map_build.projection.front_max_range}};
  j["mapping"] = {{"trust_input_labels", cfg.map_build.trust_input_labels},
                  {"conmod_spread_limit", cfg.map_build.conmod_spread_limit},
                  {"n_anchors", cfg.map_build.n_anchors},
                  {"octree_margin", cfg.map_build.octree_margin}};
  j["gate"] = {{"chi2_threshold", cfg.gate.chi2_threshold},
               {"location_sigma", cfg.gate.location_sigma},
               {"anchor_sigma", cfg.gate.anchor_sigma}};
  json classes = json::array();
  for (const auto c : cfg.matching.classes) classes.push_back(perception::to_string(c));
  j["matching"] = {{"classes", classes},
                   {"descriptor_gate_enabled", cfg.matching.descriptor_gate_enabled},
                   {"descriptor_gate_threshold", cfg.matching.descriptor_gate_threshold},
                   {"transition_enabled", cfg.matching.transition_enabled},
                   {"drift", vecx_json(cfg.matching.drift)},
                   {"drift_variance", vecx_json(cfg.matching.drift_variance)},
                   {"anchor_match_radius", cfg.matching.anchor_match_radius},
                   {"min_common_anchors", cfg.matching.min_common_anchors}};
  j["persistence"] = {{"hazard_rate", cfg.persistence.prior.hazard_rate},
                      {"p_detect", cfg.persistence.detector.p_detect},
                      {"p_false", cfg.persistence.detector.p_false},
                      {"coverage_radius", cfg.persistence.coverage_radius}};
  j["report"] = {{"seeds", cfg.report.seeds}, {"noise_sweep", cfg.report.noise_sweep}};
  return j.dump(2) + "\n";
}

PipelineConfig load_config(const fs::path& path) {
  return config_from_json_text(read_file(path));
}

void save_session(const session::Session& s, const fs::path& dir) {
  fs::create_directories(dir);

  json manifest;
  manifest["schema"] = "rangemap/session";
  manifest["version"] = kSchemaVersion;
  manifest["session_id"] = s.session_id;
  manifest["season_tag"] = s.season_tag;
  manifest["season_index"] = s.season_index;
  manifest["origin"] = geo_json(s.origin);
  manifest["ground_height"] = s.ground_height;
  json cameras = json::array();
  for (const auto& c : s.cameras) {
    cameras.push_back({{"camera_id", c.camera_id},
                       {"kind", c.kind == perception::CameraKind::kDown ? "down" : "front"},
                       {"intrinsics",
                        {{"fx", c.intrinsics.fx},
                         {"fy", c.intrinsics.fy},
                         {"cx", c.intrinsics.cx},
                         {"cy", c.intrinsics.cy},
                         {"width", c.intrinsics.width},
                         {"height", c.intrinsics.height}}},
                       {"mount_offset", vec3_json(c.mount_offset)},
                       {"mount_rotation", quat_json(c.mount_rotation)}});
  }
  manifest["cameras"] = cameras;
  json frames = json::array();
  for (const auto& f : s.frames) {
    frames.push_back({{"frame_id", f.frame_id},
                      {"timestamp", f.timestamp},
                      {"camera_id", f.camera_id},
                      {"position", point_json(f.position)},
                      {"orientation", quat_json(f.orientation)},
                      {"position_cov", mat_json(f.position_cov)}});
  }
  manifest["frames"] = frames;
  json files;
  files["masks"] = "masks.json";
  if (!s.scans.empty()) files["points"] = "points.json";
  manifest["files"] = files;
  atomic_write(dir / "session.json", manifest.dump(2) + "\n");

  json masks;
  masks["schema"] = "rangemap/masks";
  masks["version"] = kSchemaVersion;
  json arr = json::array();
  for (const auto& m : s.masks) {
    arr.push_back({{"mask_id", m.mask_id},
                   {"frame_id", m.frame_id},
                   {"width", m.width},
                   {"height", m.height},
                   {"rle", rle_encode(m)},
                   {"label", perception::to_string(m.class_label)},
                   {"confidence", m.confidence},
                   {"color_mean", vec3_json(m.stats.color_mean)},
                   {"color_var", vec3_json(m.stats.color_var)}});
  }
  masks["masks"] = arr;
  atomic_write(dir / "masks.json", masks.dump() + "\n");

  if (!s.scans.empty()) {
    json points;
    points["schema"] = "rangemap/points";
    points["version"] = kSchemaVersion;
    json scans = json::array();
    for (const auto& scan : s.scans) {
      json pts = json::array();
      for (const auto& p : scan.points) pts.push_back(point_json(p));
      scans.push_back({{"frame_id", scan.frame_id}, {"points", pts}});
    }
    points["scans"] = scans;
    atomic_write(dir / "points.json", points.dump() + "\n");
  }
}

session::Session load_session(const fs::path& dir) {
  const json manifest = json::parse(read_file(dir / "session.json"));
  check_keys(manifest,
             {"schema", "version", "session_id", "season_tag", "season_index", "origin",
              "ground_height", "cameras", "frames", "files"},
             "session");
  check_envelope(manifest, "rangemap/session");

  session::Session s;
  s.session_id = manifest.at("session_id").get<std::string>();
  s.season_tag = manifest.at("season_tag").get<std::string>();
  s.season_index = manifest.at("season_index").get<int>();
  s.origin = geo_from(manifest.at("origin"), "session.origin");
  s.ground_height = manifest.at("ground_height").get<double>();

  for (const auto& c : manifest.at("cameras")) {
    check_keys(c, {"camera_id", "kind", "intrinsics", "mount_offset", "mount_rotation"},
               "session.cameras");
    session::CameraConfig cam;
    cam.camera_id = c.at("camera_id").get<std::string>();
    const std::string kind = c.at("kind").get<std::string>();
    require(kind == "down" || kind == "front", "session: camera kind must be down|front");
    cam.kind = kind == "down" ? perception::CameraKind::kDown : perception::CameraKind::kFront;
    const json& k = c.at("intrinsics");
    check_keys(k, {"fx", "fy", "cx", "cy", "width", "height"}, "session.cameras.intrinsics");
    cam.intrinsics.fx = k.at("fx").get<double>();
    cam.intrinsics.fy = k.at("fy").get<double>();
    cam.intrinsics.cx = k.at("cx").get<double>();
    cam.intrinsics.cy = k.at("cy").get<double>();
    cam.intrinsics.width = k.at("width").get<int>();
    cam.intrinsics.height = k.at("height").get<int>();
    cam.intrinsics.validate();
    cam.mount_offset = vec3_from(c.at("mount_offset"), "session.cameras.mount_offset");
    cam.mount_rotation = quat_from(c.at("mount_rotation"), "session.cameras.mount_rotation");
    s.cameras.push_back(cam);
  }

  std::set<std::string> frame_ids;
  double last_t = -std::numeric_limits<double>::infinity();
  for (const auto& f : manifest.at("frames")) {
    check_keys(f, {"frame_id", "timestamp", "camera_id", "position", "orientation", "position_cov"},
               "session.frames");
    session::FrameRecord fr;
    fr.frame_id = f.at("frame_id").get<std::string>();
    fr.timestamp = f.at("timestamp").get<double>();
    fr.camera_id = f.at("camera_id").get<std::string>();
    fr.position = point_from(f.at("position"), "session.frames.position");
    fr.orientation = quat_from(f.at("orientation"), "session.frames.orientation");
    fr.position_cov = mat3_from(f.at("position_cov"), "session.frames.position_cov");
    require(frame_ids.insert(fr.frame_id).second,
            "session: duplicate frame id '" + fr.frame_id + "'");
    require(fr.timestamp >= last_t, "session: frames must be time-ordered");
    last_t = fr.timestamp;
    s.frames.push_back(fr);
  }

  const json& files = manifest.at("files");
  check_keys(files, {"masks", "points"}, "session.files");
  const fs::path mask_path = dir / files.at("masks").get<std::string>();
  require(fs::exists(mask_path), "session: referenced mask file missing: " + mask_path.string());

  const json masks = json::parse(read_file(mask_path));
  check_keys(masks, {"schema", "version", "masks"}, "masks");
  check_envelope(masks, "rangemap/masks");
  for (const auto& m : masks.at("masks")) {
    check_keys(m,
               {"mask_id", "frame_id", "width", "height", "rle", "label", "confidence",
                "color_mean", "color_var"},
               "masks.masks");
    perception::SegmentMask mask;
    mask.mask_id = m.at("mask_id").get<std::uint64_t>();
    mask.frame_id = m.at("frame_id").get<std::string>();
    mask.width = m.at("width").get<int>();
    mask.height = m.at("height").get<int>();
    mask.runs = rle_decode(m.at("rle"), mask.width, mask.height, "masks.rle");
    mask.class_label = label_from(m.at("label"), "masks.label");
    mask.confidence = m.at("confidence").get<double>();
    mask.stats.color_mean = vec3_from(m.at("color_mean"), "masks.color_mean");
    mask.stats.color_var = vec3_from(m.at("color_var"), "masks.color_var");
    mask.validate();
    s.masks.push_back(std::move(mask));
  }

  if (files.contains("points")) {
    const fs::path points_path = dir / files.at("points").get<std::string>();
    require(fs::exists(points_path),
            "session: referenced points file missing: " + points_path.string());
    const json points = json::parse(read_file(points_path));
    check_keys(points, {"schema", "version", "scans"}, "points");
    check_envelope(points, "rangemap/points");
    for (const auto& sc : points.at("scans")) {
      check_keys(sc, {"frame_id", "points"}, "points.scans");
      session::PointScan scan;
      scan.frame_id = sc.at("frame_id").get<std::string>();
      for (const auto& p : sc.at("points")) {
        scan.points.push_back(point_from(p, "points.scans.points"));
      }
      s.scans.push_back(std::move(scan));
    }
  }
  return s;
}

namespace {

json world_config_json(const sim::WorldConfig& wc) {
  return {{"plots_drill", wc.plots_drill},
          {"plots_conmod", wc.plots_conmod},
          {"plots_control", wc.plots_control},
          {"plot_size", wc.plot_size},
          {"plot_gap", wc.plot_gap},
          {"conmod_diameter", wc.conmod_diameter},
          {"conmod_spacing", wc.conmod_spacing},
          {"microsite_radius_min", wc.microsite_radius_min},
          {"microsite_radius_max", wc.microsite_radius_max},
          {"microsites_per_plot", wc.microsites_per_plot},
          {"plant_density", wc.plant_density},
          {"plant_spacing_min", wc.plant_spacing_min},
          {"shrub_density", wc.shrub_density},
          {"hazard_rate", wc.hazard_rate},
          {"recruitment_rate", wc.recruitment_rate},
          {"growth_min", wc.growth.multiplier_min},
          {"growth_max", wc.growth.multiplier_max},
          {"season_count", wc.season_count},
          {"rng_seed", wc.rng_seed},
          {"origin", geo_json(wc.origin)}};
}

sim::WorldConfig world_config_from(const json& w, const std::string& where) {
  check_keys(w,
             {"plots_drill", "plots_conmod", "plots_control", "plot_size", "plot_gap",
              "conmod_diameter", "conmod_spacing", "microsite_radius_min", "microsite_radius_max",
              "microsites_per_plot", "plant_density", "plant_spacing_min", "shrub_density",
              "hazard_rate", "recruitment_rate", "growth_min", "growth_max", "season_count",
              "rng_seed", "origin"},
             where);
  sim::WorldConfig wc;
  wc.plots_drill = w.at("plots_drill").get<int>();
  wc.plots_conmod = w.at("plots_conmod").get<int>();
  wc.plots_control = w.at("plots_control").get<int>();
  wc.plot_size = w.at("plot_size").get<double>();
  wc.plot_gap = w.at("plot_gap").get<double>();
  wc.conmod_diameter = w.at("conmod_diameter").get<double>();
  wc.conmod_spacing = w.at("conmod_spacing").get<double>();
  wc.microsite_radius_min = w.at("microsite_radius_min").get<double>();
  wc.microsite_radius_max = w.at("microsite_radius_max").get<double>();
  wc.microsites_per_plot = w.at("microsites_per_plot").get<int>();
  wc.plant_density = w.at("plant_density").get<double>();
  wc.plant_spacing_min = w.at("plant_spacing_min").get<double>();
  wc.shrub_density = w.at("shrub_density").get<double>();
  wc.hazard_rate = w.at("hazard_rate").get<double>();
  wc.recruitment_rate = w.at("recruitment_rate").get<double>();
  wc.growth.multiplier_min = w.at("growth_min").get<double>();
  wc.growth.multiplier_max = w.at("growth_max").get<double>();
  wc.season_count = w.at("season_count").get<int>();
  wc.rng_seed = w.at("rng_seed").get<std::uint64_t>();
  wc.origin = geo_from(w.at("origin"), where + ".origin");
  return wc;
}

}  // namespace

void save_truth(const sim::GroundTruth& world, const fs::path& file) {
  json j;
  j["schema"] = "rangemap/truth";
  j["version"] = kSchemaVersion;
  j["config"] = world_config_json(world.config);
  json plots = json::array();
  for (const auto& p : world.plots) {
    plots.push_back({{"index", p.index},
                     {"treatment", sim::to_string(p.treatment)},
                     {"origin", point_json(p.origin)}});
  }
  j["plots"] = plots;
  json plants = json::array();
  for (const auto& p : world.plants) {
    json colors = json::array();
    for (const auto& c : p.color_per_season) colors.push_back(vec3_json(c));
    plants.push_back({{"id", p.global_id},
                      {"plot", p.plot},
                      {"position", point_json(p.position)},
                      {"class", perception::to_string(p.class_label)},
                      {"species", p.species},
                      {"birth_season", p.birth_season},
                      {"death_season", p.death_season},
                      {"elongation", p.elongation},
                      {"orientation", p.orientation},
                      {"height", p.height},
                      {"size_per_season", p.size_per_season},
                      {"color_per_season", colors}});
  }
  j["plants"] = plants;
  json conmods = json::array();
  for (const auto& c : world.conmods) {
    conmods.push_back({{"id", c.id}, {"plot", c.plot}, {"position", point_json(c.position)}});
  }
  j["conmods"] = conmods;
  json microsites = json::array();
  for (const auto& m : world.microsites) {
    microsites.push_back({{"id", m.id},
                          {"plot", m.plot},
                          {"type", perception::to_string(m.type)},
                          {"center", point_json(m.center)},
                          {"radius", m.radius}});
  }
  j["microsites"] = microsites;
  json sources;
  for (const auto& [sid, m] : world.mask_sources) {
    json arr = json::array();
    for (const auto& [mask_id, src] : m) {
      arr.push_back(json::array({mask_id, sim::to_string(src.kind), src.id}));
    }
    sources[sid] = arr;
  }
  j["mask_sources"] = sources;
  atomic_write(file, j.dump() + "\n");
}

sim::GroundTruth load_truth(const fs::path& file) {
  const json j = json::parse(read_file(file));
  check_keys(j, {"schema", "version", "config", "plots", "plants", "conmods", "microsites",
                 "mask_sources"},
             "truth");
  check_envelope(j, "rangemap/truth");

  sim::GroundTruth world;
  world.config = world_config_from(j.at("config"), "truth.config");
  for (const auto& p : j.at("plots")) {
    check_keys(p, {"index", "treatment", "origin"}, "truth.plots");
    sim::PlotTruth plot;
    plot.index = p.at("index").get<int>();
    const std::string t = p.at("treatment").get<std::string>();
    if (t == "drill_seeded") {
      plot.treatment = sim::Treatment::kDrillSeeded;
    } else if (t == "conmod") {
      plot.treatment = sim::Treatment::kConmod;
    } else if (t == "control") {
      plot.treatment = sim::Treatment::kControl;
    } else {
      throw SchemaError("truth: unknown treatment '" + t + "'");
    }
    plot.origin = point_from(p.at("origin"), "truth.plots.origin");
    world.plots.push_back(plot);
  }
  for (const auto& p : j.at("plants")) {
    check_keys(p,
               {"id", "plot", "position", "class", "species", "birth_season", "death_season",
                "elongation", "orientation", "height", "size_per_season", "color_per_season"},
               "truth.plants");
    sim::PlantTruth plant;
    plant.global_id = p.at("id").get<std::uint64_t>();
    plant.plot = p.at("plot").get<int>();
    plant.position = point_from(p.at("position"), "truth.plants.position");
    plant.class_label = label_from(p.at("class"), "truth.plants.class");
    plant.species = p.at("species").get<std::string>();
    plant.birth_season = p.at("birth_season").get<int>();
    plant.death_season = p.at("death_season").get<int>();
    plant.elongation = p.at("elongation").get<double>();
    plant.orientation = p.at("orientation").get<double>();
    plant.height = p.at("height").get<double>();
    plant.size_per_season = p.at("size_per_season").get<std::vector<double>>();
    for (const auto& c : p.at("color_per_season")) {
      plant.color_per_season.push_back(vec3_from(c, "truth.plants.color_per_season"));
    }
    require(plant.death_season < 0 || plant.death_season >= plant.birth_season,
            "truth: death season precedes birth");
    world.plants.push_back(std::move(plant));
  }
  for (const auto& c : j.at("conmods")) {
    check_keys(c, {"id", "plot", "position"}, "truth.conmods");
    world.conmods.push_back({c.at("id").get<std::uint64_t>(), c.at("plot").get<int>(),
                             point_from(c.at("position"), "truth.conmods.position")});
  }
  for (const auto& m : j.at("microsites")) {
    check_keys(m, {"id", "plot", "type", "center", "radius"}, "truth.microsites");
    sim::MicrositeTruth ms;
    ms.id = m.at("id").get<std::uint64_t>();
    ms.plot = m.at("plot").get<int>();
    ms.type = label_from(m.at("type"), "truth.microsites.type");
    ms.center = point_from(m.at("center"), "truth.microsites.center");
    ms.radius = m.at("radius").get<double>();
    world.microsites.push_back(ms);
  }
  for (const auto& [sid, arr] : j.at("mask_sources").items()) {
    auto& dst = world.mask_sources[sid];
    for (const auto& e : arr) {
      require(e.is_array() && e.size() == 3, "truth.mask_sources: expected [mask_id, kind, id]");
      sim::MaskSource src;
      const std::string kind = e[1].get<std::string>();
      if (kind == "plant") {
        src.kind = sim::SourceKind::kPlant;
      } else if (kind == "conmod") {
        src.kind = sim::SourceKind::kConmod;
      } else if (kind == "microsite") {
        src.kind = sim::SourceKind::kMicrosite;
      } else if (kind == "false") {
        src.kind = sim::SourceKind::kFalse;
      } else {
        throw SchemaError("truth: unknown source kind '" + kind + "'");
      }
      src.id = e[2].get<std::uint64_t>();
      dst[e[0].get<std::uint64_t>()] = src;
    }
  }
  return world;
}

namespace {

json instance_json(const seasonmap::LandmarkInstance& inst) {
  json obs = json::array();
  for (const auto& o : inst.observations) {
    obs.push_back({{"mask_id", o.source_mask_id},
                   {"frame_id", o.frame_id},
                   {"timestamp", o.timestamp},
                   {"position", point_json(o.position)}});
  }
  json offsets = json::array();
  for (const auto& a : inst.anchor_offsets) {
    offsets.push_back({{"conmod_id", a.conmod_id}, {"offset", vec3_json(a.offset)}});
  }
  return {{"instance_id", inst.instance_id},
          {"class", perception::to_string(inst.class_label)},
          {"position", point_json(inst.mean_position)},
          {"geo", geo_json(inst.geo_position)},
          {"spread", mat_json(inst.position_spread)},
          {"descriptor", vecx_json(inst.descriptor_mean)},
          {"observations", obs},
          {"anchor_offsets", offsets}};
}

seasonmap::LandmarkInstance instance_from(const json& j, const std::string& where) {
  check_keys(j,
             {"instance_id", "class", "position", "geo", "spread", "descriptor", "observations",
              "anchor_offsets"},
             where);
  seasonmap::LandmarkInstance inst;
  inst.instance_id = j.at("instance_id").get<std::uint32_t>();
  inst.class_label = label_from(j.at("class"), where + ".class");
  inst.mean_position = point_from(j.at("position"), where + ".position");
  inst.geo_position = geo_from(j.at("geo"), where + ".geo");
  inst.position_spread = mat3_from(j.at("spread"), where + ".spread");
  inst.descriptor_mean = vecx_from(j.at("descriptor"), where + ".descriptor");
  for (const auto& o : j.at("observations")) {
    check_keys(o, {"mask_id", "frame_id", "timestamp", "position"}, where + ".observations");
    perception::LandmarkObservation obs;
    obs.source_mask_id = o.at("mask_id").get<std::uint64_t>();
    obs.frame_id = o.at("frame_id").get<std::string>();
    obs.timestamp = o.at("timestamp").get<double>();
    obs.position = point_from(o.at("position"), where + ".observations.position");
    obs.class_label = inst.class_label;
    obs.descriptor = inst.descriptor_mean;
    inst.observations.push_back(std::move(obs));
  }
  for (const auto& a : j.at("anchor_offsets")) {
    check_keys(a, {"conmod_id", "offset"}, where + ".anchor_offsets");
    inst.anchor_offsets.push_back({a.at("conmod_id").get<std::uint32_t>(),
                                   vec3_from(a.at("offset"), where + ".anchor_offsets.offset")});
  }
  return inst;
}

}  // namespace

void save_season_map(const seasonmap::SeasonMap& map, const fs::path& file) {
  json j;
  j["schema"] = "rangemap/season-map";
  j["version"] = kSchemaVersion;
  j["session_id"] = map.session_id;
  j["season_tag"] = map.season_tag;
  j["season_index"] = map.season_index;
  j["origin"] = geo_json(map.frame.origin);
  j["skipped_frames"] = map.skipped_frames;
  j["skipped_masks"] = map.skipped_masks;
  json instances = json::array();
  for (const auto& i : map.instances) instances.push_back(instance_json(i));
  j["instances"] = instances;
  json anchors = json::array();
  for (const auto& a : map.static_anchors) anchors.push_back(instance_json(a));
  j["static_anchors"] = anchors;
  json traj = json::array();
  for (const auto& t : map.trajectory) {
    traj.push_back({{"timestamp", t.timestamp},
                    {"position", point_json(t.position)},
                    {"orientation", quat_json(t.orientation)}});
  }
  j["trajectory"] = traj;
  atomic_write(file, j.dump() + "\n");
}

seasonmap::SeasonMap load_season_map(const fs::path& file) {
  const json j = json::parse(read_file(file));
  check_keys(j,
             {"schema", "version", "session_id", "season_tag", "season_index", "origin",
              "skipped_frames", "skipped_masks", "instances", "static_anchors", "trajectory"},
             "season-map");
  check_envelope(j, "rangemap/season-map");
  seasonmap::SeasonMap map;
  map.session_id = j.at("session_id").get<std::string>();
  map.season_tag = j.at("season_tag").get<std::string>();
  map.season_index = j.at("season_index").get<int>();
  map.frame.origin = geo_from(j.at("origin"), "season-map.origin");
  map.skipped_frames = j.at("skipped_frames").get<std::size_t>();
  map.skipped_masks = j.at("skipped_masks").get<std::size_t>();
  for (const auto& i : j.at("instances")) {
    map.instances.push_back(instance_from(i, "season-map.instances"));
  }
  for (const auto& a : j.at("static_anchors")) {
    map.static_anchors.push_back(instance_from(a, "season-map.static_anchors"));
  }
  for (const auto& t : j.at("trajectory")) {
    check_keys(t, {"timestamp", "position", "orientation"}, "season-map.trajectory");
    map.trajectory.push_back({t.at("timestamp").get<double>(),
                              point_from(t.at("position"), "season-map.trajectory.position"),
                              quat_from(t.at("orientation"), "season-map.trajectory.orientation")});
  }
  return map;
}

void save_matches(const MatchArtifact& m, const fs::path& file) {
  json j;
  j["schema"] = "rangemap/matches";
  j["version"] = kSchemaVersion;
  j["session_a"] = m.session_a;
  j["session_b"] = m.session_b;
  j["method"] = assoc::to_string(m.method);
  json pairs = json::array();
  for (const auto& match : m.matches) {
    pairs.push_back({{"a", match.instance_a_id},
                     {"b", match.instance_b_id},
                     {"mahalanobis_distance", match.mahalanobis_distance},
                     {"descriptor_distance", match.descriptor_distance}});
  }
  j["pairs"] = pairs;
  atomic_write(file, j.dump(2) + "\n");
}

MatchArtifact load_matches(const fs::path& file) {
  const json j = json::parse(read_file(file));
  check_keys(j, {"schema", "version", "session_a", "session_b", "method", "pairs"}, "matches");
  check_envelope(j, "rangemap/matches");
  MatchArtifact out;
  out.session_a = j.at("session_a").get<std::string>();
  out.session_b = j.at("session_b").get<std::string>();
  const auto method = assoc::match_method_from_string(j.at("method").get<std::string>());
  require(method.has_value(), "matches: unknown method");
  out.method = *method;
  for (const auto& p : j.at("pairs")) {
    check_keys(p, {"a", "b", "mahalanobis_distance", "descriptor_distance"}, "matches.pairs");
    out.matches.push_back({p.at("a").get<std::uint32_t>(), p.at("b").get<std::uint32_t>(),
                           p.at("mahalanobis_distance").get<double>(),
                           p.at("descriptor_distance").get<double>(), *method});
  }
  return out;
}

void save_beliefs(const BeliefArtifact& b, const fs::path& file) {
  json j;
  j["schema"] = "rangemap/beliefs";
  j["version"] = kSchemaVersion;
  j["session_a"] = b.session_a;
  j["session_b"] = b.session_b;
  json arr = json::array();
  for (const auto& belief : b.beliefs) {
    json ev = json::array();
    for (const auto& e : belief.evidence_log) {
      ev.push_back({{"t", e.time}, {"detected", e.detected}});
    }
    arr.push_back({{"landmark_id", belief.landmark_id},
                   {"survival_posterior", belief.survival_posterior},
                   {"last_update_time", belief.last_update_time},
                   {"evidence", ev}});
  }
  j["beliefs"] = arr;
  atomic_write(file, j.dump(2) + "\n");
}

BeliefArtifact load_beliefs(const fs::path& file) {
  const json j = json::parse(read_file(file));
  check_keys(j, {"schema", "version", "session_a", "session_b", "beliefs"}, "beliefs");
  check_envelope(j, "rangemap/beliefs");
  BeliefArtifact out;
  out.session_a = j.at("session_a").get<std::string>();
  out.session_b = j.at("session_b").get<std::string>();
  for (const auto& b : j.at("beliefs")) {
    check_keys(b, {"landmark_id", "survival_posterior", "last_update_time", "evidence"},
               "beliefs.beliefs");
    assoc::PersistenceBelief belief;
    belief.landmark_id = b.at("landmark_id").get<std::string>();
    belief.survival_posterior = b.at("survival_posterior").get<double>();
    belief.last_update_time = b.at("last_update_time").get<double>();
    for (const auto& e : b.at("evidence")) {
      check_keys(e, {"t", "detected"}, "beliefs.evidence");
      belief.evidence_log.push_back({e.at("t").get<double>(), e.at("detected").get<bool>()});
    }
    out.beliefs.push_back(std::move(belief));
  }
  return out;
}

void save_metrics(const MetricsArtifact& m, const fs::path& file) {
  json j;
  j["schema"] = "rangemap/metrics";
  j["version"] = kSchemaVersion;
  j["session_a"] = m.session_a;
  j["session_b"] = m.session_b;
  j["method"] = m.method;
  j["precision"] = m.result.precision;
  j["recall"] = m.result.recall;
  j["f1"] = m.result.f1;
  j["correct_matches"] = m.result.correct_matches;
  j["wrong_matches"] = m.result.wrong_matches;
  j["missed"] = m.result.missed;
  j["persisting_observed"] = m.result.persisting_observed;
  j["precision_defaulted"] = m.result.precision_defaulted;
  atomic_write(file, j.dump(2) + "\n");
}

MetricsArtifact load_metrics(const fs::path& file) {
  const json j = json::parse(read_file(file));
  check_keys(j,
             {"schema", "version", "session_a", "session_b", "method", "precision", "recall", "f1",
              "correct_matches", "wrong_matches", "missed", "persisting_observed",
              "precision_defaulted"},
             "metrics");
  check_envelope(j, "rangemap/metrics");
  MetricsArtifact out;
  out.session_a = j.at("session_a").get<std::string>();
  out.session_b = j.at("session_b").get<std::string>();
  out.method = j.at("method").get<std::string>();
  out.result.precision = j.at("precision").get<double>();
  out.result.recall = j.at("recall").get<double>();
  out.result.f1 = j.at("f1").get<double>();
  out.result.correct_matches = j.at("correct_matches").get<int>();
  out.result.wrong_matches = j.at("wrong_matches").get<int>();
  out.result.missed = j.at("missed").get<int>();
  out.result.persisting_observed = j.at("persisting_observed").get<int>();
  out.result.precision_defaulted = j.at("precision_defaulted").get<bool>();
  return out;
}

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_record(const std::string& code, const std::string& message) {
  const json j = {{"error", {{"code", code}, {"message", message}}}};
  return j.dump();
}

}  // namespace rangemap::io
