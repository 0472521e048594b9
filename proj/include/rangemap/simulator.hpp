#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rangemap/association.hpp"
#include "rangemap/season_map.hpp"
#include "rangemap/session.hpp"

namespace rangemap::sim {

using geo::GeoCoordinate;
using geo::LocalPoint;
using perception::ClassLabel;

struct SimulatorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidConfig : SimulatorError {
  using SimulatorError::SimulatorError;
};
struct UnknownInstance : SimulatorError {
  using SimulatorError::SimulatorError;
};

enum class Treatment { kDrillSeeded, kConmod, kControl };

const char* to_string(Treatment t);

/// Per-season canopy size multiplier, sampled uniformly per plant per season.
struct GrowthModel {
  double multiplier_min = 1.15;
  double multiplier_max = 1.35;
};

struct WorldConfig {
  int plots_drill = 6;
  int plots_conmod = 6;
  int plots_control = 6;
  double plot_size = 10.0;       // meters, square plots
  double plot_gap = 5.0;         // meters between plots
  double conmod_diameter = 0.30; // meters
  double conmod_spacing = 2.0;   // grid pitch inside ConMod plots
  double microsite_radius_min = 0.05;
  double microsite_radius_max = 0.10;
  int microsites_per_plot = 20;
  double plant_density = 1.0;      // plants / m^2
  double plant_spacing_min = 0.3;  // meters between plant centers
  double shrub_density = 0.02;     // shrubs / m^2
  double hazard_rate = 0.1;        // plant deaths / season
  double recruitment_rate = 0.0;   // new plants / m^2 / season
  GrowthModel growth;
  int season_count = 4;
  std::uint64_t rng_seed = 1;
  GeoCoordinate origin{38.09, -109.60, 1800.0};

  int plot_count() const { return plots_drill + plots_conmod + plots_control; }
  void validate() const;
};

struct NoiseModel {
  /// Scale of the slowly drifting localization bias (per axis, meters); the
  /// bias is shared by all frames of a survey row and drifts between rows.
  double pose_noise_sigma = 0.45;
  /// Hard bound on the horizontal pose error norm.
  double pose_noise_max = 1.0;
  double row_walk_step_sigma = 0.05;  // bias drift between adjacent rows
  double jitter_sigma = 0.025;        // per-frame error (RTK-grade)
  /// RTK mode drops the drifting bias entirely; errors stay at the ~5 cm
  /// jitter scale.
  bool rtk_mode = false;
  double detection_miss_rate = 0.0;
  double false_positive_rate = 0.0;  // spurious masks per frame
  double descriptor_noise_sigma = 0.02;

  void validate() const;
};

struct TrajectoryParams {
  double camera_height = 1.0;  // down camera above ground, meters
  double row_spacing = 1.0;    // lawnmower row pitch
  double frame_step = 0.5;     // along-row spacing of captures
  double speed = 0.5;          // m/s, sets timestamps
};

struct PlotTruth {
  int index = 0;
  Treatment treatment = Treatment::kControl;
  LocalPoint origin;  // min corner
};

struct PlantTruth {
  std::uint64_t global_id = 0;
  int plot = 0;
  LocalPoint position;
  ClassLabel class_label = ClassLabel::kVegetation;  // vegetation or shrub
  std::string species;
  int birth_season = 0;
  int death_season = -1;  // -1: alive through the horizon
  double elongation = 1.0;
  double orientation = 0.0;                  // radians, [0, pi)
  double height = 0.0;                       // shrubs only, meters
  std::vector<double> size_per_season;       // canopy radius by season, 0 if not alive
  std::vector<Eigen::Vector3d> color_per_season;

  bool alive_at(int season) const {
    return season >= birth_season && (death_season < 0 || season < death_season);
  }
};

struct ConmodTruth {
  std::uint64_t id = 0;
  int plot = 0;
  LocalPoint position;
};

struct MicrositeTruth {
  std::uint64_t id = 0;
  int plot = 0;
  ClassLabel type = ClassLabel::kLitter;  // litter, crack, or dip
  LocalPoint center;
  double radius = 0.05;
};

enum class SourceKind { kPlant, kConmod, kMicrosite, kFalse };

const char* to_string(SourceKind k);

struct MaskSource {
  SourceKind kind = SourceKind::kFalse;
  std::uint64_t id = 0;

  auto operator<=>(const MaskSource&) const = default;
};

struct GroundTruth {
  WorldConfig config;
  std::vector<PlotTruth> plots;
  std::vector<PlantTruth> plants;
  std::vector<ConmodTruth> conmods;
  std::vector<MicrositeTruth> microsites;
  /// session_id -> mask_id -> source; filled by simulate_deployment.
  std::map<std::string, std::map<std::uint64_t, MaskSource>> mask_sources;

  /// Analytic descriptor of a plant at a season (same layout as the
  /// perception descriptor), for calibration and tests.
  Eigen::VectorXd plant_descriptor(const PlantTruth& p, int season) const;
};

/// Deterministic world generation: plots on a grid with 5 m gaps, a regular
/// ConMod grid on ConMod plots, plants placed per density with a spacing
/// floor, lifecycles drawn from the hazard rate.
GroundTruth generate_world(const WorldConfig& cfg);

/// One survey of the whole field at `season`: lawnmower rows per plot,
/// masks for every covered alive plant / ConMod / microsite (minus misses,
/// plus false positives), poses perturbed by the noise model, point scans
/// for the front camera, and the mask -> source record appended to `world`.
/// `true_positions_out`, when given, receives the unperturbed pose of every
/// frame (evaluation scaffolding; sessions never carry it).
session::Session simulate_deployment(GroundTruth& world, int season, const NoiseModel& noise,
                                     const TrajectoryParams& trajectory,
                                     std::vector<LocalPoint>* true_positions_out = nullptr);

struct EvalResult {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 0.0;
  int correct_matches = 0;
  int wrong_matches = 0;
  int missed = 0;
  int persisting_observed = 0;
  bool precision_defaulted = false;  // no matches: precision reported 1 by convention
};

/// Score matches against ground truth. A match is correct iff both
/// instances' majority mask sources are the same real plant; recall is over
/// plants alive and observed in both seasons.
EvalResult evaluate_association(const std::vector<assoc::CrossSeasonMatch>& matches,
                                const GroundTruth& truth, const seasonmap::SeasonMap& map_a,
                                const seasonmap::SeasonMap& map_b);

/// Feature transition calibrated from the world's own per-season descriptor
/// truth (mean and variance of the per-season component deltas).
assoc::FeatureTransition suggested_feature_transition(const GroundTruth& world);

}  // namespace rangemap::sim
