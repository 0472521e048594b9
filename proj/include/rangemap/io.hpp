#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rangemap/association.hpp"
#include "rangemap/season_map.hpp"
#include "rangemap/session.hpp"
#include "rangemap/simulator.hpp"

namespace rangemap::io {

namespace fs = std::filesystem;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Schema violations: wrong schema id, unsupported version, unknown or
/// missing keys, out-of-range values.
struct SchemaError : IoError {
  using IoError::IoError;
};

struct GateConfig {
  double chi2_threshold = 5.991;  // 95% quantile, 2 dof
  double location_sigma = 0.65;   // per-axis cross-season localization, meters
  double anchor_sigma = 0.12;     // per-axis anchor-relative residual, meters
};

struct MatchingConfig {
  std::vector<perception::ClassLabel> classes = {perception::ClassLabel::kVegetation,
                                                 perception::ClassLabel::kShrub};
  bool descriptor_gate_enabled = false;
  double descriptor_gate_threshold = 3.0;
  bool transition_enabled = false;
  Eigen::VectorXd drift = Eigen::VectorXd::Zero(perception::kDescriptorSize);
  Eigen::VectorXd drift_variance = Eigen::VectorXd::Zero(perception::kDescriptorSize);
  double anchor_match_radius = 1.0;
  int min_common_anchors = 1;
};

struct PersistenceConfig {
  assoc::DetectorModel detector{0.9, 0.05};
  assoc::SurvivalPrior prior{0.1};
  /// An unmatched landmark counts as surveyed (negative evidence) when the
  /// other season's trajectory passes within this radius.
  double coverage_radius = 2.0;
};

struct ReportConfig {
  int seeds = 5;
  std::vector<double> noise_sweep = {0.05, 0.15, 0.30, 0.45, 0.60};
};

struct PipelineConfig {
  std::uint64_t rng_seed = 1;
  sim::WorldConfig world;
  sim::NoiseModel noise;
  sim::TrajectoryParams trajectory;
  seasonmap::MapBuildParams map_build;
  GateConfig gate;
  MatchingConfig matching;
  PersistenceConfig persistence;
  ReportConfig report;

  void validate() const;
  assoc::GateParams gate_params(assoc::MatchMethod method) const;
  assoc::MatchParams match_params(assoc::MatchMethod method, double dt_seasons) const;
};

/// Strict parse: unknown keys are rejected at every level, values are
/// range-checked, and the version must match.
PipelineConfig load_config(const fs::path& path);
PipelineConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const PipelineConfig& cfg);

void save_session(const session::Session& s, const fs::path& dir);
session::Session load_session(const fs::path& dir);

void save_truth(const sim::GroundTruth& world, const fs::path& file);
sim::GroundTruth load_truth(const fs::path& file);

void save_season_map(const seasonmap::SeasonMap& map, const fs::path& file);
seasonmap::SeasonMap load_season_map(const fs::path& file);

struct MatchArtifact {
  std::string session_a;
  std::string session_b;
  assoc::MatchMethod method = assoc::MatchMethod::kLocationOnly;
  std::vector<assoc::CrossSeasonMatch> matches;
};

void save_matches(const MatchArtifact& m, const fs::path& file);
MatchArtifact load_matches(const fs::path& file);

struct BeliefArtifact {
  std::string session_a;
  std::string session_b;
  std::vector<assoc::PersistenceBelief> beliefs;
};

void save_beliefs(const BeliefArtifact& b, const fs::path& file);
BeliefArtifact load_beliefs(const fs::path& file);

struct MetricsArtifact {
  std::string session_a;
  std::string session_b;
  std::string method;
  sim::EvalResult result;
};

void save_metrics(const MetricsArtifact& m, const fs::path& file);
MetricsArtifact load_metrics(const fs::path& file);

/// Write-temp-then-rename; the destination never holds partial content.
void atomic_write(const fs::path& path, const std::string& content);
std::string read_file(const fs::path& path);

/// One-line machine-readable error record for the CLI.
std::string error_record(const std::string& code, const std::string& message);

}  // namespace rangemap::io
