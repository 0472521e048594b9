#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rangemap/season_map.hpp"
#include "rangemap/session.hpp"

namespace rangemap::assoc {

using seasonmap::LandmarkInstance;
using seasonmap::SeasonMap;

struct AssociationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientAnchors : AssociationError {
  using AssociationError::AssociationError;
};
struct NonMonotonicTime : AssociationError {
  using AssociationError::AssociationError;
};

struct GateParams {
  /// Horizontal covariance of the position comparison (meters^2). In
  /// location mode this is the cross-season localization covariance; in
  /// anchor mode it is the covariance of the anchor-relative residual.
  Eigen::Matrix2d localization_covariance = Eigen::Matrix2d::Identity();
  double chi2_threshold = 5.991;  // 95% quantile, 2 dof
};

enum class MatchMethod { kLocationOnly, kAnchorRelative };

const char* to_string(MatchMethod m);
std::optional<MatchMethod> match_method_from_string(const std::string& s);

struct CrossSeasonMatch {
  std::uint32_t instance_a_id = 0;
  std::uint32_t instance_b_id = 0;
  double mahalanobis_distance = 0.0;
  double descriptor_distance = 0.0;
  MatchMethod method = MatchMethod::kLocationOnly;
};

/// Linear appearance drift model: expected per-season change and variance
/// growth for each descriptor component.
struct FeatureTransition {
  Eigen::VectorXd drift;
  Eigen::VectorXd drift_variance;
};

struct FeaturePrediction {
  Eigen::VectorXd descriptor;
  Eigen::VectorXd variance;
};

/// Push a descriptor forward dt seasons: mean shifts by drift*dt, variance
/// grows by drift_variance*dt.
FeaturePrediction predict_features(const Eigen::VectorXd& descriptor,
                                   const Eigen::VectorXd& variance, double dt_seasons,
                                   const FeatureTransition& f);

/// Appearance gate used during matching. Distances are RMS over components,
/// each normalized by sqrt(base_variance + predicted variance); when a
/// transition is set the gate centers on the predicted descriptor instead of
/// the raw one.
struct DescriptorGate {
  double threshold = 3.0;
  Eigen::VectorXd base_variance;
  std::optional<FeatureTransition> transition;

  static Eigen::VectorXd default_base_variance();
  double distance(const Eigen::VectorXd& desc_a, const Eigen::VectorXd& desc_b,
                  double dt_seasons) const;
};

/// Same-class instances of `other` within the chi-square gate of `inst`,
/// under covariance localization + both horizontal spreads. Returned in map
/// order; empty result is valid.
std::vector<const LandmarkInstance*> gate_candidates(const LandmarkInstance& inst,
                                                     const SeasonMap& other, const GateParams& g);

struct MatchParams {
  GateParams gate;
  MatchMethod method = MatchMethod::kLocationOnly;
  std::optional<DescriptorGate> descriptor_gate;
  double dt_seasons = 1.0;
  /// ConMod anchors of the two maps pair up greedily by proximity within
  /// this radius (anchor_relative only).
  double anchor_match_radius = 1.0;
  int min_common_anchors = 1;
};

/// Greedy one-to-one matching in ascending Mahalanobis order. Location mode
/// compares absolute positions; anchor mode compares anchor-offset vectors
/// averaged over ConMods common to both instances (requires at least two
/// proximity-matched anchors between the maps, else InsufficientAnchors).
std::vector<CrossSeasonMatch> match_cross_season(const SeasonMap& map_a, const SeasonMap& map_b,
                                                 const MatchParams& params);

struct ContextResult {
  std::vector<std::string> frames_a;
  std::vector<std::string> frames_b;
  std::vector<std::uint32_t> nearby_a;  // instance ids, any class
  std::vector<std::uint32_t> nearby_b;
};

/// Frames whose camera ground-footprint center lies within `radius` of the
/// matched landmark (inclusive), plus all instances within the radius, for
/// both seasons. Each season is centered on its own matched instance.
ContextResult gather_context(const CrossSeasonMatch& match, const SeasonMap& map_a,
                             const SeasonMap& map_b, const session::Session& session_a,
                             const session::Session& session_b, double radius = 2.0);

struct DetectorModel {
  double p_detect = 0.9;  // P(detected | exists)
  double p_false = 0.05;  // P(detected | gone)
};

/// Exponential survival prior: P(still there after dt) = exp(-hazard * dt).
struct SurvivalPrior {
  double hazard_rate = 0.1;  // 1 / seasons
};

struct PersistenceEvidence {
  double time = 0.0;
  bool detected = false;
};

struct PersistenceBelief {
  std::string landmark_id;
  double survival_posterior = 1.0;
  double last_update_time = 0.0;
  std::vector<PersistenceEvidence> evidence_log;

  static PersistenceBelief fresh(std::string landmark_id, double t, double prior = 1.0);
};

/// Advance the belief to time t and fold in one survey outcome. The survival
/// mass decays by exp(-hazard * dt) (dead mass stays dead); a detected /
/// not-detected outcome applies the Bayes update under the detector model;
/// nullopt means the area was not surveyed and only decay applies.
/// Throws NonMonotonicTime when t precedes the last update.
PersistenceBelief persistence_update(const PersistenceBelief& b, double t,
                                     std::optional<bool> detected, const DetectorModel& d,
                                     const SurvivalPrior& s);

}  // namespace rangemap::assoc
