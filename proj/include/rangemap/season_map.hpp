#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rangemap/perception.hpp"
#include "rangemap/session.hpp"

namespace rangemap::seasonmap {

using geo::LocalFrame;
using geo::LocalPoint;
using perception::ClassLabel;
using perception::LandmarkObservation;

struct SeasonMapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoAnchors : SeasonMapError {
  using SeasonMapError::SeasonMapError;
};

struct AnchorOffset {
  std::uint32_t conmod_id;      // instance id of the static anchor
  Eigen::Vector3d offset;       // instance position minus anchor position
};

struct LandmarkInstance {
  std::uint32_t instance_id = 0;
  ClassLabel class_label = ClassLabel::kOther;
  LocalPoint mean_position;
  geo::GeoCoordinate geo_position{0.0, 0.0, 0.0};  // mean position in the GPS frame
  Eigen::Matrix3d position_spread = Eigen::Matrix3d::Zero();  // member position covariance
  Eigen::VectorXd descriptor_mean;
  std::vector<LandmarkObservation> observations;
  std::vector<AnchorOffset> anchor_offsets;  // sorted by conmod_id
};

struct TrajectorySample {
  double timestamp = 0.0;
  LocalPoint position;
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

struct SeasonMap {
  std::string session_id;
  std::string season_tag;
  int season_index = 0;
  LocalFrame frame{{0.0, 0.0, 0.0}};
  std::vector<LandmarkInstance> instances;       // semi-static landmarks + microsites
  std::vector<LandmarkInstance> static_anchors;  // ConMods accepted as anchors
  std::vector<TrajectorySample> trajectory;
  std::size_t skipped_frames = 0;
  std::size_t skipped_masks = 0;
};

struct ClusterParams {
  /// Cluster count. Unset -> silhouette sweep over k in [1, min(20, n)].
  std::optional<int> k;
  double merge_radius = 0.15;     // meters; one octree leaf
  double descriptor_gate = 3.0;   // normalized descriptor distance
  std::uint64_t rng_seed = 1;
  int max_iterations = 100;
  int max_silhouette_k = 20;
};

/// k-means (deterministic k-means++ seeding, Lloyd iterations) over the
/// observation positions, followed by a merge pass: clusters whose centroids
/// are within merge_radius and whose descriptor means are within
/// descriptor_gate collapse into one instance. All observations must share
/// one class label; every observation lands in exactly one instance.
/// Equidistant assignments break toward the lowest centroid index; k > n is
/// clamped; coincident inputs return a single instance regardless of k.
std::vector<LandmarkInstance> cluster_observations(
    std::span<const LandmarkObservation> obs, const ClusterParams& params,
    const perception::DescriptorMetric& metric = perception::DescriptorMetric::defaults());

/// Number of connected components of the observation positions under
/// `radius` linkage; the pipeline's cluster-count estimate for a session.
int estimate_cluster_count(std::span<const LandmarkObservation> obs, double radius);

struct MapBuildParams {
  ClusterParams cluster;
  /// Unset k in `cluster` makes the builder estimate k per class via
  /// linkage components at merge_radius (a silhouette sweep cannot reach
  /// field-scale counts).
  perception::ProjectionParams projection;
  double octree_resolution = 0.15;
  octree::OccupancyParams octree;
  double octree_margin = 5.0;  // meters around the scanned region
  /// ConMod clusters with horizontal RMS spread above this are not trusted
  /// as static anchors (a ConMod is ~0.30 m across).
  double conmod_spread_limit = 0.45;
  /// Shrub observations are front-surface octree hits and spread across the
  /// canopy, so shrubs cluster with their own, wider radius.
  double shrub_merge_radius = 1.4;
  /// Observations with a smaller metric area are dropped; image-border
  /// slivers of partly visible objects produce degenerate descriptors.
  double min_observation_area = 1e-3;  // m^2
  bool trust_input_labels = true;
  int n_anchors = 4;
};

/// Run perception over every frame of the session, cluster per class, and
/// split ConMods into static anchors. Frames that fail are skipped and
/// counted; throws SeasonMapError when no frame is usable. When octree_out
/// is given it receives the octree built from the session scans (empty when
/// the session has none).
SeasonMap build_season_map(const session::Session& s, const MapBuildParams& params,
                           const perception::MaskClassifier& classifier,
                           std::optional<octree::OccupancyOctree>* octree_out = nullptr);

/// Fill each instance's anchor_offsets with offsets to its n nearest
/// ConMod anchors (fewer when fewer exist), sorted by conmod_id.
/// Throws NoAnchors when the map has no static anchors.
void anchor_to_static(SeasonMap& map, int n_anchors);

}  // namespace rangemap::seasonmap
