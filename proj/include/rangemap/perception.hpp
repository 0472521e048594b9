#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rangemap/geo.hpp"
#include "rangemap/octree.hpp"

namespace rangemap::perception {

using geo::GeoCoordinate;
using geo::LocalFrame;
using geo::LocalPoint;

struct PerceptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyMask : PerceptionError {
  using PerceptionError::PerceptionError;
};
struct OutOfImage : PerceptionError {
  using PerceptionError::PerceptionError;
};
struct NoGroundIntersection : PerceptionError {
  using PerceptionError::PerceptionError;
};
struct NoHit : PerceptionError {
  using PerceptionError::PerceptionError;
};

enum class ClassLabel { kVegetation, kLitter, kCrack, kDip, kConmod, kShrub, kOther };

const char* to_string(ClassLabel label);
std::optional<ClassLabel> class_label_from_string(const std::string& s);

/// True for landmark classes that persist but change between seasons
/// (plants); ConMods are static, microsites are terrain features.
bool is_semi_static(ClassLabel label);

enum class CameraKind { kDown, kFront };

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;  // focal lengths, pixels
  double cx = 0.0, cy = 0.0;  // principal point, pixels
  int width = 0, height = 0;

  void validate() const;
};

/// Camera-to-local rigid pose. `orientation` rotates camera axes
/// (x right, y down, z along the optical axis) into the local ENU frame.
struct CameraPose {
  LocalPoint position;
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  void validate() const;
  Eigen::Matrix3d rotation() const { return orientation.normalized().toRotationMatrix(); }
};

struct PixelRun {
  int row;
  int col;
  int length;
};

/// Per-mask color summary carried with the mask record; the pipeline
/// consumes masks plus these summaries, never raw pixels.
struct MaskStats {
  Eigen::Vector3d color_mean = Eigen::Vector3d::Zero();  // rgb in [0, 1]
  Eigen::Vector3d color_var = Eigen::Vector3d::Zero();
};

struct SegmentMask {
  std::uint64_t mask_id = 0;
  std::string frame_id;
  int width = 0, height = 0;
  std::vector<PixelRun> runs;  // row-major, non-overlapping
  ClassLabel class_label = ClassLabel::kOther;
  double confidence = 0.0;
  MaskStats stats;

  std::size_t pixel_count() const;
  /// Throws EmptyMask / PerceptionError when runs are empty or out of bounds.
  void validate() const;
};

struct CentroidBbox {
  Eigen::Vector2d centroid;  // subpixel (x, y), pixel-center convention
  int min_x, min_y, max_x, max_y;
};

/// Mean pixel coordinate and tight axis-aligned pixel bounds of the mask.
CentroidBbox mask_centroid_bbox(const SegmentMask& m);

/// Ray from the camera center through a (subpixel) image point, in the
/// local frame. Throws OutOfImage outside the pixel-center bounds.
octree::Ray pixel_to_ray(const CameraIntrinsics& k, const CameraPose& pose,
                         const Eigen::Vector2d& px);

/// Descriptor layout (fixed, 10 components):
///   [0] area, m^2
///   [1..3] mean color r, g, b
///   [4..6] color variance r, g, b
///   [7] elongation (major/minor axis ratio, >= 1)
///   [8] orientation of the major axis in the ENU plane, radians in [0, pi)
///   [9] perimeter / area, 1/m
constexpr int kDescriptorSize = 10;

/// Metric context for turning pixel geometry into meters: the 2x2 map from
/// pixel displacements (x right, y down) to ground-plane meters at the
/// landmark range. Areas scale by |det|.
struct DescriptorFrame {
  Eigen::Matrix2d image_to_enu = Eigen::Matrix2d::Identity();
};

Eigen::VectorXd compute_descriptor(const SegmentMask& m, const MaskStats& stats,
                                   const DescriptorFrame& df);

/// Weighted RMS distance between descriptors; `scale` holds one positive
/// normalizer per component. The orientation component is compared on the
/// circle of period pi.
struct DescriptorMetric {
  Eigen::VectorXd scale;

  static DescriptorMetric defaults();
  double distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
};

struct LandmarkObservation {
  LocalPoint position;
  Eigen::Matrix3d position_covariance = Eigen::Matrix3d::Zero();
  ClassLabel class_label = ClassLabel::kOther;
  Eigen::VectorXd descriptor;
  double timestamp = 0.0;
  std::string frame_id;
  GeoCoordinate geo{0.0, 0.0, 0.0};
  std::uint64_t source_mask_id = 0;
};

struct ProjectionParams {
  /// Microsite-scale ground relief folded into the vertical input noise of
  /// the down-facing intersection.
  double ground_relief_sigma = 0.05;  // meters
  double front_max_range = 10.0;      // meters
};

/// Down-facing projection: intersect the centroid ray with the plane
/// up = ground_height. Covariance is the pose position covariance pushed
/// through the first-order intersection Jacobian plus the ground-relief
/// term. Throws NoGroundIntersection when the ray cannot reach the plane
/// at positive range.
LandmarkObservation project_down_facing(const SegmentMask& m, const CameraIntrinsics& k,
                                        const CameraPose& pose,
                                        const Eigen::Matrix3d& pose_position_cov,
                                        double ground_height, const LocalFrame& frame,
                                        double timestamp, const ProjectionParams& params = {});

/// Front-facing projection: cast the centroid ray plus the four bbox-corner
/// rays into the octree; the centroid hit is the landmark position and the
/// corner hits define the spatial extent recorded in the descriptor.
/// Throws NoHit when the centroid ray meets no occupied voxel in range.
LandmarkObservation project_front_facing(const SegmentMask& m, const CameraIntrinsics& k,
                                         const CameraPose& pose,
                                         const Eigen::Matrix3d& pose_position_cov,
                                         const octree::OccupancyOctree& tree,
                                         const LocalFrame& frame, double timestamp,
                                         const ProjectionParams& params = {});

struct Classification {
  ClassLabel label;
  double confidence;
};

/// Pluggable mask classifier. The pipeline only relies on this interface;
/// a trained model can be dropped in behind it.
class MaskClassifier {
public:
  virtual ~MaskClassifier() = default;
  virtual Classification classify(const SegmentMask& m, CameraKind kind) const = 0;
};

/// Deterministic rule-based default: gray low-saturation masks are ConMods,
/// green-dominant masks are vegetation (shrubs on the front camera), thin
/// dark masks are cracks, round dark masks are dips, tan masks are litter.
/// Anything unmatched falls back to `other` with confidence 0.
class HeuristicClassifier : public MaskClassifier {
public:
  struct Thresholds {
    std::size_t min_pixels = 9;
    double gray_saturation = 0.12;
    double green_margin = 0.05;
    double dark_brightness = 0.35;
    double crack_aspect = 5.0;
    double tan_margin = 0.08;
  };

  HeuristicClassifier() = default;
  explicit HeuristicClassifier(const Thresholds& t) : thresholds_(t) {}
  Classification classify(const SegmentMask& m, CameraKind kind) const override;

private:
  Thresholds thresholds_;
};

/// Never throws: unusable masks come back as `other` with confidence 0.
Classification classify_mask(const SegmentMask& m, CameraKind kind, const MaskClassifier& classifier);

}  // namespace rangemap::perception
