#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "rangemap/geo.hpp"
#include "rangemap/perception.hpp"

namespace rangemap::session {

using geo::GeoCoordinate;
using geo::LocalPoint;

struct CameraConfig {
  std::string camera_id;
  perception::CameraKind kind = perception::CameraKind::kDown;
  perception::CameraIntrinsics intrinsics;
  Eigen::Vector3d mount_offset = Eigen::Vector3d::Zero();  // robot frame, meters
  Eigen::Quaterniond mount_rotation = Eigen::Quaterniond::Identity();  // camera -> robot
};

/// One captured image: robot pose plus the camera that took it. The robot
/// frame is x forward, y left, z up; poses map robot to local ENU.
struct FrameRecord {
  std::string frame_id;
  double timestamp = 0.0;
  std::string camera_id;
  LocalPoint position;
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  Eigen::Matrix3d position_cov = Eigen::Matrix3d::Zero();
};

/// Points observed from one frame, in the local frame, used to populate the
/// occupancy octree. The sensor origin is the frame position.
struct PointScan {
  std::string frame_id;
  std::vector<LocalPoint> points;
};

struct Session {
  std::string session_id;
  std::string season_tag;   // e.g. 2022-05
  int season_index = 0;     // deployment counter, persistence time unit
  GeoCoordinate origin{0.0, 0.0, 0.0};
  double ground_height = 0.0;  // surveyed plot surface, local up
  std::vector<CameraConfig> cameras;
  std::vector<FrameRecord> frames;
  std::vector<perception::SegmentMask> masks;
  std::vector<PointScan> scans;

  const CameraConfig* find_camera(const std::string& camera_id) const;
  geo::LocalFrame local_frame() const { return {origin}; }
};

perception::CameraPose camera_pose_for(const FrameRecord& frame, const CameraConfig& camera);

}  // namespace rangemap::session
