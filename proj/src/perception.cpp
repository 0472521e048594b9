#include "rangemap/perception.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace rangemap::perception {

namespace {

Eigen::Vector3d to_vec(const LocalPoint& p) { return {p.east, p.north, p.up}; }
LocalPoint to_point(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

struct MaskMoments {
  double count = 0.0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();   // (x, y) pixel centers
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();    // pixel-coordinate covariance
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  double perimeter_px = 0.0;  // exposed pixel edges
};

/// Canonical per-row merged intervals [begin, end).
std::map<int, std::vector<std::pair<int, int>>> row_intervals(const SegmentMask& m) {
  std::map<int, std::vector<std::pair<int, int>>> rows;
  for (const PixelRun& r : m.runs) {
    rows[r.row].emplace_back(r.col, r.col + r.length);
  }
  for (auto& [row, iv] : rows) {
    std::sort(iv.begin(), iv.end());
    std::vector<std::pair<int, int>> merged;
    for (const auto& seg : iv) {
      if (!merged.empty() && seg.first <= merged.back().second) {
        merged.back().second = std::max(merged.back().second, seg.second);
      } else {
        merged.push_back(seg);
      }
    }
    iv = std::move(merged);
  }
  return rows;
}

double interval_overlap(const std::pair<int, int>& seg,
                        const std::vector<std::pair<int, int>>& others) {
  double total = 0.0;
  for (const auto& o : others) {
    const int lo = std::max(seg.first, o.first);
    const int hi = std::min(seg.second, o.second);
    if (hi > lo) total += hi - lo;
  }
  return total;
}

MaskMoments mask_moments(const SegmentMask& m) {
  m.validate();
  const auto rows = row_intervals(m);

  double n = 0.0, su = 0.0, sv = 0.0, suu = 0.0, svv = 0.0, suv = 0.0;
  MaskMoments out;
  out.min_x = m.width;
  out.min_y = m.height;
  out.max_x = 0;
  out.max_y = 0;

  static const std::vector<std::pair<int, int>> kEmptyRow;
  for (const auto& [row, iv] : rows) {
    const auto above = rows.find(row - 1);
    const auto below = rows.find(row + 1);
    for (const auto& [b, e] : iv) {
      const double len = e - b;
      // closed-form sums over the run b..e-1
      const double sum_u = len * b + len * (len - 1.0) / 2.0;
      const double sum_uu = len * double(b) * b + 2.0 * b * (len * (len - 1.0) / 2.0) +
                            (len - 1.0) * len * (2.0 * len - 1.0) / 6.0;
      n += len;
      su += sum_u;
      sv += len * row;
      suu += sum_uu;
      svv += len * double(row) * row;
      suv += double(row) * sum_u;
      out.min_x = std::min(out.min_x, b);
      out.max_x = std::max(out.max_x, e - 1);
      out.min_y = std::min(out.min_y, row);
      out.max_y = std::max(out.max_y, row);
      out.perimeter_px += 2.0;  // left + right edges
      out.perimeter_px += len - interval_overlap({b, e}, above != rows.end() ? above->second : kEmptyRow);
      out.perimeter_px += len - interval_overlap({b, e}, below != rows.end() ? below->second : kEmptyRow);
    }
  }

  out.count = n;
  out.mean = {su / n, sv / n};
  out.cov(0, 0) = suu / n - out.mean.x() * out.mean.x();
  out.cov(0, 1) = out.cov(1, 0) = suv / n - out.mean.x() * out.mean.y();
  out.cov(1, 1) = svv / n - out.mean.y() * out.mean.y();
  return out;
}

struct ShapeAxes {
  double elongation;
  double orientation;  // [0, pi)
  double major_axis;   // sqrt of the larger eigenvalue
};

ShapeAxes principal_axes(const Eigen::Matrix2d& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const double lo = std::max(es.eigenvalues()(0), 0.0);
  const double hi = std::max(es.eigenvalues()(1), 0.0);
  if (hi <= 1e-18 || (hi - lo) <= 1e-12 * std::max(hi, 1.0)) {
    return {1.0, 0.0, std::sqrt(hi)};
  }
  const Eigen::Vector2d v = es.eigenvectors().col(1);
  double angle = std::atan2(v.y(), v.x());
  if (angle < 0.0) angle += M_PI;
  if (angle >= M_PI) angle -= M_PI;
  const double elong = std::sqrt(hi / std::max(lo, hi * 1e-6));
  return {elong, angle, std::sqrt(hi)};
}

Eigen::VectorXd descriptor_from(const MaskMoments& mm, const MaskStats& stats,
                                const DescriptorFrame& df) {
  const double px_area = std::abs(df.image_to_enu.determinant());
  const double area = mm.count * px_area;
  // Pixel y points down in the image; image_to_enu already carries the flip.
  const Eigen::Matrix2d metric_cov = df.image_to_enu * mm.cov * df.image_to_enu.transpose();
  const ShapeAxes axes = principal_axes(metric_cov);
  const double perimeter_m = mm.perimeter_px * std::sqrt(px_area);

  Eigen::VectorXd d(kDescriptorSize);
  d(0) = area;
  d.segment<3>(1) = stats.color_mean;
  d.segment<3>(4) = stats.color_var;
  d(7) = axes.elongation;
  d(8) = axes.orientation;
  d(9) = area > 0.0 ? perimeter_m / area : 0.0;
  return d;
}

}  // namespace

const char* to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::kVegetation: return "vegetation";
    case ClassLabel::kLitter: return "litter";
    case ClassLabel::kCrack: return "crack";
    case ClassLabel::kDip: return "dip";
    case ClassLabel::kConmod: return "conmod";
    case ClassLabel::kShrub: return "shrub";
    case ClassLabel::kOther: return "other";
  }
  return "other";
}

std::optional<ClassLabel> class_label_from_string(const std::string& s) {
  for (const ClassLabel l : {ClassLabel::kVegetation, ClassLabel::kLitter, ClassLabel::kCrack,
                             ClassLabel::kDip, ClassLabel::kConmod, ClassLabel::kShrub,
                             ClassLabel::kOther}) {
    if (s == to_string(l)) return l;
  }
  return std::nullopt;
}

bool is_semi_static(ClassLabel label) {
  return label == ClassLabel::kVegetation || label == ClassLabel::kShrub;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw PerceptionError("intrinsics: focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw PerceptionError("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw PerceptionError("intrinsics: principal point outside the image");
  }
}

void CameraPose::validate() const {
  if (std::abs(orientation.norm() - 1.0) > 1e-6) {
    throw PerceptionError("camera pose: orientation quaternion is not unit norm");
  }
}

std::size_t SegmentMask::pixel_count() const {
  std::size_t n = 0;
  for (const PixelRun& r : runs) n += static_cast<std::size_t>(r.length);
  return n;
}

void SegmentMask::validate() const {
  if (runs.empty()) throw EmptyMask("mask " + std::to_string(mask_id) + " has no pixels");
  if (width <= 0 || height <= 0) throw PerceptionError("mask: image size must be positive");
  for (const PixelRun& r : runs) {
    if (r.length <= 0 || r.row < 0 || r.row >= height || r.col < 0 || r.col + r.length > width) {
      throw PerceptionError("mask " + std::to_string(mask_id) + ": run outside image bounds");
    }
  }
}

CentroidBbox mask_centroid_bbox(const SegmentMask& m) {
  const MaskMoments mm = mask_moments(m);
  return {mm.mean, mm.min_x, mm.min_y, mm.max_x, mm.max_y};
}

octree::Ray pixel_to_ray(const CameraIntrinsics& k, const CameraPose& pose,
                         const Eigen::Vector2d& px) {
  k.validate();
  pose.validate();
  if (px.x() < -0.5 || px.x() > k.width - 0.5 || px.y() < -0.5 || px.y() > k.height - 0.5) {
    throw OutOfImage("pixel (" + std::to_string(px.x()) + ", " + std::to_string(px.y()) +
                     ") outside image bounds");
  }
  const Eigen::Vector3d dir_cam((px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy, 1.0);
  const Eigen::Vector3d dir_local = pose.rotation() * dir_cam;
  return octree::Ray::from(pose.position, to_point(dir_local));
}

Eigen::VectorXd compute_descriptor(const SegmentMask& m, const MaskStats& stats,
                                   const DescriptorFrame& df) {
  return descriptor_from(mask_moments(m), stats, df);
}

DescriptorMetric DescriptorMetric::defaults() {
  DescriptorMetric dm;
  dm.scale.resize(kDescriptorSize);
  dm.scale << 0.02, 0.08, 0.08, 0.08, 0.03, 0.03, 0.03, 1.5, 0.8, 40.0;
  return dm;
}

double DescriptorMetric::distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  double acc = 0.0;
  for (int i = 0; i < kDescriptorSize; ++i) {
    double d = a(i) - b(i);
    if (i == 8) {
      d = std::fmod(std::abs(d), M_PI);
      d = std::min(d, M_PI - d);
    }
    const double nd = d / scale(i);
    acc += nd * nd;
  }
  return std::sqrt(acc / kDescriptorSize);
}

LandmarkObservation project_down_facing(const SegmentMask& m, const CameraIntrinsics& k,
                                        const CameraPose& pose,
                                        const Eigen::Matrix3d& pose_position_cov,
                                        double ground_height, const LocalFrame& frame,
                                        double timestamp, const ProjectionParams& params) {
  const MaskMoments mm = mask_moments(m);
  if (pose.position.up <= ground_height) {
    throw NoGroundIntersection("camera is not above the ground plane");
  }
  const octree::Ray ray = pixel_to_ray(k, pose, mm.mean);
  const Eigen::Vector3d d = to_vec(ray.direction);
  if (!(d.z() < 0.0)) {
    throw NoGroundIntersection("centroid ray does not point below the horizon");
  }
  const double t = (ground_height - ray.origin.up) / d.z();
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw NoGroundIntersection("centroid ray misses the ground plane");
  }
  const Eigen::Vector3d position = to_vec(ray.origin) + t * d;

  // First-order sensitivity of the intersection to the camera position:
  // moving the camera moves the hit point inside the plane.
  Eigen::Matrix3d jac = Eigen::Matrix3d::Identity();
  jac.col(2) -= d / d.z();  // column acting on the camera height
  Eigen::Matrix3d cov = jac * pose_position_cov * jac.transpose();
  const Eigen::Vector3d relief_dir = d / d.z();
  cov += params.ground_relief_sigma * params.ground_relief_sigma * relief_dir * relief_dir.transpose();

  // Ground displacement per pixel near the centroid, pushed through the
  // same in-plane projection.
  const Eigen::Matrix3d rot = pose.rotation();
  const Eigen::Vector3d gx = jac * rot.col(0) * (t / k.fx);
  const Eigen::Vector3d gy = jac * rot.col(1) * (t / k.fy);
  DescriptorFrame df;
  df.image_to_enu.col(0) = gx.head<2>();
  df.image_to_enu.col(1) = gy.head<2>();

  LandmarkObservation obs;
  obs.position = to_point(position);
  obs.position_covariance = cov;
  obs.class_label = m.class_label;
  obs.descriptor = descriptor_from(mm, m.stats, df);
  obs.timestamp = timestamp;
  obs.frame_id = m.frame_id;
  obs.geo = geo::local_to_geo(frame, obs.position);
  obs.source_mask_id = m.mask_id;
  return obs;
}

LandmarkObservation project_front_facing(const SegmentMask& m, const CameraIntrinsics& k,
                                         const CameraPose& pose,
                                         const Eigen::Matrix3d& pose_position_cov,
                                         const octree::OccupancyOctree& tree,
                                         const LocalFrame& frame, double timestamp,
                                         const ProjectionParams& params) {
  const MaskMoments mm = mask_moments(m);
  const octree::Ray centroid_ray = pixel_to_ray(k, pose, mm.mean);
  // The first occupied voxel is the near surface of the object; the middle
  // of the contiguous occupied run approximates its center.
  const auto run = tree.raycast_occupied_run(centroid_ray, params.front_max_range);
  if (!run) {
    throw NoHit("centroid ray met no occupied voxel within " +
                std::to_string(params.front_max_range) + " m");
  }
  const Eigen::Vector3d position = 0.5 * (to_vec(run->entry) + to_vec(run->exit));
  const double range = (to_vec(run->entry) - to_vec(centroid_ray.origin)).norm();

  // bbox corner rays bound the landmark's spatial extent
  const std::array<Eigen::Vector2d, 4> corners = {
      Eigen::Vector2d(mm.min_x, mm.min_y), Eigen::Vector2d(mm.max_x, mm.min_y),
      Eigen::Vector2d(mm.min_x, mm.max_y), Eigen::Vector2d(mm.max_x, mm.max_y)};
  std::array<std::optional<Eigen::Vector3d>, 4> corner_hits;
  for (int i = 0; i < 4; ++i) {
    const auto ch = tree.raycast_first_occupied(pixel_to_ray(k, pose, corners[i]),
                                                params.front_max_range);
    if (ch) corner_hits[i] = to_vec(*ch);
  }

  // Image-plane metric at the hit range.
  DescriptorFrame df;
  df.image_to_enu = Eigen::Matrix2d::Zero();
  df.image_to_enu(0, 0) = range / k.fx;
  df.image_to_enu(1, 1) = range / k.fy;
  Eigen::VectorXd descriptor = descriptor_from(mm, m.stats, df);
  if (corner_hits[0] && corner_hits[1] && corner_hits[2] && corner_hits[3]) {
    const double w =
        0.5 * ((*corner_hits[1] - *corner_hits[0]).norm() + (*corner_hits[3] - *corner_hits[2]).norm());
    const double h =
        0.5 * ((*corner_hits[2] - *corner_hits[0]).norm() + (*corner_hits[3] - *corner_hits[1]).norm());
    if (w > 0.0 && h > 0.0) {
      descriptor(0) = w * h;
      descriptor(7) = std::max(w, h) / std::min(w, h);
      descriptor(9) = 2.0 * (w + h) / (w * h);
    }
  }

  const double res = tree.resolution();
  Eigen::Matrix3d cov = pose_position_cov;
  cov += (res * res / 12.0) * Eigen::Matrix3d::Identity();  // voxel quantization

  LandmarkObservation obs;
  obs.position = to_point(position);
  obs.position_covariance = cov;
  obs.class_label = m.class_label;
  obs.descriptor = std::move(descriptor);
  obs.timestamp = timestamp;
  obs.frame_id = m.frame_id;
  obs.geo = geo::local_to_geo(frame, obs.position);
  obs.source_mask_id = m.mask_id;
  return obs;
}

Classification HeuristicClassifier::classify(const SegmentMask& m, CameraKind kind) const {
  MaskMoments mm;
  try {
    mm = mask_moments(m);
  } catch (const PerceptionError&) {
    return {ClassLabel::kOther, 0.0};
  }
  if (mm.count < static_cast<double>(thresholds_.min_pixels)) {
    return {ClassLabel::kOther, 0.0};
  }
  const Eigen::Vector3d c = m.stats.color_mean;
  const double brightness = c.mean();
  const double saturation = c.maxCoeff() - c.minCoeff();
  const double green_margin = c.y() - std::max(c.x(), c.z());
  const double aspect = principal_axes(mm.cov).elongation;

  if (saturation < thresholds_.gray_saturation && brightness > thresholds_.dark_brightness) {
    return {ClassLabel::kConmod, 0.9};
  }
  if (green_margin > thresholds_.green_margin) {
    return {kind == CameraKind::kFront ? ClassLabel::kShrub : ClassLabel::kVegetation, 0.9};
  }
  if (brightness < thresholds_.dark_brightness) {
    if (aspect > thresholds_.crack_aspect) return {ClassLabel::kCrack, 0.85};
    return {ClassLabel::kDip, 0.7};
  }
  if (c.x() > c.y() && c.y() > c.z() && c.x() - c.z() > thresholds_.tan_margin) {
    return {ClassLabel::kLitter, 0.8};
  }
  return {ClassLabel::kOther, 0.0};
}

Classification classify_mask(const SegmentMask& m, CameraKind kind,
                             const MaskClassifier& classifier) {
  try {
    return classifier.classify(m, kind);
  } catch (...) {
    return {ClassLabel::kOther, 0.0};
  }
}

}  // namespace rangemap::perception
