#include "rangemap/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rangemap/rng.hpp"

namespace rangemap::sim {

namespace {

constexpr double kPlantColorVar = 0.0015;
constexpr double kImageWidth = 800;
constexpr double kImageHeight = 600;
constexpr double kFocal = 600.0;
constexpr double kFrontPitchDeg = 20.0;
constexpr double kFrontMaxRange = 8.0;

const Eigen::Vector3d kSpeciesColor[2] = {{0.21, 0.55, 0.18}, {0.19, 0.52, 0.20}};
const char* kSpeciesName[2] = {"ricegrass", "sagewort"};
const Eigen::Vector3d kShrubColor{0.14, 0.40, 0.13};
const Eigen::Vector3d kConmodColor{0.55, 0.55, 0.58};
const Eigen::Vector3d kCrackColor{0.15, 0.12, 0.10};
const Eigen::Vector3d kDipColor{0.22, 0.18, 0.15};
const Eigen::Vector3d kLitterColor{0.55, 0.42, 0.28};

Eigen::Vector3d vec(const LocalPoint& p) { return {p.east, p.north, p.up}; }
LocalPoint point(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Eigen::Quaterniond yaw_quaternion(double heading_east, double heading_north) {
  // Robot frame: x forward, y left, z up.
  const Eigen::Vector3d fwd(heading_east, heading_north, 0.0);
  const Eigen::Vector3d f = fwd.normalized();
  const Eigen::Vector3d up(0.0, 0.0, 1.0);
  const Eigen::Vector3d left = up.cross(f);
  Eigen::Matrix3d m;
  m.col(0) = f;
  m.col(1) = left;
  m.col(2) = up;
  return Eigen::Quaterniond(m).normalized();
}

Eigen::Quaterniond down_camera_rotation() {
  // Camera z looks straight down, image top points along robot x.
  Eigen::Matrix3d m;
  m.col(0) = Eigen::Vector3d(0.0, -1.0, 0.0);   // image right = robot right
  m.col(1) = Eigen::Vector3d(-1.0, 0.0, 0.0);   // image down = robot backward
  m.col(2) = Eigen::Vector3d(0.0, 0.0, -1.0);   // view direction
  return Eigen::Quaterniond(m).normalized();
}

Eigen::Quaterniond front_camera_rotation(double pitch_down_deg) {
  Eigen::Matrix3d base;
  base.col(0) = Eigen::Vector3d(0.0, -1.0, 0.0);  // image right = robot right
  base.col(1) = Eigen::Vector3d(0.0, 0.0, -1.0);  // image down = world down
  base.col(2) = Eigen::Vector3d(1.0, 0.0, 0.0);   // view = robot forward
  // Pitch the view below the horizon: rotate about the robot's left axis.
  const Eigen::AngleAxisd pitch(pitch_down_deg * M_PI / 180.0, Eigen::Vector3d::UnitY());
  return (Eigen::Quaterniond(pitch) * Eigen::Quaterniond(base)).normalized();
}

perception::CameraIntrinsics default_intrinsics() {
  perception::CameraIntrinsics k;
  k.fx = k.fy = kFocal;
  k.cx = kImageWidth / 2.0;
  k.cy = kImageHeight / 2.0;
  k.width = static_cast<int>(kImageWidth);
  k.height = static_cast<int>(kImageHeight);
  return k;
}

/// Rasterize the pixel-space ellipse { d : d^T S^-1 d <= 1 } around
/// (uc, vc) into row-major runs, pixel-center containment, clipped to the
/// image. Returns empty when nothing is inside.
std::vector<perception::PixelRun> rasterize_ellipse(double uc, double vc, const Eigen::Matrix2d& s_px,
                                                    int width, int height) {
  std::vector<perception::PixelRun> runs;
  const double det = s_px.determinant();
  if (!(det > 1e-12)) return runs;
  const Eigen::Matrix2d q = s_px.inverse();
  const double vmax = std::sqrt(std::max(s_px(1, 1), 0.0));
  const int v_lo = std::max(0, static_cast<int>(std::ceil(vc - vmax)));
  const int v_hi = std::min(height - 1, static_cast<int>(std::floor(vc + vmax)));
  for (int v = v_lo; v <= v_hi; ++v) {
    const double dv = v - vc;
    // q00*du^2 + 2*q01*du*dv + q11*dv^2 = 1
    const double a = q(0, 0);
    const double b = 2.0 * q(0, 1) * dv;
    const double c = q(1, 1) * dv * dv - 1.0;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0 || a <= 0.0) continue;
    const double root = std::sqrt(disc);
    const double du_lo = (-b - root) / (2.0 * a);
    const double du_hi = (-b + root) / (2.0 * a);
    const int u_lo = std::max(0, static_cast<int>(std::ceil(uc + du_lo)));
    const int u_hi = std::min(width - 1, static_cast<int>(std::floor(uc + du_hi)));
    if (u_hi >= u_lo) {
      runs.push_back({v, u_lo, u_hi - u_lo + 1});
    }
  }
  return runs;
}

struct ObjectOnGround {
  LocalPoint position;
  double semi_major;  // meters
  double semi_minor;
  double orientation;  // radians in ENU
  Eigen::Vector3d color;
  ClassLabel label;
  MaskSource source;
  bool subject_to_miss;
};

Eigen::Matrix2d ground_shape(const ObjectOnGround& ob) {
  const Eigen::Rotation2Dd rot(ob.orientation);
  Eigen::Matrix2d d = Eigen::Matrix2d::Zero();
  d(0, 0) = ob.semi_major * ob.semi_major;
  d(1, 1) = ob.semi_minor * ob.semi_minor;
  return rot.toRotationMatrix() * d * rot.toRotationMatrix().transpose();
}

struct Deployment {
  const GroundTruth& world;
  const NoiseModel& noise;
  const TrajectoryParams& traj;
  int season;
  session::Session out;
  std::map<std::uint64_t, MaskSource> sources;
  std::uint64_t next_mask_id = 1;
  std::uint64_t next_frame_number = 0;
  bool emit_front = false;
  std::vector<LocalPoint>* true_positions = nullptr;

  std::string frame_name(int plot, char cam) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "s%d-p%02d-%c%06llu", season, plot, cam,
                  static_cast<unsigned long long>(next_frame_number));
    return buf;
  }
};

std::string season_tag_for(int season) {
  const int year = 2021 + season / 2;
  const char* month = (season % 2 == 0) ? "05" : "11";
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%d-%s", year, month);
  return buf;
}

void add_mask(Deployment& d, const std::string& frame_id, std::vector<perception::PixelRun> runs,
              const Eigen::Vector3d& color, ClassLabel label, const MaskSource& source, Rng& rng) {
  perception::SegmentMask m;
  m.mask_id = d.next_mask_id++;
  m.frame_id = frame_id;
  m.width = static_cast<int>(kImageWidth);
  m.height = static_cast<int>(kImageHeight);
  m.runs = std::move(runs);
  m.class_label = label;
  m.confidence = 1.0;
  for (int i = 0; i < 3; ++i) {
    m.stats.color_mean(i) =
        std::clamp(color(i) + rng.normal(0.0, d.noise.descriptor_noise_sigma), 0.0, 1.0);
    m.stats.color_var(i) = kPlantColorVar * (1.0 + 0.2 * rng.uniform01());
  }
  d.sources[m.mask_id] = source;
  d.out.masks.push_back(std::move(m));
}

/// Render one ground object seen from a down camera at a true pose.
void render_down_object(Deployment& d, const std::string& frame_id,
                        const perception::CameraPose& true_cam, const ObjectOnGround& ob, Rng& rng) {
  const Eigen::Matrix3d rot = true_cam.rotation();
  const Eigen::Vector3d rel = vec(ob.position) - vec(true_cam.position);
  const Eigen::Vector3d p_cam = rot.transpose() * rel;
  if (!(p_cam.z() > 0.1)) return;
  const auto k = default_intrinsics();
  const double uc = k.fx * p_cam.x() / p_cam.z() + k.cx;
  const double vc = k.fy * p_cam.y() / p_cam.z() + k.cy;
  const double px_radius = k.fx * std::max(ob.semi_major, ob.semi_minor) / p_cam.z();
  if (uc < -px_radius || uc > kImageWidth + px_radius || vc < -px_radius ||
      vc > kImageHeight + px_radius) {
    return;
  }
  // Pixel-space shape: affine ground-to-pixel map at constant depth.
  Eigen::Matrix2d m;
  m.row(0) = (k.fx / p_cam.z()) * rot.col(0).head<2>().transpose();
  m.row(1) = (k.fy / p_cam.z()) * rot.col(1).head<2>().transpose();
  const Eigen::Matrix2d s_px = m * ground_shape(ob) * m.transpose();
  auto runs = rasterize_ellipse(uc, vc, s_px, k.width, k.height);
  if (runs.empty()) return;
  if (ob.subject_to_miss && rng.bernoulli(d.noise.detection_miss_rate)) return;
  add_mask(d, frame_id, std::move(runs), ob.color, ob.label, ob.source, rng);
}

void simulate_plot(Deployment& d, const PlotTruth& plot, Rng rng) {
  const WorldConfig& cfg = d.world.config;
  const double size = cfg.plot_size;
  const int n_rows = static_cast<int>(std::ceil(size / d.traj.row_spacing));

  // Objects living on this plot.
  std::vector<ObjectOnGround> objects;
  std::vector<const PlantTruth*> shrubs;
  for (const auto& p : d.world.plants) {
    if (p.plot != plot.index || !p.alive_at(d.season)) continue;
    if (p.class_label == ClassLabel::kShrub) {
      shrubs.push_back(&p);
      continue;
    }
    const double r = p.size_per_season[d.season];
    objects.push_back({p.position, r * std::sqrt(p.elongation), r / std::sqrt(p.elongation),
                       p.orientation, p.color_per_season[d.season], ClassLabel::kVegetation,
                       {SourceKind::kPlant, p.global_id}, true});
  }
  for (const auto& c : d.world.conmods) {
    if (c.plot != plot.index) continue;
    const double r = cfg.conmod_diameter / 2.0;
    objects.push_back({c.position, r, r, 0.0, kConmodColor, ClassLabel::kConmod,
                       {SourceKind::kConmod, c.id}, false});
  }
  for (const auto& ms : d.world.microsites) {
    if (ms.plot != plot.index) continue;
    double a = ms.radius, b = ms.radius, theta = 0.0;
    Eigen::Vector3d color = kLitterColor;
    if (ms.type == ClassLabel::kCrack) {
      a = ms.radius * 3.0;
      b = ms.radius / 3.0;
      theta = std::fmod(static_cast<double>(ms.id) * 0.7, M_PI);
      color = kCrackColor;
    } else if (ms.type == ClassLabel::kDip) {
      color = kDipColor;
    }
    objects.push_back({ms.center, a, b, theta, color, ms.type, {SourceKind::kMicrosite, ms.id}, false});
  }

  // Slowly drifting localization bias, constant within a row.
  Eigen::Vector2d bias = Eigen::Vector2d::Zero();
  if (!d.noise.rtk_mode) {
    bias = {rng.truncated_normal(0.0, d.noise.pose_noise_sigma, d.noise.pose_noise_max),
            rng.truncated_normal(0.0, d.noise.pose_noise_sigma, d.noise.pose_noise_max)};
  }

  const double reported_sigma_h =
      std::sqrt((d.noise.rtk_mode ? 0.0 : d.noise.pose_noise_sigma * d.noise.pose_noise_sigma) +
                d.noise.jitter_sigma * d.noise.jitter_sigma);
  Eigen::Matrix3d reported_cov = Eigen::Matrix3d::Zero();
  reported_cov(0, 0) = reported_cov(1, 1) = reported_sigma_h * reported_sigma_h;
  reported_cov(2, 2) = 1e-4;

  const auto k = default_intrinsics();
  const session::CameraConfig* down = d.out.find_camera("down0");
  const session::CameraConfig* front = d.out.find_camera("front0");

  for (int row = 0; row < n_rows; ++row) {
    if (row > 0 && !d.noise.rtk_mode) {
      bias += Eigen::Vector2d(rng.normal(0.0, d.noise.row_walk_step_sigma),
                              rng.normal(0.0, d.noise.row_walk_step_sigma));
    }
    const double north = plot.origin.north + d.traj.row_spacing * (row + 0.5);
    const bool reversed = (row % 2) == 1;
    const int n_steps = static_cast<int>(std::floor(size / d.traj.frame_step));
    for (int step = 0; step < n_steps; ++step) {
      const double along = d.traj.frame_step * (step + 0.5);
      const double east = plot.origin.east + (reversed ? size - along : along);
      const LocalPoint true_pos{east, north, 0.0};
      const Eigen::Quaterniond orient = yaw_quaternion(reversed ? -1.0 : 1.0, 0.0);

      Eigen::Vector2d err = bias + Eigen::Vector2d(rng.normal(0.0, d.noise.jitter_sigma),
                                                   rng.normal(0.0, d.noise.jitter_sigma));
      const double norm = err.norm();
      if (norm > d.noise.pose_noise_max && norm > 0.0) {
        err *= d.noise.pose_noise_max / norm;
      }
      const LocalPoint noisy_pos{east + err.x(), north + err.y(), 0.0};

      const double timestamp =
          static_cast<double>(d.next_frame_number) * d.traj.frame_step / d.traj.speed;

      // Down-facing capture.
      {
        const std::string fid = d.frame_name(plot.index, 'd');
        ++d.next_frame_number;
        session::FrameRecord fr{fid, timestamp, "down0", noisy_pos, orient, reported_cov};
        d.out.frames.push_back(fr);
        if (d.true_positions != nullptr) d.true_positions->push_back(true_pos);
        session::FrameRecord true_fr = fr;
        true_fr.position = true_pos;
        const perception::CameraPose true_cam = session::camera_pose_for(true_fr, *down);
        for (const auto& ob : objects) {
          render_down_object(d, fid, true_cam, ob, rng);
        }
        if (rng.bernoulli(d.noise.false_positive_rate)) {
          const double uc = rng.uniform(40.0, kImageWidth - 40.0);
          const double vc = rng.uniform(40.0, kImageHeight - 40.0);
          const double r_px = rng.uniform(10.0, 40.0);
          Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
          s(0, 0) = s(1, 1) = r_px * r_px;
          auto runs = rasterize_ellipse(uc, vc, s, k.width, k.height);
          if (!runs.empty()) {
            add_mask(d, fid, std::move(runs), kSpeciesColor[0], ClassLabel::kVegetation,
                     {SourceKind::kFalse, 0}, rng);
          }
        }
      }

      // Front-facing capture plus its point scan.
      if (d.emit_front && front != nullptr) {
        const std::string fid = d.frame_name(plot.index, 'f');
        ++d.next_frame_number;
        session::FrameRecord fr{fid, timestamp, "front0", noisy_pos, orient, reported_cov};
        d.out.frames.push_back(fr);
        if (d.true_positions != nullptr) d.true_positions->push_back(true_pos);
        session::FrameRecord true_fr = fr;
        true_fr.position = true_pos;
        const perception::CameraPose true_cam = session::camera_pose_for(true_fr, *front);
        const Eigen::Matrix3d rot = true_cam.rotation();
        const Eigen::Vector3d err3(err.x(), err.y(), 0.0);

        for (const PlantTruth* shrub : shrubs) {
          const double r = shrub->size_per_season[d.season];
          const Eigen::Vector3d center = vec(shrub->position) + Eigen::Vector3d(0, 0, shrub->height / 2.0);
          const Eigen::Vector3d p_cam = rot.transpose() * (center - vec(true_cam.position));
          if (!(p_cam.z() > 0.5) || p_cam.z() > kFrontMaxRange) continue;
          const double uc = k.fx * p_cam.x() / p_cam.z() + k.cx;
          const double vc = k.fy * p_cam.y() / p_cam.z() + k.cy;
          Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
          const double a_px = k.fx * r / p_cam.z();
          const double b_px = k.fy * (shrub->height / 2.0) / p_cam.z();
          s(0, 0) = a_px * a_px;
          s(1, 1) = b_px * b_px;
          auto runs = rasterize_ellipse(uc, vc, s, k.width, k.height);
          if (runs.empty()) continue;
          if (rng.bernoulli(d.noise.detection_miss_rate)) continue;
          add_mask(d, fid, std::move(runs), kShrubColor, ClassLabel::kShrub,
                   {SourceKind::kPlant, shrub->global_id}, rng);
        }

        // Lidar-like points, expressed in the estimated frame: measured
        // relative geometry rides on the noisy pose. Ground returns blocked
        // by a shrub are dropped, as a real scanner would not see them.
        session::PointScan scan;
        scan.frame_id = fid;
        const Eigen::Vector3d fwd = orient.toRotationMatrix().col(0);
        const Eigen::Vector3d left = orient.toRotationMatrix().col(1);
        const Eigen::Vector3d sensor = vec(true_cam.position);
        const auto occluded = [&](const Eigen::Vector3d& target) {
          for (const PlantTruth* shrub : shrubs) {
            const double r_eff =
                std::max(shrub->size_per_season[d.season], shrub->height / 2.0);
            const Eigen::Vector3d center =
                vec(shrub->position) + Eigen::Vector3d(0, 0, shrub->height / 2.0);
            const Eigen::Vector3d seg = target - sensor;
            const double len = seg.norm();
            if (len < 1e-9) continue;
            const double t = std::clamp((center - sensor).dot(seg) / (len * len), 0.0, 1.0);
            if ((sensor + t * seg - center).norm() < 0.9 * r_eff &&
                (target - center).norm() > r_eff) {
              return true;
            }
          }
          return false;
        };
        for (int i = 0; i < 30; ++i) {
          const double ahead = rng.uniform(1.0, 6.0);
          const double lat = rng.uniform(-2.0, 2.0);
          const Eigen::Vector3d g = vec(true_pos) + fwd * ahead + left * lat;
          const Eigen::Vector3d on_ground(g.x(), g.y(), rng.normal(0.0, 0.01));
          if (occluded(on_ground)) continue;
          scan.points.push_back(point(on_ground + err3));
        }
        for (const PlantTruth* shrub : shrubs) {
          const double r = shrub->size_per_season[d.season];
          const Eigen::Vector3d center = vec(shrub->position) + Eigen::Vector3d(0, 0, shrub->height / 2.0);
          if ((center - vec(true_cam.position)).norm() > kFrontMaxRange) continue;
          const Eigen::Vector3d toward = (vec(true_cam.position) - center).normalized();
          for (int i = 0; i < 60; ++i) {
            Eigen::Vector3d dir(rng.normal01(), rng.normal01(), rng.normal01());
            if (dir.norm() < 1e-9) continue;
            dir.normalize();
            if (dir.dot(toward) < 0.1) {
              dir = -dir;  // keep the camera-facing hemisphere
            }
            const Eigen::Vector3d surf =
                center + Eigen::Vector3d(dir.x() * r, dir.y() * r, dir.z() * shrub->height / 2.0);
            scan.points.push_back(point(surf + err3 + Eigen::Vector3d::Constant(rng.normal(0.0, 0.005))));
          }
        }
        if (!scan.points.empty()) {
          d.out.scans.push_back(std::move(scan));
        }
      }
    }
  }
}

}  // namespace

const char* to_string(Treatment t) {
  switch (t) {
    case Treatment::kDrillSeeded: return "drill_seeded";
    case Treatment::kConmod: return "conmod";
    case Treatment::kControl: return "control";
  }
  return "control";
}

const char* to_string(SourceKind k) {
  switch (k) {
    case SourceKind::kPlant: return "plant";
    case SourceKind::kConmod: return "conmod";
    case SourceKind::kMicrosite: return "microsite";
    case SourceKind::kFalse: return "false";
  }
  return "false";
}

void WorldConfig::validate() const {
  if (plots_drill < 0 || plots_conmod < 0 || plots_control < 0 || plot_count() <= 0) {
    throw InvalidConfig("world: plot counts must be non-negative and sum to > 0");
  }
  if (!(plot_size > 0.0) || !(plot_gap >= 0.0)) throw InvalidConfig("world: plot geometry invalid");
  if (!(conmod_diameter > 0.0) || !(conmod_spacing > conmod_diameter)) {
    throw InvalidConfig("world: ConMod geometry invalid");
  }
  if (!(microsite_radius_min > 0.0) || microsite_radius_max < microsite_radius_min) {
    throw InvalidConfig("world: microsite radius range invalid");
  }
  if (plant_density < 0.0 || shrub_density < 0.0 || recruitment_rate < 0.0) {
    throw InvalidConfig("world: densities must be >= 0");
  }
  if (!(plant_spacing_min >= 0.0)) throw InvalidConfig("world: plant spacing must be >= 0");
  if (hazard_rate < 0.0) throw InvalidConfig("world: hazard rate must be >= 0");
  if (!(growth.multiplier_min > 0.0) || growth.multiplier_max < growth.multiplier_min) {
    throw InvalidConfig("world: growth multiplier range invalid");
  }
  if (season_count < 1) throw InvalidConfig("world: need at least one season");
  origin.validate();
}

void NoiseModel::validate() const {
  if (pose_noise_sigma < 0.0 || row_walk_step_sigma < 0.0 || jitter_sigma < 0.0) {
    throw InvalidConfig("noise: sigmas must be >= 0");
  }
  if (pose_noise_max < pose_noise_sigma) {
    throw InvalidConfig("noise: pose_noise_max must be >= pose_noise_sigma");
  }
  if (detection_miss_rate < 0.0 || detection_miss_rate > 1.0 || false_positive_rate < 0.0 ||
      false_positive_rate > 1.0) {
    throw InvalidConfig("noise: rates must lie in [0, 1]");
  }
  if (descriptor_noise_sigma < 0.0) throw InvalidConfig("noise: descriptor noise must be >= 0");
}

Eigen::VectorXd GroundTruth::plant_descriptor(const PlantTruth& p, int season) const {
  const double r = p.size_per_season[season];
  const double a = r * std::sqrt(p.elongation);
  const double b = r / std::sqrt(p.elongation);
  const double area = M_PI * a * b;
  const double perimeter = M_PI * (3.0 * (a + b) - std::sqrt((3.0 * a + b) * (a + 3.0 * b)));
  Eigen::VectorXd d(perception::kDescriptorSize);
  d(0) = area;
  d.segment<3>(1) = p.color_per_season[season];
  d.segment<3>(4) = Eigen::Vector3d::Constant(kPlantColorVar);
  d(7) = p.elongation;
  d(8) = p.orientation;
  d(9) = area > 0.0 ? perimeter / area : 0.0;
  return d;
}

GroundTruth generate_world(const WorldConfig& cfg) {
  cfg.validate();
  GroundTruth world;
  world.config = cfg;
  const Rng master(cfg.rng_seed);

  const int columns = 6;
  for (int i = 0; i < cfg.plot_count(); ++i) {
    PlotTruth plot;
    plot.index = i;
    plot.treatment = i < cfg.plots_drill                     ? Treatment::kDrillSeeded
                     : i < cfg.plots_drill + cfg.plots_conmod ? Treatment::kConmod
                                                              : Treatment::kControl;
    plot.origin = {(i % columns) * (cfg.plot_size + cfg.plot_gap),
                   (i / columns) * (cfg.plot_size + cfg.plot_gap), 0.0};
    world.plots.push_back(plot);
  }

  std::uint64_t next_conmod = 1;
  for (const auto& plot : world.plots) {
    if (plot.treatment != Treatment::kConmod) continue;
    const double inset = 1.0;
    for (double y = inset; y <= cfg.plot_size - inset + 1e-9; y += cfg.conmod_spacing) {
      for (double x = inset; x <= cfg.plot_size - inset + 1e-9; x += cfg.conmod_spacing) {
        world.conmods.push_back(
            {next_conmod++, plot.index, {plot.origin.east + x, plot.origin.north + y, 0.0}});
      }
    }
  }

  std::uint64_t next_plant = 1;
  std::uint64_t next_microsite = 1;
  const double area = cfg.plot_size * cfg.plot_size;
  for (const auto& plot : world.plots) {
    Rng rng = master.substream("plants", static_cast<std::uint64_t>(plot.index));
    std::vector<Eigen::Vector2d> accepted;
    auto try_place = [&](double margin, double spacing) -> std::optional<LocalPoint> {
      for (int attempt = 0; attempt < 80; ++attempt) {
        const Eigen::Vector2d q(rng.uniform(margin, cfg.plot_size - margin),
                                rng.uniform(margin, cfg.plot_size - margin));
        bool ok = true;
        for (const auto& other : accepted) {
          if ((q - other).norm() < spacing) {
            ok = false;
            break;
          }
        }
        if (ok) {
          for (const auto& c : world.conmods) {
            if (c.plot != plot.index) continue;
            const Eigen::Vector2d cc(c.position.east - plot.origin.east,
                                     c.position.north - plot.origin.north);
            if ((q - cc).norm() < cfg.conmod_diameter / 2.0 + 0.15) {
              ok = false;
              break;
            }
          }
        }
        if (ok) {
          accepted.push_back(q);
          return LocalPoint{plot.origin.east + q.x(), plot.origin.north + q.y(), 0.0};
        }
      }
      return std::nullopt;
    };

    auto make_plant = [&](const LocalPoint& pos, int birth, ClassLabel label) {
      PlantTruth p;
      p.global_id = next_plant++;
      p.plot = plot.index;
      p.position = pos;
      p.class_label = label;
      const std::size_t sp = rng.uniform_index(2);
      p.species = label == ClassLabel::kShrub ? "shrub" : kSpeciesName[sp];
      p.birth_season = birth;
      if (cfg.hazard_rate > 0.0) {
        const double u = rng.uniform01();
        p.death_season = birth + 1 + static_cast<int>(std::floor(-std::log(1.0 - u) / cfg.hazard_rate));
      } else {
        p.death_season = -1;
      }
      p.elongation = rng.uniform(1.0, 1.8);
      p.orientation = rng.uniform(0.0, M_PI);
      double size = label == ClassLabel::kShrub ? rng.uniform(0.30, 0.60) : rng.uniform(0.04, 0.10);
      if (label == ClassLabel::kShrub) p.height = rng.uniform(0.4, 0.9);
      const Eigen::Vector3d base = label == ClassLabel::kShrub ? kShrubColor : kSpeciesColor[sp];
      Eigen::Vector3d tint(rng.normal(0.0, 0.01), rng.normal(0.0, 0.01), rng.normal(0.0, 0.01));
      p.size_per_season.assign(cfg.season_count, 0.0);
      p.color_per_season.assign(cfg.season_count, Eigen::Vector3d::Zero());
      for (int s = 0; s < cfg.season_count; ++s) {
        if (p.alive_at(s)) {
          p.size_per_season[s] = size;
          size *= rng.uniform(cfg.growth.multiplier_min, cfg.growth.multiplier_max);
          p.color_per_season[s] =
              base + tint + Eigen::Vector3d(rng.normal(0.0, 0.004), rng.normal(0.0, 0.004),
                                            rng.normal(0.0, 0.004));
        } else {
          // consume the same stream length so placement stays comparable
          size *= rng.uniform(cfg.growth.multiplier_min, cfg.growth.multiplier_max);
          rng.normal(0.0, 1.0);
          rng.normal(0.0, 1.0);
          rng.normal(0.0, 1.0);
        }
      }
      world.plants.push_back(std::move(p));
    };

    // Shrubs first: they are rare, large, and need wide separation so
    // front-surface observations from different shrubs stay distinct.
    const int n_shrubs = static_cast<int>(std::llround(cfg.shrub_density * area));
    for (int i = 0; i < n_shrubs; ++i) {
      if (const auto pos = try_place(0.8, 3.0)) make_plant(*pos, 0, ClassLabel::kShrub);
    }
    const int n_plants = static_cast<int>(std::llround(cfg.plant_density * area));
    for (int i = 0; i < n_plants; ++i) {
      if (const auto pos = try_place(0.15, cfg.plant_spacing_min)) {
        make_plant(*pos, 0, ClassLabel::kVegetation);
      }
    }
    for (int s = 1; s < cfg.season_count; ++s) {
      const int recruits = static_cast<int>(std::llround(cfg.recruitment_rate * area));
      for (int i = 0; i < recruits; ++i) {
        if (const auto pos = try_place(0.15, cfg.plant_spacing_min)) {
          make_plant(*pos, s, ClassLabel::kVegetation);
        }
      }
    }

    Rng ms_rng = master.substream("microsites", static_cast<std::uint64_t>(plot.index));
    for (int i = 0; i < cfg.microsites_per_plot; ++i) {
      MicrositeTruth ms;
      ms.id = next_microsite++;
      ms.plot = plot.index;
      const std::size_t type = ms_rng.uniform_index(3);
      ms.type = type == 0 ? ClassLabel::kCrack : type == 1 ? ClassLabel::kDip : ClassLabel::kLitter;
      ms.center = {plot.origin.east + ms_rng.uniform(0.3, cfg.plot_size - 0.3),
                   plot.origin.north + ms_rng.uniform(0.3, cfg.plot_size - 0.3), 0.0};
      ms.radius = ms_rng.uniform(cfg.microsite_radius_min, cfg.microsite_radius_max);
      world.microsites.push_back(ms);
    }
  }
  return world;
}

session::Session simulate_deployment(GroundTruth& world, int season, const NoiseModel& noise,
                                     const TrajectoryParams& trajectory,
                                     std::vector<LocalPoint>* true_positions_out) {
  noise.validate();
  if (season < 0 || season >= world.config.season_count) {
    throw SimulatorError("simulate_deployment: season " + std::to_string(season) +
                         " outside the simulated horizon");
  }
  if (true_positions_out != nullptr) true_positions_out->clear();

  Deployment d{world, noise, trajectory, season, {}, {}, 1, 0, false, true_positions_out};
  char sid[64];
  std::snprintf(sid, sizeof(sid), "sim%llu-s%d", static_cast<unsigned long long>(world.config.rng_seed),
                season);
  d.out.session_id = sid;
  d.out.season_tag = season_tag_for(season);
  d.out.season_index = season;
  d.out.origin = world.config.origin;
  d.out.ground_height = 0.0;

  session::CameraConfig down;
  down.camera_id = "down0";
  down.kind = perception::CameraKind::kDown;
  down.intrinsics = default_intrinsics();
  down.mount_offset = Eigen::Vector3d(0.3, 0.0, trajectory.camera_height);
  down.mount_rotation = down_camera_rotation();
  d.out.cameras.push_back(down);

  for (const auto& p : world.plants) {
    if (p.class_label == ClassLabel::kShrub && p.alive_at(season)) {
      d.emit_front = true;
      break;
    }
  }
  if (d.emit_front) {
    session::CameraConfig front;
    front.camera_id = "front0";
    front.kind = perception::CameraKind::kFront;
    front.intrinsics = default_intrinsics();
    front.mount_offset = Eigen::Vector3d(0.4, 0.0, trajectory.camera_height - 0.2);
    front.mount_rotation = front_camera_rotation(kFrontPitchDeg);
    d.out.cameras.push_back(front);
  }

  const Rng master(world.config.rng_seed);
  const Rng deploy = master.substream("deploy", static_cast<std::uint64_t>(season));
  for (const auto& plot : world.plots) {
    simulate_plot(d, plot, deploy.substream("plot", static_cast<std::uint64_t>(plot.index)));
  }

  world.mask_sources[d.out.session_id] = std::move(d.sources);
  return d.out;
}

EvalResult evaluate_association(const std::vector<assoc::CrossSeasonMatch>& matches,
                                const GroundTruth& truth, const seasonmap::SeasonMap& map_a,
                                const seasonmap::SeasonMap& map_b) {
  const auto sources_a = truth.mask_sources.find(map_a.session_id);
  const auto sources_b = truth.mask_sources.find(map_b.session_id);
  if (sources_a == truth.mask_sources.end() || sources_b == truth.mask_sources.end()) {
    throw UnknownInstance("evaluate_association: sessions not found in ground truth (" +
                          map_a.session_id + ", " + map_b.session_id + ")");
  }

  auto majority_source = [](const seasonmap::SeasonMap& map,
                            const std::map<std::uint64_t, MaskSource>& sources,
                            std::uint32_t instance_id) -> MaskSource {
    const seasonmap::LandmarkInstance* inst = nullptr;
    for (const auto& i : map.instances) {
      if (i.instance_id == instance_id) inst = &i;
    }
    if (inst == nullptr) {
      throw UnknownInstance("evaluate_association: instance " + std::to_string(instance_id) +
                            " not in map " + map.session_id);
    }
    std::map<MaskSource, int> votes;
    for (const auto& obs : inst->observations) {
      const auto it = sources.find(obs.source_mask_id);
      if (it == sources.end()) {
        throw UnknownInstance("evaluate_association: mask " + std::to_string(obs.source_mask_id) +
                              " has no ground-truth source");
      }
      votes[it->second] += 1;
    }
    if (votes.empty()) {
      throw UnknownInstance("evaluate_association: instance " + std::to_string(instance_id) +
                            " has no observations");
    }
    MaskSource best = votes.begin()->first;
    int best_votes = votes.begin()->second;
    for (const auto& [src, n] : votes) {
      if (n > best_votes) {
        best = src;
        best_votes = n;
      }
    }
    return best;
  };

  // Plants alive and observed in both seasons.
  std::set<std::uint64_t> observed_a, observed_b;
  for (const auto& [mid, src] : sources_a->second) {
    if (src.kind == SourceKind::kPlant) observed_a.insert(src.id);
  }
  for (const auto& [mid, src] : sources_b->second) {
    if (src.kind == SourceKind::kPlant) observed_b.insert(src.id);
  }
  std::set<std::uint64_t> persisting;
  for (const auto& p : truth.plants) {
    if (p.alive_at(map_a.season_index) && p.alive_at(map_b.season_index) &&
        observed_a.count(p.global_id) && observed_b.count(p.global_id)) {
      persisting.insert(p.global_id);
    }
  }

  EvalResult res;
  std::set<std::uint64_t> matched_plants;
  for (const auto& m : matches) {
    const MaskSource src_a = majority_source(map_a, sources_a->second, m.instance_a_id);
    const MaskSource src_b = majority_source(map_b, sources_b->second, m.instance_b_id);
    if (src_a.kind == SourceKind::kPlant && src_a == src_b) {
      ++res.correct_matches;
      matched_plants.insert(src_a.id);
    } else {
      ++res.wrong_matches;
    }
  }

  res.persisting_observed = static_cast<int>(persisting.size());
  int recalled = 0;
  for (const auto id : matched_plants) {
    if (persisting.count(id)) ++recalled;
  }
  res.missed = res.persisting_observed - recalled;

  const int total_matches = res.correct_matches + res.wrong_matches;
  if (total_matches == 0) {
    res.precision = 1.0;  // convention for an empty match set, flagged
    res.precision_defaulted = true;
  } else {
    res.precision = static_cast<double>(res.correct_matches) / total_matches;
  }
  res.recall = res.persisting_observed > 0
                   ? static_cast<double>(recalled) / res.persisting_observed
                   : 1.0;
  res.f1 = (res.precision + res.recall) > 0.0
               ? 2.0 * res.precision * res.recall / (res.precision + res.recall)
               : 0.0;
  return res;
}

assoc::FeatureTransition suggested_feature_transition(const GroundTruth& world) {
  const int n = perception::kDescriptorSize;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(n);
  int count = 0;
  for (const auto& p : world.plants) {
    if (!perception::is_semi_static(p.class_label)) continue;
    for (int s = 0; s + 1 < world.config.season_count; ++s) {
      if (!p.alive_at(s) || !p.alive_at(s + 1)) continue;
      Eigen::VectorXd delta = world.plant_descriptor(p, s + 1) - world.plant_descriptor(p, s);
      delta(8) = 0.0;  // orientation is static by construction
      sum += delta;
      sum_sq += delta.cwiseProduct(delta);
      ++count;
    }
  }
  assoc::FeatureTransition f;
  if (count == 0) {
    f.drift = Eigen::VectorXd::Zero(n);
    f.drift_variance = Eigen::VectorXd::Constant(n, 1e-6);
    return f;
  }
  f.drift = sum / count;
  f.drift_variance =
      (sum_sq / count - f.drift.cwiseProduct(f.drift)).cwiseMax(0.0) +
      Eigen::VectorXd::Constant(n, 1e-6);
  return f;
}

}  // namespace rangemap::sim
