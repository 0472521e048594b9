#include "rangemap/season_map.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include "rangemap/rng.hpp"

namespace rangemap::seasonmap {

namespace {

Eigen::Vector3d pos_vec(const LandmarkObservation& o) {
  return {o.position.east, o.position.north, o.position.up};
}

std::vector<Eigen::Vector3d> kmeanspp_seed(const std::vector<Eigen::Vector3d>& pts, int k, Rng& rng) {
  const std::size_t n = pts.size();
  std::vector<Eigen::Vector3d> centers;
  centers.reserve(k);
  centers.push_back(pts[rng.uniform_index(n)]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (pts[i] - centers.back()).squaredNorm());
      total += d2[i];
    }
    if (total <= 0.0) {
      centers.push_back(pts[rng.uniform_index(n)]);
      continue;
    }
    const double u = rng.uniform01() * total;
    double cum = 0.0;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      cum += d2[i];
      if (cum > u) {
        pick = i;
        break;
      }
    }
    centers.push_back(pts[pick]);
  }
  return centers;
}

/// One Lloyd run. Assignment ties break toward the lowest centroid index;
/// a centroid left without members keeps its previous position.
std::vector<int> lloyd(const std::vector<Eigen::Vector3d>& pts, std::vector<Eigen::Vector3d>& centers,
                       int max_iterations) {
  const std::size_t n = pts.size();
  const std::size_t k = centers.size();
  std::vector<int> assignment(n, -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (pts[i] - centers[0]).squaredNorm();
      for (std::size_t c = 1; c < k; ++c) {
        const double d = (pts[i] - centers[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<Eigen::Vector3d> sums(k, Eigen::Vector3d::Zero());
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[assignment[i]] += pts[i];
      counts[assignment[i]] += 1;
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) centers[c] = sums[c] / counts[c];
    }
  }
  return assignment;
}

double mean_silhouette(const std::vector<Eigen::Vector3d>& pts, const std::vector<int>& assignment,
                       int k) {
  if (k <= 1) return 0.0;
  const std::size_t n = pts.size();
  std::vector<int> counts(k, 0);
  for (int a : assignment) counts[a] += 1;

  double total = 0.0;
  std::vector<double> mean_dist(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(mean_dist.begin(), mean_dist.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      mean_dist[assignment[j]] += (pts[i] - pts[j]).norm();
    }
    const int own = assignment[i];
    if (counts[own] <= 1) continue;  // singleton: s(i) = 0 by convention
    const double a = mean_dist[own] / (counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == own || counts[c] == 0) continue;
      b = std::min(b, mean_dist[c] / counts[c]);
    }
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

LandmarkInstance make_instance(std::vector<LandmarkObservation> members) {
  LandmarkInstance inst;
  inst.class_label = members.front().class_label;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& o : members) mean += pos_vec(o);
  mean /= static_cast<double>(members.size());
  Eigen::Matrix3d spread = Eigen::Matrix3d::Zero();
  Eigen::VectorXd desc = Eigen::VectorXd::Zero(members.front().descriptor.size());
  for (const auto& o : members) {
    const Eigen::Vector3d d = pos_vec(o) - mean;
    spread += d * d.transpose();
    desc += o.descriptor;
  }
  spread /= static_cast<double>(members.size());
  desc /= static_cast<double>(members.size());
  inst.mean_position = {mean.x(), mean.y(), mean.z()};
  inst.position_spread = spread;
  inst.descriptor_mean = desc;
  inst.observations = std::move(members);
  return inst;
}

}  // namespace

std::vector<LandmarkInstance> cluster_observations(std::span<const LandmarkObservation> obs,
                                                   const ClusterParams& params,
                                                   const perception::DescriptorMetric& metric) {
  if (obs.empty()) throw SeasonMapError("cluster_observations: no observations");
  const ClassLabel label = obs.front().class_label;
  for (const auto& o : obs) {
    if (o.class_label != label) {
      throw SeasonMapError("cluster_observations: mixed class labels; partition by class first");
    }
  }
  const std::size_t n = obs.size();
  std::vector<Eigen::Vector3d> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = pos_vec(obs[i]);

  // Degenerate input: everything coincident collapses to one instance.
  bool coincident = true;
  for (std::size_t i = 1; i < n && coincident; ++i) {
    coincident = (pts[i] - pts[0]).norm() <= 1e-12;
  }

  std::vector<int> assignment(n, 0);
  int k = 1;
  if (!coincident) {
    const Rng base(params.rng_seed);
    if (params.k.has_value()) {
      k = std::clamp(*params.k, 1, static_cast<int>(n));
      Rng rng = base.substream("kmeans", static_cast<std::uint64_t>(k));
      auto centers = kmeanspp_seed(pts, k, rng);
      assignment = lloyd(pts, centers, params.max_iterations);
    } else {
      const int k_max = std::min<int>(params.max_silhouette_k, static_cast<int>(n));
      double best_score = -std::numeric_limits<double>::infinity();
      for (int kc = 1; kc <= k_max; ++kc) {
        Rng rng = base.substream("kmeans", static_cast<std::uint64_t>(kc));
        auto centers = kmeanspp_seed(pts, kc, rng);
        auto asg = lloyd(pts, centers, params.max_iterations);
        const double score = mean_silhouette(pts, asg, kc);
        if (score > best_score) {
          best_score = score;
          k = kc;
          assignment = std::move(asg);
        }
      }
    }
  }

  // Gather non-empty clusters.
  std::map<int, std::vector<LandmarkObservation>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[assignment[i]].push_back(obs[i]);
  std::vector<LandmarkInstance> instances;
  instances.reserve(groups.size());
  for (auto& [c, members] : groups) instances.push_back(make_instance(std::move(members)));

  // Merge pass: nearby clusters with consistent appearance are one plant.
  // Coincident centroids merge unconditionally.
  while (instances.size() > 1) {
    double best_pos = std::numeric_limits<double>::infinity();
    double best_desc = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    bool found = false;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      for (std::size_t j = i + 1; j < instances.size(); ++j) {
        const Eigen::Vector3d ci(instances[i].mean_position.east, instances[i].mean_position.north,
                                 instances[i].mean_position.up);
        const Eigen::Vector3d cj(instances[j].mean_position.east, instances[j].mean_position.north,
                                 instances[j].mean_position.up);
        const double dp = (ci - cj).norm();
        if (dp > params.merge_radius) continue;
        const double dd = metric.distance(instances[i].descriptor_mean, instances[j].descriptor_mean);
        if (dp > 1e-12 && dd > params.descriptor_gate) continue;
        if (!found || dp < best_pos || (dp == best_pos && dd < best_desc)) {
          found = true;
          best_pos = dp;
          best_desc = dd;
          bi = i;
          bj = j;
        }
      }
    }
    if (!found) break;
    std::vector<LandmarkObservation> members = std::move(instances[bi].observations);
    members.insert(members.end(), std::make_move_iterator(instances[bj].observations.begin()),
                   std::make_move_iterator(instances[bj].observations.end()));
    instances.erase(instances.begin() + static_cast<std::ptrdiff_t>(bj));
    instances[bi] = make_instance(std::move(members));
  }

  std::sort(instances.begin(), instances.end(), [](const LandmarkInstance& a, const LandmarkInstance& b) {
    return std::tuple(a.mean_position.east, a.mean_position.north, a.mean_position.up,
                      a.observations.size()) <
           std::tuple(b.mean_position.east, b.mean_position.north, b.mean_position.up,
                      b.observations.size());
  });
  for (std::size_t i = 0; i < instances.size(); ++i) {
    instances[i].instance_id = static_cast<std::uint32_t>(i);
  }
  return instances;
}

namespace {

/// Connected-component labels (0..n_components-1, in first-occurrence
/// order) of the observation positions under `radius` linkage.
std::vector<int> component_labels(std::span<const LandmarkObservation> obs, double radius) {
  const std::size_t n = obs.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((pos_vec(obs[i]) - pos_vec(obs[j])).squaredNorm() <= r2) {
        parent[find(i)] = find(j);
      }
    }
  }
  std::vector<int> labels(n, -1);
  std::map<std::size_t, int> roots;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    const auto [it, inserted] = roots.try_emplace(r, static_cast<int>(roots.size()));
    labels[i] = it->second;
  }
  return labels;
}

}  // namespace

int estimate_cluster_count(std::span<const LandmarkObservation> obs, double radius) {
  if (obs.empty()) return 0;
  const auto labels = component_labels(obs, radius);
  return 1 + *std::max_element(labels.begin(), labels.end());
}

SeasonMap build_season_map(const session::Session& s, const MapBuildParams& params,
                           const perception::MaskClassifier& classifier,
                           std::optional<octree::OccupancyOctree>* octree_out) {
  if (s.frames.empty()) throw SeasonMapError("build_season_map: session has no frames");

  SeasonMap map;
  map.session_id = s.session_id;
  map.season_tag = s.season_tag;
  map.season_index = s.season_index;
  map.frame = s.local_frame();

  // Octree from the session scans, sized to the scanned region plus margin.
  std::optional<octree::OccupancyOctree> tree;
  if (!s.scans.empty()) {
    LocalPoint lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                  std::numeric_limits<double>::infinity()};
    LocalPoint hi{-lo.east, -lo.north, -lo.up};
    auto grow = [&](const LocalPoint& p) {
      lo = {std::min(lo.east, p.east), std::min(lo.north, p.north), std::min(lo.up, p.up)};
      hi = {std::max(hi.east, p.east), std::max(hi.north, p.north), std::max(hi.up, p.up)};
    };
    for (const auto& scan : s.scans) {
      for (const auto& p : scan.points) grow(p);
    }
    for (const auto& f : s.frames) grow(f.position);
    const double m = params.octree_margin;
    tree.emplace(params.octree_resolution,
                 octree::Aabb{{lo.east - m, lo.north - m, lo.up - m},
                              {hi.east + m, hi.north + m, hi.up + m}},
                 params.octree);
  }
  if (tree) {
    std::map<std::string, const session::FrameRecord*> by_id;
    for (const auto& f : s.frames) by_id[f.frame_id] = &f;
    for (const auto& scan : s.scans) {
      const auto it = by_id.find(scan.frame_id);
      const LocalPoint origin = it != by_id.end() ? it->second->position : LocalPoint{0, 0, 0};
      tree->insert_scan(origin, scan.points);
    }
  }

  std::map<std::string, std::vector<const perception::SegmentMask*>> masks_by_frame;
  for (const auto& m : s.masks) masks_by_frame[m.frame_id].push_back(&m);
  for (auto& [fid, v] : masks_by_frame) {
    std::sort(v.begin(), v.end(), [](const auto* a, const auto* b) { return a->mask_id < b->mask_id; });
  }

  std::vector<LandmarkObservation> all_obs;
  std::size_t usable_frames = 0;
  std::map<double, TrajectorySample> trajectory;

  for (const auto& frame : s.frames) {
    const session::CameraConfig* cam = s.find_camera(frame.camera_id);
    if (cam == nullptr) {
      ++map.skipped_frames;
      continue;
    }
    perception::CameraPose cam_pose;
    try {
      cam_pose = session::camera_pose_for(frame, *cam);
      cam_pose.validate();
    } catch (const std::exception&) {
      ++map.skipped_frames;
      continue;
    }
    ++usable_frames;
    if (!trajectory.count(frame.timestamp)) {
      trajectory[frame.timestamp] = {frame.timestamp, frame.position, frame.orientation};
    }

    const auto mit = masks_by_frame.find(frame.frame_id);
    if (mit == masks_by_frame.end()) continue;
    for (const perception::SegmentMask* mask_ptr : mit->second) {
      perception::SegmentMask mask = *mask_ptr;
      if (!(params.trust_input_labels && mask.confidence > 0.0)) {
        const auto cls = perception::classify_mask(mask, cam->kind, classifier);
        mask.class_label = cls.label;
        mask.confidence = cls.confidence;
      }
      if (mask.class_label == ClassLabel::kOther) continue;
      try {
        perception::LandmarkObservation obs;
        if (cam->kind == perception::CameraKind::kDown) {
          obs = perception::project_down_facing(mask, cam->intrinsics, cam_pose,
                                                frame.position_cov, s.ground_height, map.frame,
                                                frame.timestamp, params.projection);
        } else {
          if (!tree) throw perception::NoHit("no octree available for front-facing projection");
          obs = perception::project_front_facing(mask, cam->intrinsics, cam_pose,
                                                 frame.position_cov, *tree, map.frame,
                                                 frame.timestamp, params.projection);
        }
        if (obs.descriptor(0) < params.min_observation_area) {
          ++map.skipped_masks;  // border sliver or sub-voxel fragment
        } else {
          all_obs.push_back(std::move(obs));
        }
      } catch (const perception::PerceptionError&) {
        ++map.skipped_masks;
      }
    }
  }

  if (usable_frames == 0) {
    throw SeasonMapError("build_season_map: no usable frames in session " + s.session_id);
  }

  for (const auto& [ts, sample] : trajectory) map.trajectory.push_back(sample);

  std::uint32_t next_id = 0;
  for (const ClassLabel label :
       {ClassLabel::kVegetation, ClassLabel::kLitter, ClassLabel::kCrack, ClassLabel::kDip,
        ClassLabel::kConmod, ClassLabel::kShrub}) {
    std::vector<LandmarkObservation> class_obs;
    for (const auto& o : all_obs) {
      if (o.class_label == label) class_obs.push_back(o);
    }
    if (class_obs.empty()) continue;
    ClusterParams cp = params.cluster;
    if (label == ClassLabel::kShrub) {
      cp.merge_radius = std::max(cp.merge_radius, params.shrub_merge_radius);
      // Front-facing appearance changes with viewpoint, so shrubs cluster
      // on position alone.
      cp.descriptor_gate = std::numeric_limits<double>::infinity();
    }

    // Cluster within spatial linkage components. Components isolate
    // individual plants (or small chains of neighbors); the silhouette
    // sweep inside cluster_observations then resolves chained plants,
    // which a single field-wide k-means run cannot do reliably.
    std::vector<LandmarkInstance> instances;
    if (cp.k.has_value()) {
      instances = cluster_observations(class_obs, cp);
    } else {
      const auto labels = component_labels(class_obs, cp.merge_radius);
      const int n_components = labels.empty() ? 0 : 1 + *std::max_element(labels.begin(), labels.end());
      for (int comp = 0; comp < n_components; ++comp) {
        std::vector<LandmarkObservation> group;
        for (std::size_t i = 0; i < class_obs.size(); ++i) {
          if (labels[i] == comp) group.push_back(class_obs[i]);
        }
        auto part = cluster_observations(group, cp);
        instances.insert(instances.end(), std::make_move_iterator(part.begin()),
                         std::make_move_iterator(part.end()));
      }
      std::sort(instances.begin(), instances.end(),
                [](const LandmarkInstance& a, const LandmarkInstance& b) {
                  return std::tuple(a.mean_position.east, a.mean_position.north,
                                    a.mean_position.up) <
                         std::tuple(b.mean_position.east, b.mean_position.north,
                                    b.mean_position.up);
                });
    }
    for (auto& inst : instances) {
      inst.instance_id = next_id++;
      inst.geo_position = geo::local_to_geo(map.frame, inst.mean_position);
      if (label == ClassLabel::kConmod) {
        const double h_rms =
            std::sqrt(0.5 * (inst.position_spread(0, 0) + inst.position_spread(1, 1)));
        if (h_rms <= params.conmod_spread_limit) {
          map.static_anchors.push_back(std::move(inst));
          continue;
        }
      }
      map.instances.push_back(std::move(inst));
    }
  }

  if (!map.static_anchors.empty()) {
    anchor_to_static(map, params.n_anchors);
  }
  if (octree_out != nullptr) {
    *octree_out = std::move(tree);
  }
  return map;
}

void anchor_to_static(SeasonMap& map, int n_anchors) {
  if (map.static_anchors.empty()) {
    throw NoAnchors("anchor_to_static: map " + map.session_id + " has no ConMod anchors");
  }
  const int n = std::max(1, n_anchors);
  for (auto& inst : map.instances) {
    const Eigen::Vector3d p(inst.mean_position.east, inst.mean_position.north, inst.mean_position.up);
    std::vector<std::pair<double, const LandmarkInstance*>> by_dist;
    by_dist.reserve(map.static_anchors.size());
    for (const auto& a : map.static_anchors) {
      const Eigen::Vector3d q(a.mean_position.east, a.mean_position.north, a.mean_position.up);
      by_dist.emplace_back((p - q).norm(), &a);
    }
    std::sort(by_dist.begin(), by_dist.end(), [](const auto& a, const auto& b) {
      return std::tuple(a.first, a.second->instance_id) < std::tuple(b.first, b.second->instance_id);
    });
    inst.anchor_offsets.clear();
    const int take = std::min<int>(n, static_cast<int>(by_dist.size()));
    for (int i = 0; i < take; ++i) {
      const auto* a = by_dist[i].second;
      const Eigen::Vector3d q(a->mean_position.east, a->mean_position.north, a->mean_position.up);
      inst.anchor_offsets.push_back({a->instance_id, p - q});
    }
    std::sort(inst.anchor_offsets.begin(), inst.anchor_offsets.end(),
              [](const AnchorOffset& a, const AnchorOffset& b) { return a.conmod_id < b.conmod_id; });
  }
}

}  // namespace rangemap::seasonmap

namespace rangemap::session {

const CameraConfig* Session::find_camera(const std::string& camera_id) const {
  for (const auto& c : cameras) {
    if (c.camera_id == camera_id) return &c;
  }
  return nullptr;
}

perception::CameraPose camera_pose_for(const FrameRecord& frame, const CameraConfig& camera) {
  const Eigen::Matrix3d rot = frame.orientation.normalized().toRotationMatrix();
  const Eigen::Vector3d pos =
      Eigen::Vector3d(frame.position.east, frame.position.north, frame.position.up) +
      rot * camera.mount_offset;
  perception::CameraPose pose;
  pose.position = {pos.x(), pos.y(), pos.z()};
  pose.orientation = (frame.orientation * camera.mount_rotation).normalized();
  return pose;
}

}  // namespace rangemap::session
