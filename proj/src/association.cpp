#include "rangemap/association.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace rangemap::assoc {

namespace {

Eigen::Vector2d horizontal(const geo::LocalPoint& p) { return {p.east, p.north}; }

Eigen::Matrix2d horizontal_block(const Eigen::Matrix3d& m) { return m.topLeftCorner<2, 2>(); }

double mahalanobis_sq(const Eigen::Vector2d& delta, Eigen::Matrix2d sigma) {
  const double det = sigma.determinant();
  if (!(det > 1e-18)) {
    sigma += 1e-9 * Eigen::Matrix2d::Identity();
  }
  return delta.dot(sigma.inverse() * delta);
}

Eigen::Matrix2d pair_covariance(const GateParams& g, const LandmarkInstance& a,
                                const LandmarkInstance& b) {
  return g.localization_covariance + horizontal_block(a.position_spread) +
         horizontal_block(b.position_spread);
}

struct CandidatePair {
  double m2;
  double desc_dist;
  std::size_t ia;
  std::size_t ib;
};

/// ConMod anchors of the two maps paired greedily by proximity.
///
/// The two seasons can disagree by the full localization bias, and the bias
/// differs between plots, so pairing works per spatial group of anchors
/// (plots are separated by gaps much larger than the ConMod pitch). Within
/// a group the cross-season displacement is estimated by an inlier-count
/// consensus over candidate shifts; a regular ConMod grid makes a plain
/// nearest-neighbor vote alias to a lattice-shifted alignment, while the
/// finite grid edge makes the true shift win the inlier count.
std::vector<std::pair<std::uint32_t, std::uint32_t>> pair_anchors(const SeasonMap& a,
                                                                  const SeasonMap& b,
                                                                  double radius) {
  if (a.static_anchors.empty() || b.static_anchors.empty()) return {};
  const double group_linkage = 3.5;

  // Connected components of a's anchors under group_linkage.
  const std::size_t n = a.static_anchors.size();
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((horizontal(a.static_anchors[i].mean_position) -
           horizontal(a.static_anchors[j].mean_position))
              .norm() <= group_linkage) {
        parent[find(i)] = find(j);
      }
    }
  }
  std::map<std::size_t, std::vector<const LandmarkInstance*>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(&a.static_anchors[i]);

  struct Entry {
    double d;
    std::uint32_t ida;
    std::uint32_t idb;
  };
  // Stage one: a field-wide consensus translation, so that a rigid frame
  // offset between the seasons (however large) cannot break the pairing.
  // Candidate shifts come from each a-anchor's nearest few b-anchors.
  const auto consensus = [&](const std::vector<const LandmarkInstance*>& from,
                             const Eigen::Vector2d& center,
                             double span) -> Eigen::Vector2d {
    Eigen::Vector2d best_shift = center;
    int best_inliers = -1;
    double best_dev = std::numeric_limits<double>::infinity();
    for (const auto* ca : from) {
      for (const auto& cb : b.static_anchors) {
        const Eigen::Vector2d shift =
            horizontal(cb.mean_position) - horizontal(ca->mean_position);
        if ((shift - center).norm() > span) continue;
        int inliers = 0;
        for (const auto* pa : from) {
          double best = radius;
          for (const auto& pb : b.static_anchors) {
            const double d =
                (horizontal(pb.mean_position) - horizontal(pa->mean_position) - shift).norm();
            best = std::min(best, d);
          }
          if (best < radius) ++inliers;
        }
        const double dev = (shift - center).norm();
        if (inliers > best_inliers ||
            (inliers == best_inliers &&
             (dev < best_dev - 1e-12 ||
              (std::abs(dev - best_dev) <= 1e-12 &&
               std::tuple(shift.x(), shift.y()) < std::tuple(best_shift.x(), best_shift.y()))))) {
          best_inliers = inliers;
          best_shift = shift;
          best_dev = dev;
        }
      }
    }
    return best_shift;
  };

  std::vector<const LandmarkInstance*> all_a;
  for (const auto& ca : a.static_anchors) all_a.push_back(&ca);
  const Eigen::Vector2d global_shift =
      consensus(all_a, Eigen::Vector2d::Zero(), std::numeric_limits<double>::infinity());

  // Stage two: per spatial group (per plot), refine around the global shift;
  // the localization bias differs between plots by a bounded amount.
  std::vector<Entry> all;
  for (const auto& [root, group] : groups) {
    const Eigen::Vector2d shift = consensus(group, global_shift, 3.0);
    for (const auto* ca : group) {
      for (const auto& cb : b.static_anchors) {
        const double d =
            (horizontal(cb.mean_position) - horizontal(ca->mean_position) - shift).norm();
        if (d <= radius) all.push_back({d, ca->instance_id, cb.instance_id});
      }
    }
  }

  std::sort(all.begin(), all.end(), [](const Entry& x, const Entry& y) {
    return std::tuple(x.d, x.ida, x.idb) < std::tuple(y.d, y.ida, y.idb);
  });
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  std::map<std::uint32_t, bool> used_a, used_b;
  for (const Entry& e : all) {
    if (used_a[e.ida] || used_b[e.idb]) continue;
    used_a[e.ida] = used_b[e.idb] = true;
    pairs.emplace_back(e.ida, e.idb);
  }
  return pairs;
}

}  // namespace

const char* to_string(MatchMethod m) {
  return m == MatchMethod::kLocationOnly ? "location-only" : "anchor-relative";
}

std::optional<MatchMethod> match_method_from_string(const std::string& s) {
  if (s == "location-only" || s == "location_only") return MatchMethod::kLocationOnly;
  if (s == "anchor-relative" || s == "anchor_relative") return MatchMethod::kAnchorRelative;
  return std::nullopt;
}

FeaturePrediction predict_features(const Eigen::VectorXd& descriptor,
                                   const Eigen::VectorXd& variance, double dt_seasons,
                                   const FeatureTransition& f) {
  if (!(dt_seasons >= 0.0)) throw AssociationError("predict_features: dt must be >= 0");
  FeaturePrediction out;
  out.descriptor = descriptor + dt_seasons * f.drift;
  out.variance = variance + dt_seasons * f.drift_variance;
  return out;
}

Eigen::VectorXd DescriptorGate::default_base_variance() {
  const Eigen::VectorXd s = perception::DescriptorMetric::defaults().scale;
  return s.array().square();
}

double DescriptorGate::distance(const Eigen::VectorXd& desc_a, const Eigen::VectorXd& desc_b,
                                double dt_seasons) const {
  Eigen::VectorXd center = desc_a;
  Eigen::VectorXd var = base_variance;
  if (transition.has_value()) {
    const FeaturePrediction pred =
        predict_features(desc_a, Eigen::VectorXd::Zero(desc_a.size()), dt_seasons, *transition);
    center = pred.descriptor;
    var = base_variance + pred.variance;
  }
  const int n = static_cast<int>(center.size());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = center(i) - desc_b(i);
    if (i == 8) {  // orientation lives on a circle of period pi
      d = std::fmod(std::abs(d), M_PI);
      d = std::min(d, M_PI - d);
    }
    acc += d * d / std::max(var(i), 1e-12);
  }
  return std::sqrt(acc / n);
}

std::vector<const LandmarkInstance*> gate_candidates(const LandmarkInstance& inst,
                                                     const SeasonMap& other, const GateParams& g) {
  std::vector<const LandmarkInstance*> out;
  for (const auto& cand : other.instances) {
    if (cand.class_label != inst.class_label) continue;
    const Eigen::Vector2d delta = horizontal(inst.mean_position) - horizontal(cand.mean_position);
    if (mahalanobis_sq(delta, pair_covariance(g, inst, cand)) <= g.chi2_threshold) {
      out.push_back(&cand);
    }
  }
  return out;
}

std::vector<CrossSeasonMatch> match_cross_season(const SeasonMap& map_a, const SeasonMap& map_b,
                                                 const MatchParams& params) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> anchor_pairs;
  if (params.method == MatchMethod::kAnchorRelative) {
    anchor_pairs = pair_anchors(map_a, map_b, params.anchor_match_radius);
    if (anchor_pairs.size() < 2) {
      throw InsufficientAnchors("anchor-relative matching needs >= 2 proximity-matched ConMods, got " +
                                std::to_string(anchor_pairs.size()));
    }
  }

  std::vector<CandidatePair> candidates;
  for (std::size_t ia = 0; ia < map_a.instances.size(); ++ia) {
    const auto& a = map_a.instances[ia];
    for (std::size_t ib = 0; ib < map_b.instances.size(); ++ib) {
      const auto& b = map_b.instances[ib];
      if (a.class_label != b.class_label) continue;

      double m2 = std::numeric_limits<double>::infinity();
      if (params.method == MatchMethod::kLocationOnly) {
        const Eigen::Vector2d delta = horizontal(a.mean_position) - horizontal(b.mean_position);
        m2 = mahalanobis_sq(delta, pair_covariance(params.gate, a, b));
      } else {
        // Average difference of the offset vectors over anchors both
        // instances reference; offsets are frame-free.
        Eigen::Vector2d delta = Eigen::Vector2d::Zero();
        int common = 0;
        for (const auto& [ida, idb] : anchor_pairs) {
          const seasonmap::AnchorOffset* oa = nullptr;
          const seasonmap::AnchorOffset* ob = nullptr;
          for (const auto& o : a.anchor_offsets) {
            if (o.conmod_id == ida) oa = &o;
          }
          for (const auto& o : b.anchor_offsets) {
            if (o.conmod_id == idb) ob = &o;
          }
          if (oa != nullptr && ob != nullptr) {
            delta += (oa->offset - ob->offset).head<2>();
            ++common;
          }
        }
        if (common < std::max(1, params.min_common_anchors)) continue;
        delta /= static_cast<double>(common);
        m2 = mahalanobis_sq(delta, pair_covariance(params.gate, a, b));
      }
      if (!(m2 <= params.gate.chi2_threshold)) continue;

      double desc_dist = 0.0;
      if (a.descriptor_mean.size() == b.descriptor_mean.size() && a.descriptor_mean.size() > 0) {
        if (params.descriptor_gate.has_value()) {
          desc_dist =
              params.descriptor_gate->distance(a.descriptor_mean, b.descriptor_mean, params.dt_seasons);
          if (desc_dist > params.descriptor_gate->threshold) continue;
        } else {
          desc_dist = perception::DescriptorMetric::defaults().distance(a.descriptor_mean,
                                                                        b.descriptor_mean);
        }
      }
      candidates.push_back({m2, desc_dist, ia, ib});
    }
  }

  std::sort(candidates.begin(), candidates.end(), [&](const CandidatePair& x, const CandidatePair& y) {
    return std::tuple(x.m2, x.desc_dist, map_a.instances[x.ia].instance_id,
                      map_b.instances[x.ib].instance_id) <
           std::tuple(y.m2, y.desc_dist, map_a.instances[y.ia].instance_id,
                      map_b.instances[y.ib].instance_id);
  });

  std::vector<bool> used_a(map_a.instances.size(), false), used_b(map_b.instances.size(), false);
  std::vector<CrossSeasonMatch> matches;
  for (const CandidatePair& c : candidates) {
    if (used_a[c.ia] || used_b[c.ib]) continue;
    used_a[c.ia] = used_b[c.ib] = true;
    matches.push_back({map_a.instances[c.ia].instance_id, map_b.instances[c.ib].instance_id,
                       std::sqrt(c.m2), c.desc_dist, params.method});
  }
  return matches;
}

namespace {

const LandmarkInstance* find_instance(const SeasonMap& m, std::uint32_t id) {
  for (const auto& i : m.instances) {
    if (i.instance_id == id) return &i;
  }
  for (const auto& i : m.static_anchors) {
    if (i.instance_id == id) return &i;
  }
  return nullptr;
}

/// Center of the camera's ground footprint: the optical-axis ground
/// intersection when it exists, else the camera position.
Eigen::Vector2d footprint_center(const session::FrameRecord& frame,
                                 const session::CameraConfig& camera, double ground_height) {
  const perception::CameraPose pose = session::camera_pose_for(frame, camera);
  const Eigen::Vector3d axis = pose.rotation().col(2);
  const Eigen::Vector3d origin(pose.position.east, pose.position.north, pose.position.up);
  if (axis.z() < 0.0) {
    const double t = (ground_height - origin.z()) / axis.z();
    if (t > 0.0 && std::isfinite(t)) {
      return (origin + t * axis).head<2>();
    }
  }
  return origin.head<2>();
}

void collect_context(const SeasonMap& map, const session::Session& sess, std::uint32_t instance_id,
                     double radius, std::vector<std::string>& frames,
                     std::vector<std::uint32_t>& nearby) {
  const LandmarkInstance* inst = find_instance(map, instance_id);
  if (inst == nullptr) {
    throw AssociationError("gather_context: instance " + std::to_string(instance_id) +
                           " not in map " + map.session_id);
  }
  const Eigen::Vector2d center = horizontal(inst->mean_position);
  for (const auto& frame : sess.frames) {
    const session::CameraConfig* cam = sess.find_camera(frame.camera_id);
    if (cam == nullptr) continue;
    if ((footprint_center(frame, *cam, sess.ground_height) - center).norm() <= radius) {
      frames.push_back(frame.frame_id);
    }
  }
  auto scan = [&](const std::vector<LandmarkInstance>& list) {
    for (const auto& i : list) {
      if (i.instance_id == instance_id) continue;
      if ((horizontal(i.mean_position) - center).norm() <= radius) {
        nearby.push_back(i.instance_id);
      }
    }
  };
  scan(map.instances);
  scan(map.static_anchors);
}

}  // namespace

ContextResult gather_context(const CrossSeasonMatch& match, const SeasonMap& map_a,
                             const SeasonMap& map_b, const session::Session& session_a,
                             const session::Session& session_b, double radius) {
  ContextResult out;
  collect_context(map_a, session_a, match.instance_a_id, radius, out.frames_a, out.nearby_a);
  collect_context(map_b, session_b, match.instance_b_id, radius, out.frames_b, out.nearby_b);
  return out;
}

PersistenceBelief PersistenceBelief::fresh(std::string landmark_id, double t, double prior) {
  PersistenceBelief b;
  b.landmark_id = std::move(landmark_id);
  b.survival_posterior = std::clamp(prior, 0.0, 1.0);
  b.last_update_time = t;
  return b;
}

PersistenceBelief persistence_update(const PersistenceBelief& b, double t,
                                     std::optional<bool> detected, const DetectorModel& d,
                                     const SurvivalPrior& s) {
  if (t < b.last_update_time) {
    throw NonMonotonicTime("persistence_update: t " + std::to_string(t) + " precedes last update " +
                           std::to_string(b.last_update_time));
  }
  if (!(d.p_detect >= 0.0 && d.p_detect <= 1.0 && d.p_false >= 0.0 && d.p_false <= 1.0)) {
    throw AssociationError("persistence_update: detector rates must lie in [0, 1]");
  }
  if (!(s.hazard_rate >= 0.0)) {
    throw AssociationError("persistence_update: hazard rate must be >= 0");
  }

  PersistenceBelief out = b;
  const double dt = t - b.last_update_time;
  double p = b.survival_posterior * std::exp(-s.hazard_rate * dt);

  if (detected.has_value()) {
    const double like_alive = *detected ? d.p_detect : 1.0 - d.p_detect;
    const double like_dead = *detected ? d.p_false : 1.0 - d.p_false;
    const double denom = like_alive * p + like_dead * (1.0 - p);
    if (denom > 0.0) {
      p = like_alive * p / denom;
    }
    // denom == 0: the evidence is impossible under the model; keep the prior.
    out.evidence_log.push_back({t, *detected});
  }

  out.survival_posterior = std::clamp(p, 0.0, 1.0);
  out.last_update_time = t;
  return out;
}

}  // namespace rangemap::assoc
