#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "rangemap/association.hpp"
#include "rangemap/rng.hpp"

using namespace rangemap;
using assoc::CrossSeasonMatch;
using assoc::GateParams;
using assoc::MatchMethod;
using assoc::MatchParams;
using perception::ClassLabel;
using seasonmap::LandmarkInstance;
using seasonmap::SeasonMap;

namespace {

LandmarkInstance instance_at(std::uint32_t id, double e, double n,
                             ClassLabel label = ClassLabel::kVegetation) {
  LandmarkInstance inst;
  inst.instance_id = id;
  inst.class_label = label;
  inst.mean_position = {e, n, 0.0};
  inst.descriptor_mean = Eigen::VectorXd::Zero(perception::kDescriptorSize);
  inst.observations.resize(1);
  inst.observations[0].position = inst.mean_position;
  inst.observations[0].class_label = label;
  return inst;
}

SeasonMap map_of(std::vector<LandmarkInstance> instances, int season = 0) {
  SeasonMap m;
  m.session_id = "s" + std::to_string(season);
  m.season_index = season;
  m.instances = std::move(instances);
  return m;
}

GateParams unit_gate() {
  GateParams g;
  g.localization_covariance = Eigen::Matrix2d::Identity();
  g.chi2_threshold = 5.991;
  return g;
}

}  // namespace

TEST_CASE("gating keeps a candidate 2 m away and drops one 3 m away under a unit gate") {
  const auto inst = instance_at(0, 0, 0);
  const auto near_map = map_of({instance_at(1, 2.0, 0.0)});
  const auto far_map = map_of({instance_at(1, 3.0, 0.0)});
  CHECK(assoc::gate_candidates(inst, near_map, unit_gate()).size() == 1);  // d^2 = 4
  CHECK(assoc::gate_candidates(inst, far_map, unit_gate()).empty());       // d^2 = 9
}

TEST_CASE("gating equals a brute-force scan on random maps") {
  Rng rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LandmarkInstance> insts;
    for (int i = 0; i < 40; ++i) {
      insts.push_back(instance_at(i, rng.uniform(0, 12), rng.uniform(0, 12),
                                  i % 3 == 0 ? ClassLabel::kLitter : ClassLabel::kVegetation));
    }
    const auto other = map_of(std::move(insts));
    const auto probe = instance_at(99, rng.uniform(0, 12), rng.uniform(0, 12));
    const auto got = assoc::gate_candidates(probe, other, unit_gate());

    std::set<std::uint32_t> got_ids;
    for (const auto* c : got) got_ids.insert(c->instance_id);
    std::set<std::uint32_t> want_ids;
    for (const auto& c : other.instances) {
      if (c.class_label != probe.class_label) continue;
      const Eigen::Vector2d d(probe.mean_position.east - c.mean_position.east,
                              probe.mean_position.north - c.mean_position.north);
      if (d.squaredNorm() <= 5.991) want_ids.insert(c.instance_id);
    }
    CHECK(got_ids == want_ids);
  }
}

TEST_CASE("a single close same-class pair produces one match") {
  const auto a = map_of({instance_at(0, 1.0, 1.0)}, 0);
  const auto b = map_of({instance_at(0, 1.1, 1.0)}, 1);
  MatchParams params;
  params.gate = unit_gate();
  const auto matches = assoc::match_cross_season(a, b, params);
  REQUIRE(matches.size() == 1);
  CHECK(matches[0].instance_a_id == 0);
  CHECK(matches[0].instance_b_id == 0);
  CHECK(matches[0].mahalanobis_distance == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(matches[0].method == MatchMethod::kLocationOnly);
}

TEST_CASE("class labels gate matches") {
  const auto a = map_of({instance_at(0, 1.0, 1.0, ClassLabel::kVegetation)}, 0);
  const auto b = map_of({instance_at(0, 1.1, 1.0, ClassLabel::kLitter)}, 1);
  MatchParams params;
  params.gate = unit_gate();
  CHECK(assoc::match_cross_season(a, b, params).empty());
}

TEST_CASE("matching is one-to-one and every pair passed the gate") {
  Rng rng(77);
  std::vector<LandmarkInstance> ia, ib;
  for (int i = 0; i < 30; ++i) {
    ia.push_back(instance_at(i, rng.uniform(0, 10), rng.uniform(0, 10)));
    ib.push_back(instance_at(i, rng.uniform(0, 10), rng.uniform(0, 10)));
  }
  const auto a = map_of(std::move(ia), 0);
  const auto b = map_of(std::move(ib), 1);
  MatchParams params;
  params.gate = unit_gate();
  const auto matches = assoc::match_cross_season(a, b, params);
  std::set<std::uint32_t> used_a, used_b;
  for (const auto& m : matches) {
    CHECK(used_a.insert(m.instance_a_id).second);
    CHECK(used_b.insert(m.instance_b_id).second);
    // gating superset property
    const auto* inst = &a.instances[m.instance_a_id];
    const auto cands = assoc::gate_candidates(*inst, b, params.gate);
    bool found = false;
    for (const auto* c : cands) found = found || c->instance_id == m.instance_b_id;
    CHECK(found);
    CHECK(m.mahalanobis_distance * m.mahalanobis_distance <= params.gate.chi2_threshold + 1e-12);
  }
}

TEST_CASE("greedy matching agrees with the exhaustive optimal assignment when separation is clear") {
  Rng rng(88);
  int agree = 0, total = 0;
  for (int trial = 0; trial < 10; ++trial) {
    // Up to 7 well-separated plants, each jittered a little across seasons.
    const int n = 4 + static_cast<int>(rng.uniform_index(4));
    std::vector<LandmarkInstance> ia, ib;
    for (int i = 0; i < n; ++i) {
      const double e = (i % 3) * 4.0, no = (i / 3) * 4.0;
      ia.push_back(instance_at(i, e + rng.normal(0, 0.05), no + rng.normal(0, 0.05)));
      ib.push_back(instance_at(i, e + rng.normal(0, 0.05), no + rng.normal(0, 0.05)));
    }
    const auto a = map_of(ia, 0);
    const auto b = map_of(ib, 1);
    MatchParams params;
    params.gate = unit_gate();
    const auto greedy = assoc::match_cross_season(a, b, params);

    // Exhaustive assignment minimizing the total squared distance.
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::vector<int> best = perm;
    double best_cost = 1e18;
    do {
      double cost = 0.0;
      for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d d(ia[i].mean_position.east - ib[perm[i]].mean_position.east,
                                ia[i].mean_position.north - ib[perm[i]].mean_position.north);
        cost += d.squaredNorm();
      }
      if (cost < best_cost) {
        best_cost = cost;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));

    REQUIRE(greedy.size() == static_cast<std::size_t>(n));
    bool same = true;
    for (const auto& m : greedy) same = same && best[m.instance_a_id] == static_cast<int>(m.instance_b_id);
    agree += same ? 1 : 0;
    ++total;
  }
  // Separation is far above the jitter, so greedy must equal optimal here.
  CHECK(agree == total);
}

namespace {

SeasonMap with_anchors(std::vector<LandmarkInstance> instances,
                       std::vector<std::pair<std::uint32_t, Eigen::Vector2d>> anchors, int season) {
  SeasonMap m = map_of(std::move(instances), season);
  for (const auto& [id, pos] : anchors) {
    LandmarkInstance c = instance_at(id, pos.x(), pos.y(), ClassLabel::kConmod);
    m.static_anchors.push_back(c);
  }
  seasonmap::anchor_to_static(m, 4);
  return m;
}

}  // namespace

TEST_CASE("anchor-relative matching requires two proximity-matched anchors") {
  const auto a = with_anchors({instance_at(0, 1, 1)}, {{10, {0, 0}}}, 0);
  const auto b = with_anchors({instance_at(0, 1, 1)}, {{20, {0, 0}}}, 1);
  MatchParams params;
  params.gate = unit_gate();
  params.method = MatchMethod::kAnchorRelative;
  CHECK_THROWS_AS(assoc::match_cross_season(a, b, params), assoc::InsufficientAnchors);
}

TEST_CASE("anchor-relative matching is invariant to a rigid translation of one season") {
  Rng rng(99);
  std::vector<LandmarkInstance> ia, ib;
  std::vector<std::pair<std::uint32_t, Eigen::Vector2d>> ca, cb;
  for (int i = 0; i < 6; ++i) {
    const double e = (i % 3) * 3.0 + rng.normal(0, 0.02);
    const double n = (i / 3) * 3.0 + rng.normal(0, 0.02);
    ia.push_back(instance_at(i, e, n));
    ib.push_back(instance_at(i, e + rng.normal(0, 0.02), n + rng.normal(0, 0.02)));
  }
  for (std::uint32_t i = 0; i < 4; ++i) {
    const Eigen::Vector2d p{(i % 2) * 6.0 - 1.0, (i / 2) * 6.0 - 1.0};
    ca.push_back({100 + i, p});
    cb.push_back({200 + i, p + Eigen::Vector2d(rng.normal(0, 0.02), rng.normal(0, 0.02))});
  }
  const auto a = with_anchors(ia, ca, 0);
  auto b = with_anchors(ib, cb, 1);

  MatchParams params;
  GateParams g;
  g.localization_covariance = 0.1 * 0.1 * Eigen::Matrix2d::Identity();
  params.gate = g;
  params.method = MatchMethod::kAnchorRelative;
  const auto before = assoc::match_cross_season(a, b, params);

  // Shift season b wholesale: positions and anchors move together, offsets
  // are recomputed from the shifted geometry.
  const Eigen::Vector2d t(40.0, -13.0);
  SeasonMap b_shifted = b;
  for (auto& inst : b_shifted.instances) {
    inst.mean_position.east += t.x();
    inst.mean_position.north += t.y();
  }
  for (auto& c : b_shifted.static_anchors) {
    c.mean_position.east += t.x();
    c.mean_position.north += t.y();
  }
  seasonmap::anchor_to_static(b_shifted, 4);
  const auto after = assoc::match_cross_season(a, b_shifted, params);

  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i].instance_a_id == after[i].instance_a_id);
    CHECK(before[i].instance_b_id == after[i].instance_b_id);
    CHECK(before[i].mahalanobis_distance ==
          doctest::Approx(after[i].mahalanobis_distance).epsilon(1e-9));
  }
  CHECK(!before.empty());
}

TEST_CASE("gather_context keeps frames whose footprint center is within the radius") {
  // Map with one matched instance at (5, 5).
  auto map_a = map_of({instance_at(0, 5, 5)}, 0);
  auto map_b = map_of({instance_at(1, 5, 5)}, 1);
  map_a.instances[0].instance_id = 0;
  map_b.instances[0].instance_id = 1;

  session::Session sa;
  sa.session_id = "a";
  session::CameraConfig cam;
  cam.camera_id = "down0";
  cam.kind = perception::CameraKind::kDown;
  cam.intrinsics.fx = cam.intrinsics.fy = 600;
  cam.intrinsics.cx = 400;
  cam.intrinsics.cy = 300;
  cam.intrinsics.width = 800;
  cam.intrinsics.height = 600;
  cam.mount_offset = Eigen::Vector3d(0, 0, 1.0);
  // straight-down camera
  Eigen::Matrix3d m;
  m.col(0) = Eigen::Vector3d(0, -1, 0);
  m.col(1) = Eigen::Vector3d(-1, 0, 0);
  m.col(2) = Eigen::Vector3d(0, 0, -1);
  cam.mount_rotation = Eigen::Quaterniond(m);
  sa.cameras.push_back(cam);
  // Footprint centers at distance 0, exactly 2.0, and 3.5 from the landmark.
  sa.frames.push_back({"at", 0.0, "down0", {5, 5, 0}, Eigen::Quaterniond::Identity(), {}});
  sa.frames.push_back({"edge", 1.0, "down0", {5, 7, 0}, Eigen::Quaterniond::Identity(), {}});
  sa.frames.push_back({"far", 2.0, "down0", {5, 8.5, 0}, Eigen::Quaterniond::Identity(), {}});
  session::Session sb = sa;
  sb.session_id = "b";

  CrossSeasonMatch match{0, 1, 0.0, 0.0, MatchMethod::kLocationOnly};
  const auto ctx = assoc::gather_context(match, map_a, map_b, sa, sb, 2.0);
  CHECK(ctx.frames_a == std::vector<std::string>{"at", "edge"});  // boundary inclusive
  CHECK(ctx.frames_b == std::vector<std::string>{"at", "edge"});
  CHECK(ctx.nearby_a.empty());
}

TEST_CASE("gather_context matches a brute-force distance filter") {
  Rng rng(31);
  auto map_a = map_of({}, 0);
  for (int i = 0; i < 25; ++i) {
    map_a.instances.push_back(instance_at(
        i, rng.uniform(0, 10), rng.uniform(0, 10),
        i % 2 == 0 ? ClassLabel::kVegetation : ClassLabel::kCrack));
  }
  auto map_b = map_a;
  map_b.session_id = "s1";

  session::Session sa;
  sa.session_id = "a";
  session::CameraConfig cam;
  cam.camera_id = "c";
  cam.kind = perception::CameraKind::kDown;
  cam.intrinsics = {600, 600, 400, 300, 800, 600};
  cam.mount_offset = Eigen::Vector3d(0, 0, 1);
  Eigen::Matrix3d m;
  m.col(0) = Eigen::Vector3d(0, -1, 0);
  m.col(1) = Eigen::Vector3d(-1, 0, 0);
  m.col(2) = Eigen::Vector3d(0, 0, -1);
  cam.mount_rotation = Eigen::Quaterniond(m);
  sa.cameras.push_back(cam);
  for (int i = 0; i < 50; ++i) {
    sa.frames.push_back({"f" + std::to_string(i), double(i), "c",
                         {rng.uniform(0, 10), rng.uniform(0, 10), 0},
                         Eigen::Quaterniond::Identity(),
                         Eigen::Matrix3d::Zero()});
  }
  const session::Session sb = sa;

  const std::uint32_t target = 4;
  CrossSeasonMatch match{target, target, 0.0, 0.0, MatchMethod::kLocationOnly};
  const auto ctx = assoc::gather_context(match, map_a, map_b, sa, sb, 2.0);

  const Eigen::Vector2d center(map_a.instances[target].mean_position.east,
                               map_a.instances[target].mean_position.north);
  std::vector<std::string> want_frames;
  for (const auto& f : sa.frames) {
    // nadir camera: the footprint center is directly below the camera
    if ((Eigen::Vector2d(f.position.east, f.position.north) - center).norm() <= 2.0) {
      want_frames.push_back(f.frame_id);
    }
  }
  CHECK(ctx.frames_a == want_frames);
  std::set<std::uint32_t> want_nearby;
  for (const auto& inst : map_a.instances) {
    if (inst.instance_id == target) continue;
    if ((Eigen::Vector2d(inst.mean_position.east, inst.mean_position.north) - center).norm() <= 2.0) {
      want_nearby.insert(inst.instance_id);
    }
  }
  CHECK(std::set<std::uint32_t>(ctx.nearby_a.begin(), ctx.nearby_a.end()) == want_nearby);
}

TEST_CASE("persistence decay matches the analytic exponential") {
  const auto b = assoc::PersistenceBelief::fresh("p", 0.0);
  const auto out = assoc::persistence_update(b, 5.0, std::nullopt, {0.9, 0.1}, {0.1});
  CHECK(out.survival_posterior == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(out.evidence_log.empty());  // absent surveys are not evidence
  CHECK(out.last_update_time == 5.0);
}

TEST_CASE("a detection updates the posterior by Bayes arithmetic") {
  auto b = assoc::PersistenceBelief::fresh("p", 0.0, 0.5);
  const auto out = assoc::persistence_update(b, 0.0, true, {0.9, 0.1}, {0.0});
  CHECK(out.survival_posterior == doctest::Approx(0.9).epsilon(1e-12));
  REQUIRE(out.evidence_log.size() == 1);
  CHECK(out.evidence_log[0].detected);
}

TEST_CASE("persistence matches the enumeration oracle on mixed sequences") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const double hazard = rng.uniform(0.05, 0.8);
    const assoc::DetectorModel d{rng.uniform(0.55, 0.95), rng.uniform(0.01, 0.3)};
    const int len = 1 + static_cast<int>(rng.uniform_index(6));
    std::vector<double> times;
    std::vector<bool> outcomes;
    auto belief = assoc::PersistenceBelief::fresh("p", 0.0);
    double t = 0.0;
    for (int i = 0; i < len; ++i) {
      t += rng.uniform(0.5, 2.0);
      const bool detected = rng.bernoulli(0.6);
      times.push_back(t);
      outcomes.push_back(detected);
      belief = assoc::persistence_update(belief, t, detected, d, {hazard});
    }
    const auto want = oracles::persistence_enumeration(times, outcomes, hazard, d.p_detect, d.p_false);
    REQUIRE(want.has_value());
    CHECK(belief.survival_posterior == doctest::Approx(*want).epsilon(1e-9));
    CHECK(belief.survival_posterior >= 0.0);
    CHECK(belief.survival_posterior <= 1.0);
  }
}

TEST_CASE("a perfect detector pins the posterior to exactly one") {
  auto b = assoc::PersistenceBelief::fresh("p", 0.0, 0.4);
  const auto out = assoc::persistence_update(b, 1.0, true, {1.0, 0.0}, {0.2});
  CHECK(out.survival_posterior == 1.0);
}

TEST_CASE("time must not run backwards") {
  auto b = assoc::PersistenceBelief::fresh("p", 3.0);
  CHECK_THROWS_AS(assoc::persistence_update(b, 2.0, true, {0.9, 0.1}, {0.1}),
                  assoc::NonMonotonicTime);
}

TEST_CASE("predict_features shifts the mean and grows the variance linearly") {
  Eigen::VectorXd desc = Eigen::VectorXd::Constant(perception::kDescriptorSize, 1.0);
  Eigen::VectorXd var = Eigen::VectorXd::Constant(perception::kDescriptorSize, 0.1);
  assoc::FeatureTransition f;
  f.drift = Eigen::VectorXd::Constant(perception::kDescriptorSize, 0.25);
  f.drift_variance = Eigen::VectorXd::Constant(perception::kDescriptorSize, 0.04);

  const auto unchanged = assoc::predict_features(desc, var, 0.0, f);
  CHECK((unchanged.descriptor - desc).norm() == 0.0);
  CHECK((unchanged.variance - var).norm() == 0.0);

  assoc::FeatureTransition zero;
  zero.drift = Eigen::VectorXd::Zero(perception::kDescriptorSize);
  zero.drift_variance = Eigen::VectorXd::Constant(perception::kDescriptorSize, 0.04);
  const auto grown = assoc::predict_features(desc, var, 3.0, zero);
  CHECK((grown.descriptor - desc).norm() == 0.0);
  CHECK(grown.variance(0) == doctest::Approx(0.1 + 3 * 0.04).epsilon(1e-12));

  const auto moved = assoc::predict_features(desc, var, 2.0, f);
  CHECK(moved.descriptor(3) == doctest::Approx(1.5).epsilon(1e-12));
}
