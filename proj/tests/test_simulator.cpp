#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "rangemap/season_map.hpp"
#include "rangemap/simulator.hpp"

using namespace rangemap;
using perception::ClassLabel;
using sim::GroundTruth;
using sim::NoiseModel;
using sim::WorldConfig;

namespace {

WorldConfig one_plot(std::uint64_t seed, double density = 0.5) {
  WorldConfig cfg;
  cfg.plots_drill = 0;
  cfg.plots_conmod = 1;
  cfg.plots_control = 0;
  cfg.plant_density = density;
  cfg.shrub_density = 0.0;
  cfg.microsites_per_plot = 8;
  cfg.season_count = 2;
  cfg.rng_seed = seed;
  return cfg;
}

NoiseModel no_noise() {
  NoiseModel n;
  n.pose_noise_sigma = 0.0;
  n.pose_noise_max = 0.0;
  n.row_walk_step_sigma = 0.0;
  n.jitter_sigma = 0.0;
  n.descriptor_noise_sigma = 0.0;
  return n;
}

bool plants_equal(const sim::PlantTruth& a, const sim::PlantTruth& b) {
  return a.global_id == b.global_id && a.plot == b.plot &&
         a.position.east == b.position.east && a.position.north == b.position.north &&
         a.species == b.species && a.birth_season == b.birth_season &&
         a.death_season == b.death_season && a.elongation == b.elongation &&
         a.orientation == b.orientation && a.size_per_season == b.size_per_season;
}

}  // namespace

TEST_CASE("zero plant density leaves only ConMods and microsites") {
  auto cfg = one_plot(3, 0.0);
  const GroundTruth world = sim::generate_world(cfg);
  CHECK(world.plants.empty());
  CHECK(!world.conmods.empty());
  CHECK(static_cast<int>(world.microsites.size()) == cfg.microsites_per_plot);
}

TEST_CASE("the default layout is 18 plots, six per treatment, plants inside their plots") {
  WorldConfig cfg;
  cfg.rng_seed = 9;
  const GroundTruth world = sim::generate_world(cfg);
  CHECK(world.plots.size() == 18);
  int drill = 0, conmod = 0, control = 0;
  for (const auto& p : world.plots) {
    drill += p.treatment == sim::Treatment::kDrillSeeded;
    conmod += p.treatment == sim::Treatment::kConmod;
    control += p.treatment == sim::Treatment::kControl;
  }
  CHECK(drill == 6);
  CHECK(conmod == 6);
  CHECK(control == 6);
  for (const auto& plant : world.plants) {
    const auto& plot = world.plots[plant.plot];
    CHECK(plant.position.east >= plot.origin.east);
    CHECK(plant.position.east <= plot.origin.east + cfg.plot_size);
    CHECK(plant.position.north >= plot.origin.north);
    CHECK(plant.position.north <= plot.origin.north + cfg.plot_size);
    CHECK(plant.death_season != 0);  // death never precedes birth+1
  }
  // ConMods appear only on ConMod plots.
  for (const auto& c : world.conmods) {
    CHECK(world.plots[c.plot].treatment == sim::Treatment::kConmod);
  }
}

TEST_CASE("identical seeds generate identical worlds") {
  const GroundTruth w1 = sim::generate_world(one_plot(77));
  const GroundTruth w2 = sim::generate_world(one_plot(77));
  REQUIRE(w1.plants.size() == w2.plants.size());
  for (std::size_t i = 0; i < w1.plants.size(); ++i) {
    CHECK(plants_equal(w1.plants[i], w2.plants[i]));
  }
  const GroundTruth w3 = sim::generate_world(one_plot(78));
  REQUIRE(!w3.plants.empty());
  // Different seed, different placements.
  CHECK(w1.plants[0].position.east != w3.plants[0].position.east);
}

TEST_CASE("deployments are deterministic given the seed") {
  GroundTruth w1 = sim::generate_world(one_plot(5));
  GroundTruth w2 = sim::generate_world(one_plot(5));
  NoiseModel noise;
  noise.pose_noise_sigma = 0.4;
  noise.pose_noise_max = 1.0;
  const auto s1 = sim::simulate_deployment(w1, 0, noise, {});
  const auto s2 = sim::simulate_deployment(w2, 0, noise, {});
  REQUIRE(s1.frames.size() == s2.frames.size());
  REQUIRE(s1.masks.size() == s2.masks.size());
  for (std::size_t i = 0; i < s1.frames.size(); ++i) {
    CHECK(s1.frames[i].position.east == s2.frames[i].position.east);
    CHECK(s1.frames[i].position.north == s2.frames[i].position.north);
  }
  for (std::size_t i = 0; i < s1.masks.size(); ++i) {
    CHECK(s1.masks[i].runs.size() == s2.masks[i].runs.size());
    CHECK(s1.masks[i].stats.color_mean == s2.masks[i].stats.color_mean);
  }
}

TEST_CASE("with zero noise and zero miss rate every alive plant is observed") {
  GroundTruth world = sim::generate_world(one_plot(11, 1.0));
  const auto s = sim::simulate_deployment(world, 0, no_noise(), {});
  const auto& sources = world.mask_sources.at(s.session_id);
  std::set<std::uint64_t> observed;
  for (const auto& [mid, src] : sources) {
    if (src.kind == sim::SourceKind::kPlant) observed.insert(src.id);
  }
  for (const auto& p : world.plants) {
    if (p.alive_at(0)) CHECK(observed.count(p.global_id) == 1);
  }
}

TEST_CASE("a miss rate of one removes every plant mask, leaving false positives") {
  GroundTruth world = sim::generate_world(one_plot(13, 0.8));
  NoiseModel noise = no_noise();
  noise.detection_miss_rate = 1.0;
  noise.false_positive_rate = 0.3;
  const auto s = sim::simulate_deployment(world, 0, noise, {});
  const auto& sources = world.mask_sources.at(s.session_id);
  int plants = 0, fakes = 0;
  for (const auto& [mid, src] : sources) {
    plants += src.kind == sim::SourceKind::kPlant;
    fakes += src.kind == sim::SourceKind::kFalse;
  }
  CHECK(plants == 0);
  CHECK(fakes > 0);
}

TEST_CASE("the empirical maximum pose error sits in the configured window") {
  // Sigma chosen so the worst pose error of a survey approaches the 1 m
  // bound; checked against the sampler over several sessions.
  NoiseModel noise;
  noise.pose_noise_sigma = 0.9;
  noise.pose_noise_max = 1.0;
  noise.row_walk_step_sigma = 0.05;
  noise.jitter_sigma = 0.025;
  double aggregate = 0.0;
  double mean = 0.0;
  int sessions = 0;
  for (std::uint64_t seed : {17, 18, 19}) {
    GroundTruth world = sim::generate_world(one_plot(seed, 0.4));
    for (int season = 0; season < 2; ++season) {
      std::vector<geo::LocalPoint> true_positions;
      const auto s = sim::simulate_deployment(world, season, noise, {}, &true_positions);
      REQUIRE(true_positions.size() == s.frames.size());
      double worst = 0.0;
      for (std::size_t i = 0; i < s.frames.size(); ++i) {
        worst = std::max(worst, (s.frames[i].position - true_positions[i]).horizontal_norm());
      }
      CHECK(worst <= 1.2);  // hard bound from the truncation
      aggregate = std::max(aggregate, worst);
      mean += worst;
      ++sessions;
    }
  }
  mean /= sessions;
  CHECK(aggregate >= 0.8);
  CHECK(aggregate <= 1.2);
  CHECK(mean >= 0.55);
}

TEST_CASE("every mask maps to exactly one truth source") {
  GroundTruth world = sim::generate_world(one_plot(19, 0.6));
  NoiseModel noise = no_noise();
  noise.false_positive_rate = 0.2;
  const auto s = sim::simulate_deployment(world, 0, noise, {});
  const auto& sources = world.mask_sources.at(s.session_id);
  CHECK(sources.size() == s.masks.size());
  for (const auto& m : s.masks) {
    CHECK(sources.count(m.mask_id) == 1);
  }
}

TEST_CASE("ConMod positions are identical across every season of one world") {
  auto cfg = one_plot(23, 0.3);
  cfg.season_count = 3;
  GroundTruth world = sim::generate_world(cfg);
  const auto before = world.conmods;
  for (int s = 0; s < 3; ++s) {
    sim::simulate_deployment(world, s, no_noise(), {});
    REQUIRE(world.conmods.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(world.conmods[i].position.east == before[i].position.east);
      CHECK(world.conmods[i].position.north == before[i].position.north);
    }
  }
}

TEST_CASE("without recruitment the alive plant count never increases") {
  auto cfg = one_plot(29, 1.0);
  cfg.season_count = 4;
  cfg.hazard_rate = 0.3;
  cfg.recruitment_rate = 0.0;
  const GroundTruth world = sim::generate_world(cfg);
  int prev = std::numeric_limits<int>::max();
  for (int s = 0; s < 4; ++s) {
    int alive = 0;
    for (const auto& p : world.plants) alive += p.alive_at(s);
    CHECK(alive <= prev);
    prev = alive;
  }
}

TEST_CASE("simulated seasons outside the horizon are rejected") {
  GroundTruth world = sim::generate_world(one_plot(31));
  CHECK_THROWS_AS(sim::simulate_deployment(world, 7, no_noise(), {}), sim::SimulatorError);
  CHECK_THROWS_AS(sim::simulate_deployment(world, -1, no_noise(), {}), sim::SimulatorError);
}

TEST_CASE("config validation rejects nonsense") {
  WorldConfig cfg;
  cfg.plots_drill = -1;
  CHECK_THROWS_AS(sim::generate_world(cfg), sim::InvalidConfig);
  cfg = WorldConfig{};
  cfg.plant_density = -0.5;
  CHECK_THROWS_AS(sim::generate_world(cfg), sim::InvalidConfig);
  cfg = WorldConfig{};
  cfg.growth.multiplier_max = 0.5;  // below multiplier_min
  CHECK_THROWS_AS(sim::generate_world(cfg), sim::InvalidConfig);
  NoiseModel noise;
  noise.pose_noise_max = 0.1;
  noise.pose_noise_sigma = 0.5;
  CHECK_THROWS_AS(noise.validate(), sim::InvalidConfig);
}

TEST_CASE("evaluation scores a hand-built confusion exactly") {
  // Tiny synthetic truth: plants 1..3 persist, plant 4 dies after season 0.
  GroundTruth world;
  world.config = one_plot(1, 0.0);
  for (std::uint64_t id = 1; id <= 4; ++id) {
    sim::PlantTruth p;
    p.global_id = id;
    p.plot = 0;
    p.class_label = ClassLabel::kVegetation;
    p.birth_season = 0;
    p.death_season = id == 4 ? 1 : -1;
    p.size_per_season = {0.05, 0.05};
    p.color_per_season = {Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
    world.plants.push_back(p);
  }
  // Sessions observe: a sees 1,2,3,4; b sees 1,2,3.
  auto& src_a = world.mask_sources["sa"];
  auto& src_b = world.mask_sources["sb"];
  for (std::uint64_t id = 1; id <= 4; ++id) src_a[id] = {sim::SourceKind::kPlant, id};
  for (std::uint64_t id = 1; id <= 3; ++id) src_b[100 + id] = {sim::SourceKind::kPlant, id};

  auto make_map = [](const std::string& sid, int season,
                     const std::map<std::uint32_t, std::uint64_t>& inst_to_mask) {
    seasonmap::SeasonMap m;
    m.session_id = sid;
    m.season_index = season;
    for (const auto& [iid, mask] : inst_to_mask) {
      seasonmap::LandmarkInstance inst;
      inst.instance_id = iid;
      inst.class_label = ClassLabel::kVegetation;
      inst.observations.resize(1);
      inst.observations[0].source_mask_id = mask;
      m.instances.push_back(inst);
    }
    return m;
  };
  const auto map_a = make_map("sa", 0, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  const auto map_b = make_map("sb", 1, {{0, 101}, {1, 102}, {2, 103}});

  // Matches: (0,0) correct plant 1; (1,2) wrong pair (plant 2 vs 3); 3 persists unmatched.
  std::vector<assoc::CrossSeasonMatch> matches{{0, 0, 0.1, 0.0, assoc::MatchMethod::kLocationOnly},
                                               {1, 2, 0.4, 0.0, assoc::MatchMethod::kLocationOnly}};
  const auto res = sim::evaluate_association(matches, world, map_a, map_b);
  CHECK(res.persisting_observed == 3);  // plants 1..3
  CHECK(res.correct_matches == 1);
  CHECK(res.wrong_matches == 1);
  CHECK(res.missed == 2);
  CHECK(res.precision == doctest::Approx(0.5));
  CHECK(res.recall == doctest::Approx(1.0 / 3.0));

  // Perfect matching gives precision = recall = 1.
  std::vector<assoc::CrossSeasonMatch> perfect{{0, 0, 0.1, 0.0, assoc::MatchMethod::kLocationOnly},
                                               {1, 1, 0.1, 0.0, assoc::MatchMethod::kLocationOnly},
                                               {2, 2, 0.1, 0.0, assoc::MatchMethod::kLocationOnly}};
  const auto res2 = sim::evaluate_association(perfect, world, map_a, map_b);
  CHECK(res2.precision == 1.0);
  CHECK(res2.recall == 1.0);
  CHECK(res2.f1 == 1.0);

  // No matches at all: recall 0, precision defaulted to 1 and flagged.
  const auto res3 = sim::evaluate_association({}, world, map_a, map_b);
  CHECK(res3.recall == 0.0);
  CHECK(res3.precision == 1.0);
  CHECK(res3.precision_defaulted);

  // Unknown instance ids are an error.
  std::vector<assoc::CrossSeasonMatch> bad{{42, 0, 0.1, 0.0, assoc::MatchMethod::kLocationOnly}};
  CHECK_THROWS_AS(sim::evaluate_association(bad, world, map_a, map_b), sim::UnknownInstance);
}

TEST_CASE("shrub instances land within one leaf edge of the true centroid") {
  auto cfg = one_plot(37, 0.0);
  cfg.shrub_density = 0.02;
  cfg.season_count = 1;
  GroundTruth world = sim::generate_world(cfg);
  REQUIRE(!world.plants.empty());
  NoiseModel noise = no_noise();
  const auto s = sim::simulate_deployment(world, 0, noise, {});
  REQUIRE(!s.scans.empty());

  const auto map = seasonmap::build_season_map(s, {}, perception::HeuristicClassifier{});
  int shrub_instances = 0;
  for (const auto& inst : map.instances) {
    if (inst.class_label != ClassLabel::kShrub) continue;
    ++shrub_instances;
    double best = 1e9;
    for (const auto& p : world.plants) {
      if (p.class_label != ClassLabel::kShrub) continue;
      const Eigen::Vector3d centroid(p.position.east, p.position.north, p.height / 2.0);
      const Eigen::Vector3d got(inst.mean_position.east, inst.mean_position.north,
                                inst.mean_position.up);
      best = std::min(best, (centroid - got).norm());
    }
    CHECK(best <= 0.15);
  }
  int true_shrubs = 0;
  for (const auto& p : world.plants) true_shrubs += p.class_label == ClassLabel::kShrub;
  CHECK(shrub_instances == true_shrubs);
}

TEST_CASE("the suggested feature transition tracks the growth model") {
  auto cfg = one_plot(41, 0.5);
  cfg.growth.multiplier_min = 1.3;
  cfg.growth.multiplier_max = 1.6;
  const GroundTruth world = sim::generate_world(cfg);
  const auto f = sim::suggested_feature_transition(world);
  CHECK(f.drift(0) > 0.0);  // areas grow
  CHECK(f.drift_variance(0) > 0.0);

  auto frozen = one_plot(41, 0.5);
  frozen.growth.multiplier_min = 1.0;
  frozen.growth.multiplier_max = 1.0;
  const auto f0 = sim::suggested_feature_transition(sim::generate_world(frozen));
  CHECK(std::abs(f0.drift(0)) < 1e-9);  // no growth, no drift
}
