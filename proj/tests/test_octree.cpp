#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "rangemap/octree.hpp"
#include "rangemap/rng.hpp"

using namespace rangemap;
using geo::LocalPoint;
using octree::Aabb;
using octree::OccupancyOctree;
using octree::Ray;
using octree::VoxelIndex;
using octree::VoxelState;

namespace {

OccupancyOctree small_tree(double res = 0.15, double edge = 9.6) {
  return OccupancyOctree(res, {{0, 0, 0}, {edge, edge, edge}});
}

std::vector<std::pair<VoxelIndex, double>> leaves_of(const OccupancyOctree& tree) {
  std::vector<std::pair<VoxelIndex, double>> out;
  tree.for_each_leaf([&](const VoxelIndex& v, double lo) { out.emplace_back(v, lo); });
  return out;
}

}  // namespace

TEST_CASE("an empty scan leaves the tree unchanged") {
  auto tree = small_tree();
  tree.insert_scan({1, 1, 1}, {});
  CHECK(tree.leaf_count() == 0);
}

TEST_CASE("a single endpoint is occupied and the path to it is free") {
  auto tree = small_tree();
  const LocalPoint origin{1.0, 1.0, 1.0};
  const LocalPoint hit{2.0, 1.0, 1.0};
  const std::vector<LocalPoint> pts{hit};
  tree.insert_scan(origin, pts);

  const auto end = tree.query_occupancy(hit);
  CHECK(end.state == VoxelState::kOccupied);
  // One hit update: logistic(0.85)
  CHECK(end.probability == doctest::Approx(1.0 / (1.0 + std::exp(-0.85))).epsilon(1e-12));

  const auto mid = tree.query_occupancy({1.5, 1.0, 1.0});
  CHECK(mid.state == VoxelState::kFree);
  CHECK(mid.probability < 0.5);
}

TEST_CASE("one hit then one miss lands on log-odds 0.45") {
  auto tree = small_tree();
  const VoxelIndex v{3, 3, 3};
  tree.add_log_odds(v, 0.85);
  tree.add_log_odds(v, -0.4);
  CHECK(*tree.log_odds_at(v) == doctest::Approx(0.45).epsilon(1e-12));
  const auto q = tree.query_occupancy(tree.voxel_center(v));
  CHECK(q.probability == doctest::Approx(1.0 / (1.0 + std::exp(-0.45))).epsilon(1e-12));
  CHECK(q.state == VoxelState::kOccupied);
}

TEST_CASE("repeated insertion saturates at the clamp maximum") {
  auto tree = small_tree();
  const LocalPoint origin{1.0, 1.0, 5.0};
  const std::vector<LocalPoint> pts{{2.0, 1.0, 5.0}};
  for (int i = 0; i < 10; ++i) tree.insert_scan(origin, pts);
  const auto v = tree.voxel_of(pts[0]);
  CHECK(*tree.log_odds_at(*v) == 3.5);
}

TEST_CASE("untouched voxels query as unknown with probability one half") {
  const auto tree = small_tree();
  const auto q = tree.query_occupancy({4.0, 4.0, 4.0});
  CHECK(q.state == VoxelState::kUnknown);
  CHECK(q.probability == 0.5);
  // Outside the grid is unknown as well.
  CHECK(tree.query_occupancy({-100.0, 0.0, 0.0}).state == VoxelState::kUnknown);
}

TEST_CASE("insert_scan is invariant to the order of points within a scan") {
  Rng rng(42);
  std::vector<LocalPoint> pts;
  for (int i = 0; i < 60; ++i) {
    pts.push_back({rng.uniform(0.5, 9.0), rng.uniform(0.5, 9.0), rng.uniform(0.5, 9.0)});
  }
  auto tree_a = small_tree();
  tree_a.insert_scan({5, 5, 5}, pts);

  std::reverse(pts.begin(), pts.end());
  std::swap(pts[3], pts[31]);
  auto tree_b = small_tree();
  tree_b.insert_scan({5, 5, 5}, pts);

  const auto la = leaves_of(tree_a);
  const auto lb = leaves_of(tree_b);
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i].first == lb[i].first);
    CHECK(la[i].second == lb[i].second);  // bit-identical
  }
}

TEST_CASE("out-of-bounds endpoints carve free space but deposit no hit") {
  auto tree = small_tree();
  const LocalPoint origin{1.0, 1.0, 1.0};
  const std::vector<LocalPoint> pts{{100.0, 1.0, 1.0}};
  tree.insert_scan(origin, pts);
  CHECK(tree.leaf_count() > 0);
  tree.for_each_leaf([&](const VoxelIndex&, double lo) { CHECK(lo < 0.0); });
}

TEST_CASE("free-space carving can be switched off") {
  octree::OccupancyParams params;
  params.carve_free_space = false;
  OccupancyOctree tree(0.15, {{0, 0, 0}, {9.6, 9.6, 9.6}}, params);
  const std::vector<LocalPoint> pts{{2.0, 1.0, 1.0}};
  tree.insert_scan({1.0, 1.0, 1.0}, pts);
  CHECK(tree.leaf_count() == 1);  // endpoint only, no miss voxels
}

TEST_CASE("ray_box_intersect matches the analytic slab case") {
  const Ray r = Ray::from({0.5, 0.5, 10.0}, {0.0, 0.0, -1.0});
  const Aabb box{{0, 0, 0}, {1, 1, 1}};
  const auto hit = octree::ray_box_intersect(r, box);
  REQUIRE(hit.has_value());
  CHECK(hit->t_enter == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(hit->t_exit == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("rays parallel to a face outside the slab miss") {
  const Ray r = Ray::from({-1.0, 2.0, 0.5}, {1.0, 0.0, 0.0});
  const Aabb box{{0, 0, 0}, {1, 1, 1}};
  CHECK(!octree::ray_box_intersect(r, box).has_value());

  const Ray inside = Ray::from({-1.0, 0.5, 0.5}, {1.0, 0.0, 0.0});
  const auto hit = octree::ray_box_intersect(inside, box);
  REQUIRE(hit.has_value());
  CHECK(hit->t_enter == doctest::Approx(1.0));
  CHECK(hit->t_exit == doctest::Approx(2.0));
}

TEST_CASE("boxes behind the origin miss; origins inside clamp t_enter to zero") {
  const Aabb box{{0, 0, 0}, {1, 1, 1}};
  CHECK(!octree::ray_box_intersect(Ray::from({0.5, 0.5, 10.0}, {0.0, 0.0, 1.0}), box).has_value());
  const auto hit = octree::ray_box_intersect(Ray::from({0.5, 0.5, 0.5}, {0.0, 0.0, 1.0}), box);
  REQUIRE(hit.has_value());
  CHECK(hit->t_enter == 0.0);
  CHECK(hit->t_exit == doctest::Approx(0.5));
}

TEST_CASE("ray_box_intersect agrees with the dense sampling oracle") {
  Rng rng(4242);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    const LocalPoint lo{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const Aabb box{lo, lo + LocalPoint{rng.uniform(0.1, 6), rng.uniform(0.1, 6), rng.uniform(0.1, 6)}};
    LocalPoint dir{rng.normal01(), rng.normal01(), rng.normal01()};
    if (i % 5 == 0) dir.east = 0.0;
    if (dir.norm() < 1e-9) continue;
    const Ray ray = Ray::from({rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-12, 12)}, dir);
    const double step = 0.0015;
    const auto got = octree::ray_box_intersect(ray, box);
    const auto want = oracles::sample_ray_box(ray, box, 40.0, step);
    if (want) {
      REQUIRE(got.has_value());
      CHECK(std::abs(got->t_enter - want->first) <= step);
      CHECK(std::abs(std::min(got->t_exit, 40.0) - want->second) <= step);
    } else if (got && got->t_enter <= 40.0) {
      CHECK(got->t_exit - got->t_enter < 2 * step);  // graze thinner than the sampling step
    }
    ++checked;
  }
  CHECK(checked > 450);
}

TEST_CASE("raycast on an empty tree misses") {
  const auto tree = small_tree();
  CHECK(!tree.raycast_first_occupied(Ray::from({1, 1, 1}, {1, 0, 0}), 50.0).has_value());
}

TEST_CASE("raycast returns the center of a voxel two meters ahead") {
  auto tree = small_tree();
  const LocalPoint target{3.0, 1.0, 1.0};
  tree.add_log_odds(target, 2.0);
  const auto hit = tree.raycast_first_occupied(Ray::from({1.0, 1.0, 1.0}, {1, 0, 0}), 10.0);
  REQUIRE(hit.has_value());
  CHECK((*hit - tree.voxel_center(*tree.voxel_of(target))).norm() == 0.0);
}

TEST_CASE("raycast agrees with the voxel-marching oracle on random sparse trees") {
  Rng rng(777);
  const double res = 0.15;
  const double edge = res * 64;
  for (int world = 0; world < 5; ++world) {
    OccupancyOctree tree(res, {{0, 0, 0}, {edge, edge, edge}});
    std::vector<VoxelIndex> occupied;
    for (int i = 0; i < 50; ++i) {
      const VoxelIndex v{static_cast<int>(rng.uniform_index(64)),
                         static_cast<int>(rng.uniform_index(64)),
                         static_cast<int>(rng.uniform_index(64))};
      tree.add_log_odds(v, 2.0);
      occupied.push_back(v);
    }
    for (int i = 0; i < 60; ++i) {
      const LocalPoint origin{rng.uniform(-1, edge + 1), rng.uniform(-1, edge + 1),
                              rng.uniform(-1, edge + 1)};
      LocalPoint dir;
      if (i % 2 == 0) {
        const auto c = tree.voxel_center(occupied[rng.uniform_index(occupied.size())]);
        dir = c - origin;
      } else {
        dir = {rng.normal01(), rng.normal01(), rng.normal01()};
      }
      if (dir.norm() < 1e-9) continue;
      const Ray ray = Ray::from(origin, dir);
      const auto got = tree.raycast_first_occupied(ray, 3 * edge);
      const auto want = oracles::march_first_occupied(tree, ray, 3 * edge, res / 10.0);
      REQUIRE(got.has_value() == want.has_value());
      if (got) CHECK((*got - *want).norm() == 0.0);
    }
  }
}

TEST_CASE("raycast is order-consistent: no occupied voxel intersects the ray earlier") {
  Rng rng(778);
  const double res = 0.15;
  const double edge = res * 64;
  OccupancyOctree tree(res, {{0, 0, 0}, {edge, edge, edge}});
  std::vector<VoxelIndex> occupied;
  for (int i = 0; i < 80; ++i) {
    const VoxelIndex v{static_cast<int>(rng.uniform_index(64)),
                       static_cast<int>(rng.uniform_index(64)),
                       static_cast<int>(rng.uniform_index(64))};
    tree.add_log_odds(v, 2.0);
    occupied.push_back(v);
  }
  for (int i = 0; i < 100; ++i) {
    const auto c = tree.voxel_center(occupied[rng.uniform_index(occupied.size())]);
    const LocalPoint origin{rng.uniform(-1, edge + 1), rng.uniform(-1, edge + 1),
                            rng.uniform(-1, edge + 1)};
    const LocalPoint dir = c - origin;
    if (dir.norm() < 1e-9) continue;
    const Ray ray = Ray::from(origin, dir);
    const auto got = tree.raycast_first_occupied(ray, 3 * edge);
    if (!got) continue;
    const auto got_hit = octree::ray_box_intersect(ray, tree.voxel_box(*tree.voxel_of(*got)));
    REQUIRE(got_hit.has_value());
    for (const auto& v : occupied) {
      const auto other = octree::ray_box_intersect(ray, tree.voxel_box(v));
      if (other.has_value()) {
        CHECK(got_hit->t_enter <= other->t_enter + 1e-9);
      }
    }
  }
}

TEST_CASE("corner ties enter the lexicographically smallest voxel") {
  OccupancyOctree tree(1.0, {{0, 0, 0}, {8, 8, 8}});
  // Diagonal ray through exact voxel corners in the xy plane.
  const Ray ray = Ray::from({0.0, 0.0, 0.5}, {1.0, 1.0, 0.0});
  // Only the off-diagonal voxel (0,1) is occupied: the tie rule walks
  // (0,0) -> (0,1) -> (1,1) -> ..., so it must be found.
  tree.add_log_odds(VoxelIndex{0, 1, 0}, 2.0);
  auto hit = tree.raycast_first_occupied(ray, 20.0);
  REQUIRE(hit.has_value());
  CHECK((*hit - tree.voxel_center({0, 1, 0})).norm() == 0.0);

  // With (1,0) occupied instead, the same ray must NOT report it: the walk
  // never enters the larger-index side of the corner.
  OccupancyOctree tree2(1.0, {{0, 0, 0}, {8, 8, 8}});
  tree2.add_log_odds(VoxelIndex{1, 0, 0}, 2.0);
  CHECK(!tree2.raycast_first_occupied(ray, 20.0).has_value());
}

TEST_CASE("node boxes contain their descendants bit-exactly") {
  auto tree = small_tree();
  Rng rng(11);
  for (int i = 0; i < 40; ++i) {
    tree.add_log_odds(
        LocalPoint{rng.uniform(0.0, 9.0), rng.uniform(0.0, 9.0), rng.uniform(0.0, 9.0)}, 1.0);
  }
  struct NodeRec {
    int depth;
    VoxelIndex v;
  };
  std::vector<NodeRec> stack;
  tree.for_each_node([&](int depth, const VoxelIndex& v) {
    while (!stack.empty() && stack.back().depth >= depth) stack.pop_back();
    const Aabb box = tree.node_box(depth, v);
    if (!stack.empty()) {
      const NodeRec& parent = stack.back();
      const Aabb pbox = tree.node_box(parent.depth, parent.v);
      // exact comparisons: no tolerance
      CHECK(box.min.east >= pbox.min.east);
      CHECK(box.min.north >= pbox.min.north);
      CHECK(box.min.up >= pbox.min.up);
      CHECK(box.max.east <= pbox.max.east);
      CHECK(box.max.north <= pbox.max.north);
      CHECK(box.max.up <= pbox.max.up);
    }
    stack.push_back({depth, v});
  });
}

TEST_CASE("binary dump round trips") {
  auto tree = small_tree();
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    tree.add_log_odds(
        LocalPoint{rng.uniform(0.0, 9.0), rng.uniform(0.0, 9.0), rng.uniform(0.0, 9.0)},
        rng.uniform(-1.5, 3.0));
  }
  std::ostringstream out(std::ios::binary);
  tree.save(out);
  std::istringstream in(out.str());
  const auto loaded = OccupancyOctree::load(in);

  CHECK(loaded.resolution() == tree.resolution());
  CHECK(loaded.depth() == tree.depth());
  CHECK(loaded.leaf_count() == tree.leaf_count());
  const auto la = leaves_of(tree);
  const auto lb = leaves_of(loaded);
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i].first == lb[i].first);
    CHECK(la[i].second == lb[i].second);
  }

  std::ostringstream out2(std::ios::binary);
  loaded.save(out2);
  CHECK(out.str() == out2.str());  // byte-identical after a round trip
}

TEST_CASE("load rejects a corrupt header") {
  std::istringstream in("not-an-octree 1\n");
  CHECK_THROWS(OccupancyOctree::load(in));
}

TEST_CASE("constructor validates its inputs") {
  CHECK_THROWS(OccupancyOctree(0.0, {{0, 0, 0}, {1, 1, 1}}));
  CHECK_THROWS(OccupancyOctree(0.15, {{1, 0, 0}, {0, 1, 1}}));
  octree::OccupancyParams params;
  params.max_depth = 2;  // 4 voxels per axis cannot cover 9.6 m at 0.15 m
  CHECK_THROWS(OccupancyOctree(0.15, {{0, 0, 0}, {9.6, 9.6, 9.6}}, params));
}
