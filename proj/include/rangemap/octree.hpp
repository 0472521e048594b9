#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rangemap/geo.hpp"

namespace rangemap::octree {

using geo::LocalPoint;

struct Aabb {
  LocalPoint min;
  LocalPoint max;

  bool contains(const LocalPoint& p) const {
    return p.east >= min.east && p.east <= max.east && p.north >= min.north &&
           p.north <= max.north && p.up >= min.up && p.up <= max.up;
  }
};

/// Ray with unit direction. Construct through `from` so the invariant
/// |direction| = 1 (within 1e-12) always holds.
struct Ray {
  LocalPoint origin;
  LocalPoint direction;

  static Ray from(const LocalPoint& origin, const LocalPoint& dir);
};

struct RayBoxHit {
  double t_enter;
  double t_exit;
};

/// Parametric slab intersection of a ray with a box, restricted to t >= 0.
/// Axis-parallel components are handled by explicit slab membership tests,
/// not by dividing through zero.
std::optional<RayBoxHit> ray_box_intersect(const Ray& r, const Aabb& b);

struct VoxelIndex {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  auto operator<=>(const VoxelIndex&) const = default;
};

struct OccupancyParams {
  double log_odds_hit = 0.85;
  double log_odds_miss = -0.4;
  double clamp_min = -2.0;
  double clamp_max = 3.5;
  int max_depth = 16;
  bool carve_free_space = true;  // switchable free-space carving on insert
};

enum class VoxelState { kUnknown, kFree, kOccupied };

struct OccupancyQuery {
  double probability;  // logistic(log-odds); 0.5 for unknown
  VoxelState state;
};

/// Sparse log-odds occupancy octree over a cubic power-of-two voxel grid.
///
/// The tree is anchored at the min corner of the requested region; the root
/// cube edge is resolution * 2^depth with the smallest depth (capped at
/// max_depth) that covers the request. All node boxes derive from integer
/// voxel indices, so octant subdivision is bit-exact. A voxel counts as
/// occupied when its probability exceeds 0.5.
///
/// Concurrent reads are safe; insertion requires exclusive access.
class OccupancyOctree {
public:
  OccupancyOctree(double resolution, const Aabb& region,
                  const OccupancyParams& params = {});

  double resolution() const { return resolution_; }
  int depth() const { return depth_; }
  const Aabb& bounds() const { return bounds_; }
  const OccupancyParams& params() const { return params_; }
  std::size_t leaf_count() const { return leaf_count_; }

  /// Integrate one scan. Endpoint voxels receive hit updates; traversed
  /// voxels receive miss updates when carving is enabled. Points outside the
  /// tree bounds are clipped to the bound surface and contribute free-space
  /// evidence only. Per scan, updates are accumulated per voxel as integer
  /// hit/miss counts and applied in voxel order, so the result does not
  /// depend on the order of the points; a voxel with at least one hit takes
  /// only the hit updates.
  void insert_scan(const LocalPoint& sensor_origin, std::span<const LocalPoint> points);

  OccupancyQuery query_occupancy(const LocalPoint& p) const;

  /// Center of the first occupied voxel along the ray, front to back, or
  /// nullopt when none lies within max_range. When the ray exits the current
  /// voxel exactly through a corner or edge, the next voxel is the candidate
  /// with the smallest (x, then y, then z) index.
  std::optional<LocalPoint> raycast_first_occupied(const Ray& r, double max_range) const;

  struct OccupiedRun {
    LocalPoint entry;  // center of the first occupied voxel
    LocalPoint exit;   // center of the last voxel of the contiguous run
  };

  /// First contiguous run of occupied voxels along the ray (gaps of at most
  /// one free/unknown voxel are bridged, so a sparsely sampled surface still
  /// reads as one object).
  std::optional<OccupiedRun> raycast_occupied_run(const Ray& r, double max_range) const;

  /// Direct log-odds update of a single voxel (clamped). Returns false when
  /// the point/index is outside the grid.
  bool add_log_odds(const LocalPoint& p, double delta);
  bool add_log_odds(const VoxelIndex& v, double delta);

  std::optional<double> log_odds_at(const VoxelIndex& v) const;
  std::optional<VoxelIndex> voxel_of(const LocalPoint& p) const;
  LocalPoint voxel_center(const VoxelIndex& v) const;
  Aabb voxel_box(const VoxelIndex& v) const;

  /// Box of an internal node addressed by (depth, index at that depth).
  Aabb node_box(int node_depth, const VoxelIndex& v) const;

  /// Visit stored leaves in deterministic z-order traversal order.
  void for_each_leaf(const std::function<void(const VoxelIndex&, double)>& fn) const;
  /// Visit every stored node (internal and leaf) with its depth and index.
  void for_each_node(const std::function<void(int, const VoxelIndex&)>& fn) const;

  /// Binary dump: text header (resolution, bounds, count) followed by
  /// little-endian records of (u8 depth, 3 x i32 voxel index, f64 log-odds).
  void save(std::ostream& out) const;
  static OccupancyOctree load(std::istream& in);

private:
  struct Node {
    double log_odds = 0.0;
    std::array<std::unique_ptr<Node>, 8> children;
    bool is_leaf() const {
      for (const auto& c : children) {
        if (c) return false;
      }
      return true;
    }
  };

  bool in_grid(const VoxelIndex& v) const;
  VoxelIndex voxel_of_unchecked(const LocalPoint& p) const;
  Node* find_leaf(const VoxelIndex& v) const;
  Node& make_leaf(const VoxelIndex& v);
  void apply_update(const VoxelIndex& v, double delta);
  bool voxel_occupied(const VoxelIndex& v) const;

  /// Exact voxel walk along [p0, p1]; calls fn for every traversed voxel in
  /// order. Returns early when fn returns true.
  void walk_segment(const LocalPoint& p0, const LocalPoint& p1,
                    const std::function<bool(const VoxelIndex&)>& fn) const;

  double resolution_;
  int depth_;
  std::int32_t grid_size_;  // voxels per axis = 2^depth
  LocalPoint origin_;       // min corner of the root cube
  Aabb bounds_;             // root cube extent
  OccupancyParams params_;
  std::unique_ptr<Node> root_;
  std::size_t leaf_count_ = 0;
};

}  // namespace rangemap::octree
