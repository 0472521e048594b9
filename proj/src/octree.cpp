#include "rangemap/octree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>

namespace rangemap::octree {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double axis(const LocalPoint& p, int a) {
  switch (a) {
    case 0: return p.east;
    case 1: return p.north;
    default: return p.up;
  }
}

std::int32_t& idx_axis(VoxelIndex& v, int a) {
  switch (a) {
    case 0: return v.x;
    case 1: return v.y;
    default: return v.z;
  }
}

std::int32_t idx_axis(const VoxelIndex& v, int a) {
  switch (a) {
    case 0: return v.x;
    case 1: return v.y;
    default: return v.z;
  }
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

void put_i32_le(std::ostream& out, std::int32_t v) {
  const auto u = static_cast<std::uint32_t>(v);
  char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
               static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
  out.write(b, 4);
}

void put_f64_le(std::ostream& out, double v) {
  const auto u = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint8_t get_u8(std::istream& in) {
  char c = 0;
  in.get(c);
  return static_cast<std::uint8_t>(c);
}

std::int32_t get_i32_le(std::istream& in) {
  char b[4];
  in.read(b, 4);
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return static_cast<std::int32_t>(u);
}

double get_f64_le(std::istream& in) {
  char b[8];
  in.read(b, 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return std::bit_cast<double>(u);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Ray Ray::from(const LocalPoint& origin, const LocalPoint& dir) {
  const double n = dir.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("Ray::from: direction must be nonzero and finite");
  }
  return Ray{origin, {dir.east / n, dir.north / n, dir.up / n}};
}

std::optional<RayBoxHit> ray_box_intersect(const Ray& r, const Aabb& b) {
  double t_lo = -kInf;
  double t_hi = kInf;
  for (int a = 0; a < 3; ++a) {
    const double o = axis(r.origin, a);
    const double d = axis(r.direction, a);
    const double mn = axis(b.min, a);
    const double mx = axis(b.max, a);
    if (d == 0.0) {
      if (o < mn || o > mx) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / d;
    double ta = (mn - o) * inv;
    double tb = (mx - o) * inv;
    if (ta > tb) std::swap(ta, tb);
    t_lo = std::max(t_lo, ta);
    t_hi = std::min(t_hi, tb);
    if (t_lo > t_hi) return std::nullopt;
  }
  if (t_hi < 0.0) return std::nullopt;
  return RayBoxHit{std::max(t_lo, 0.0), t_hi};
}

OccupancyOctree::OccupancyOctree(double resolution, const Aabb& region, const OccupancyParams& params)
    : resolution_(resolution), params_(params), root_(std::make_unique<Node>()) {
  if (!(resolution > 0.0)) throw std::invalid_argument("octree: resolution must be > 0");
  if (!(region.min.east <= region.max.east && region.min.north <= region.max.north &&
        region.min.up <= region.max.up)) {
    throw std::invalid_argument("octree: region min must be <= max componentwise");
  }
  if (!(params.clamp_min <= params.clamp_max)) {
    throw std::invalid_argument("octree: clamp interval inverted");
  }
  const double extent = std::max({region.max.east - region.min.east,
                                  region.max.north - region.min.north,
                                  region.max.up - region.min.up, resolution});
  int d = 0;
  while (resolution * static_cast<double>(std::int64_t{1} << d) < extent) {
    ++d;
    if (d > params.max_depth) {
      throw std::invalid_argument("octree: region does not fit within max_depth levels");
    }
  }
  depth_ = d;
  grid_size_ = static_cast<std::int32_t>(std::int64_t{1} << depth_);
  origin_ = region.min;
  const double edge = resolution * static_cast<double>(grid_size_);
  bounds_ = {origin_, {origin_.east + edge, origin_.north + edge, origin_.up + edge}};
}

bool OccupancyOctree::in_grid(const VoxelIndex& v) const {
  return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < grid_size_ && v.y < grid_size_ && v.z < grid_size_;
}

VoxelIndex OccupancyOctree::voxel_of_unchecked(const LocalPoint& p) const {
  return {static_cast<std::int32_t>(std::floor((p.east - origin_.east) / resolution_)),
          static_cast<std::int32_t>(std::floor((p.north - origin_.north) / resolution_)),
          static_cast<std::int32_t>(std::floor((p.up - origin_.up) / resolution_))};
}

std::optional<VoxelIndex> OccupancyOctree::voxel_of(const LocalPoint& p) const {
  VoxelIndex v = voxel_of_unchecked(p);
  // Points exactly on the far surface belong to the boundary voxel inside.
  if (v.x == grid_size_ && p.east == bounds_.max.east) v.x = grid_size_ - 1;
  if (v.y == grid_size_ && p.north == bounds_.max.north) v.y = grid_size_ - 1;
  if (v.z == grid_size_ && p.up == bounds_.max.up) v.z = grid_size_ - 1;
  if (!in_grid(v)) return std::nullopt;
  return v;
}

LocalPoint OccupancyOctree::voxel_center(const VoxelIndex& v) const {
  return {origin_.east + resolution_ * (static_cast<double>(v.x) + 0.5),
          origin_.north + resolution_ * (static_cast<double>(v.y) + 0.5),
          origin_.up + resolution_ * (static_cast<double>(v.z) + 0.5)};
}

Aabb OccupancyOctree::voxel_box(const VoxelIndex& v) const { return node_box(depth_, v); }

Aabb OccupancyOctree::node_box(int node_depth, const VoxelIndex& v) const {
  const std::int64_t scale = std::int64_t{1} << (depth_ - node_depth);
  const auto lo = [&](std::int32_t i) { return static_cast<double>(static_cast<std::int64_t>(i) * scale); };
  return {{origin_.east + resolution_ * lo(v.x), origin_.north + resolution_ * lo(v.y),
           origin_.up + resolution_ * lo(v.z)},
          {origin_.east + resolution_ * lo(v.x + 1), origin_.north + resolution_ * lo(v.y + 1),
           origin_.up + resolution_ * lo(v.z + 1)}};
}

OccupancyOctree::Node* OccupancyOctree::find_leaf(const VoxelIndex& v) const {
  if (!in_grid(v)) return nullptr;
  Node* n = root_.get();
  for (int level = depth_ - 1; level >= 0; --level) {
    const int c = ((v.x >> level) & 1) | (((v.y >> level) & 1) << 1) | (((v.z >> level) & 1) << 2);
    n = n->children[c].get();
    if (n == nullptr) return nullptr;
  }
  return n;
}

OccupancyOctree::Node& OccupancyOctree::make_leaf(const VoxelIndex& v) {
  Node* n = root_.get();
  for (int level = depth_ - 1; level >= 0; --level) {
    const int c = ((v.x >> level) & 1) | (((v.y >> level) & 1) << 1) | (((v.z >> level) & 1) << 2);
    if (!n->children[c]) {
      n->children[c] = std::make_unique<Node>();
      if (level == 0) ++leaf_count_;
    }
    n = n->children[c].get();
  }
  return *n;
}

void OccupancyOctree::apply_update(const VoxelIndex& v, double delta) {
  Node& leaf = make_leaf(v);
  leaf.log_odds = std::clamp(leaf.log_odds + delta, params_.clamp_min, params_.clamp_max);
}

bool OccupancyOctree::voxel_occupied(const VoxelIndex& v) const {
  const Node* leaf = find_leaf(v);
  return leaf != nullptr && leaf->log_odds > 0.0;
}

bool OccupancyOctree::add_log_odds(const LocalPoint& p, double delta) {
  const auto v = voxel_of(p);
  if (!v) return false;
  apply_update(*v, delta);
  return true;
}

bool OccupancyOctree::add_log_odds(const VoxelIndex& v, double delta) {
  if (!in_grid(v)) return false;
  apply_update(v, delta);
  return true;
}

void OccupancyOctree::walk_segment(const LocalPoint& p0, const LocalPoint& p1,
                                   const std::function<bool(const VoxelIndex&)>& fn) const {
  // Callers pass clipped segments; rounding can still leave an endpoint a
  // hair outside the grid, so indices are clamped onto it.
  const auto clamp_idx = [&](VoxelIndex v) {
    v.x = std::clamp(v.x, 0, grid_size_ - 1);
    v.y = std::clamp(v.y, 0, grid_size_ - 1);
    v.z = std::clamp(v.z, 0, grid_size_ - 1);
    return v;
  };
  VoxelIndex v = clamp_idx(voxel_of_unchecked(p0));
  const VoxelIndex v_end = clamp_idx(voxel_of_unchecked(p1));

  const LocalPoint d = p1 - p0;
  int step[3];
  double t_max[3], t_delta[3];
  for (int a = 0; a < 3; ++a) {
    const double da = axis(d, a);
    if (da > 0.0) {
      step[a] = 1;
      const double boundary = axis(origin_, a) + resolution_ * static_cast<double>(idx_axis(v, a) + 1);
      t_max[a] = (boundary - axis(p0, a)) / da;
      t_delta[a] = resolution_ / da;
    } else if (da < 0.0) {
      step[a] = -1;
      const double boundary = axis(origin_, a) + resolution_ * static_cast<double>(idx_axis(v, a));
      t_max[a] = (boundary - axis(p0, a)) / da;
      t_delta[a] = resolution_ / -da;
    } else {
      step[a] = 0;
      t_max[a] = kInf;
      t_delta[a] = kInf;
    }
  }

  const long max_steps =
      3L * (std::abs(v_end.x - v.x) + std::abs(v_end.y - v.y) + std::abs(v_end.z - v.z)) + 3L * grid_size_ + 8;
  for (long i = 0; i < max_steps; ++i) {
    if (fn(v)) return;
    if (v == v_end) return;
    const double t_next = std::min({t_max[0], t_max[1], t_max[2]});
    if (!(t_next <= 1.0)) return;
    // Corner/edge tie rule: among tied axes step every axis moving toward
    // smaller indices; if all tied axes move up, step only the last one.
    // This makes the next voxel the lexicographically smallest candidate.
    bool tied[3] = {t_max[0] == t_next, t_max[1] == t_next, t_max[2] == t_next};
    const int n_tied = tied[0] + tied[1] + tied[2];
    bool stepped_any = false;
    if (n_tied > 1) {
      for (int a = 0; a < 3; ++a) {
        if (tied[a] && step[a] < 0) {
          idx_axis(v, a) += step[a];
          t_max[a] += t_delta[a];
          stepped_any = true;
        }
      }
    }
    if (!stepped_any) {
      int last = -1;
      for (int a = 0; a < 3; ++a) {
        if (tied[a]) last = a;
      }
      idx_axis(v, last) += step[last];
      t_max[last] += t_delta[last];
    }
    if (!in_grid(v)) return;
  }
}

void OccupancyOctree::insert_scan(const LocalPoint& sensor_origin, std::span<const LocalPoint> points) {
  // Per-scan integer accumulation keeps the update independent of point order.
  std::map<VoxelIndex, std::pair<int, int>> counts;  // voxel -> (hits, misses)

  for (const LocalPoint& p : points) {
    LocalPoint seg_a = sensor_origin;
    LocalPoint seg_b = p;
    bool endpoint_hit = true;

    if (!bounds_.contains(seg_a) || !bounds_.contains(seg_b)) {
      const LocalPoint d = seg_b - seg_a;
      const double len = d.norm();
      if (len == 0.0) continue;
      const Ray r = Ray::from(seg_a, d);
      const auto hit = ray_box_intersect(r, bounds_);
      if (!hit || hit->t_enter > len) continue;
      const double t0 = hit->t_enter;
      const double t1 = std::min(hit->t_exit, len);
      if (t1 < len) endpoint_hit = false;  // endpoint clipped away: free ray only
      seg_b = seg_a + r.direction * t1;
      seg_a = seg_a + r.direction * t0;
    }

    const auto end_voxel = voxel_of(seg_b);
    if (endpoint_hit && end_voxel) {
      counts[*end_voxel].first += 1;
    }
    if (params_.carve_free_space) {
      walk_segment(seg_a, seg_b, [&](const VoxelIndex& v) {
        if (!(endpoint_hit && end_voxel && v == *end_voxel)) {
          counts[v].second += 1;
        }
        return false;
      });
    }
  }

  for (const auto& [v, hm] : counts) {
    const auto [hits, misses] = hm;
    // A voxel with at least one endpoint in this scan takes only hit updates.
    if (hits > 0) {
      apply_update(v, hits * params_.log_odds_hit);
    } else if (misses > 0) {
      apply_update(v, misses * params_.log_odds_miss);
    }
  }
}

OccupancyQuery OccupancyOctree::query_occupancy(const LocalPoint& p) const {
  const auto v = voxel_of(p);
  const Node* leaf = v ? find_leaf(*v) : nullptr;
  if (leaf == nullptr) {
    return {0.5, VoxelState::kUnknown};
  }
  const double prob = logistic(leaf->log_odds);
  return {prob, leaf->log_odds > 0.0 ? VoxelState::kOccupied : VoxelState::kFree};
}

std::optional<double> OccupancyOctree::log_odds_at(const VoxelIndex& v) const {
  const Node* leaf = find_leaf(v);
  if (leaf == nullptr) return std::nullopt;
  return leaf->log_odds;
}

std::optional<LocalPoint> OccupancyOctree::raycast_first_occupied(const Ray& r, double max_range) const {
  if (!(max_range > 0.0)) throw std::invalid_argument("raycast_first_occupied: max_range must be > 0");
  const auto hit = ray_box_intersect(r, bounds_);
  if (!hit || hit->t_enter > max_range) return std::nullopt;
  const double t0 = hit->t_enter;
  const double t1 = std::min(hit->t_exit, max_range);
  const LocalPoint p0 = r.origin + r.direction * t0;
  const LocalPoint p1 = r.origin + r.direction * t1;

  std::optional<LocalPoint> found;
  walk_segment(p0, p1, [&](const VoxelIndex& v) {
    if (voxel_occupied(v)) {
      found = voxel_center(v);
      return true;
    }
    return false;
  });
  return found;
}

std::optional<OccupancyOctree::OccupiedRun> OccupancyOctree::raycast_occupied_run(
    const Ray& r, double max_range) const {
  if (!(max_range > 0.0)) throw std::invalid_argument("raycast_occupied_run: max_range must be > 0");
  const auto hit = ray_box_intersect(r, bounds_);
  if (!hit || hit->t_enter > max_range) return std::nullopt;
  const LocalPoint p0 = r.origin + r.direction * hit->t_enter;
  const LocalPoint p1 = r.origin + r.direction * std::min(hit->t_exit, max_range);

  // An object's interior is never carved, so unknown voxels behind the
  // entry surface still belong to the run; free voxels end it. The length
  // cap keeps separate structures from chaining through unknown space.
  constexpr double kMaxRunLength = 3.0;  // meters
  std::optional<OccupiedRun> run;
  int free_gap = 0;
  walk_segment(p0, p1, [&](const VoxelIndex& v) {
    const Node* leaf = find_leaf(v);
    const bool occupied = leaf != nullptr && leaf->log_odds > 0.0;
    const bool free = leaf != nullptr && leaf->log_odds <= 0.0;
    if (occupied) {
      if (!run) {
        run = OccupiedRun{voxel_center(v), voxel_center(v)};
      } else {
        run->exit = voxel_center(v);
      }
      free_gap = 0;
      return false;
    }
    if (!run) return false;
    if ((voxel_center(v) - run->entry).norm() > kMaxRunLength) return true;
    if (free && ++free_gap > 1) return true;
    return false;
  });
  return run;
}

void OccupancyOctree::for_each_leaf(const std::function<void(const VoxelIndex&, double)>& fn) const {
  std::function<void(const Node&, int, VoxelIndex)> walk = [&](const Node& n, int level, VoxelIndex v) {
    if (level == depth_) {
      fn(v, n.log_odds);
      return;
    }
    for (int c = 0; c < 8; ++c) {
      if (n.children[c]) {
        walk(*n.children[c], level + 1,
             {v.x * 2 + (c & 1), v.y * 2 + ((c >> 1) & 1), v.z * 2 + ((c >> 2) & 1)});
      }
    }
  };
  walk(*root_, 0, {0, 0, 0});
}

void OccupancyOctree::for_each_node(const std::function<void(int, const VoxelIndex&)>& fn) const {
  std::function<void(const Node&, int, VoxelIndex)> walk = [&](const Node& n, int level, VoxelIndex v) {
    fn(level, v);
    if (level == depth_) return;
    for (int c = 0; c < 8; ++c) {
      if (n.children[c]) {
        walk(*n.children[c], level + 1,
             {v.x * 2 + (c & 1), v.y * 2 + ((c >> 1) & 1), v.z * 2 + ((c >> 2) & 1)});
      }
    }
  };
  walk(*root_, 0, {0, 0, 0});
}

void OccupancyOctree::save(std::ostream& out) const {
  out << "rangemap-octree 1\n";
  out << "resolution " << fmt_double(resolution_) << "\n";
  out << "origin " << fmt_double(origin_.east) << " " << fmt_double(origin_.north) << " "
      << fmt_double(origin_.up) << "\n";
  out << "depth " << depth_ << "\n";
  out << "bounds " << fmt_double(bounds_.min.east) << " " << fmt_double(bounds_.min.north) << " "
      << fmt_double(bounds_.min.up) << " " << fmt_double(bounds_.max.east) << " "
      << fmt_double(bounds_.max.north) << " " << fmt_double(bounds_.max.up) << "\n";
  out << "params " << fmt_double(params_.log_odds_hit) << " " << fmt_double(params_.log_odds_miss)
      << " " << fmt_double(params_.clamp_min) << " " << fmt_double(params_.clamp_max) << " "
      << params_.max_depth << " " << (params_.carve_free_space ? 1 : 0) << "\n";
  out << "count " << leaf_count_ << "\n";
  for_each_leaf([&](const VoxelIndex& v, double lo) {
    put_u8(out, static_cast<std::uint8_t>(depth_));
    put_i32_le(out, v.x);
    put_i32_le(out, v.y);
    put_i32_le(out, v.z);
    put_f64_le(out, lo);
  });
}

OccupancyOctree OccupancyOctree::load(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "rangemap-octree" || version != 1) {
    throw std::runtime_error("octree load: unrecognized header '" + magic + "'");
  }
  std::string key;
  double resolution = 0.0;
  LocalPoint origin;
  int depth = 0;
  Aabb bounds{};
  OccupancyParams params;
  std::size_t count = 0;
  int carve = 1;
  in >> key >> resolution;
  in >> key >> origin.east >> origin.north >> origin.up;
  in >> key >> depth;
  in >> key >> bounds.min.east >> bounds.min.north >> bounds.min.up >> bounds.max.east >>
      bounds.max.north >> bounds.max.up;
  in >> key >> params.log_odds_hit >> params.log_odds_miss >> params.clamp_min >> params.clamp_max >>
      params.max_depth >> carve;
  in >> key >> count;
  params.carve_free_space = carve != 0;
  if (!in) throw std::runtime_error("octree load: malformed header");
  in.get();  // trailing newline before binary section

  OccupancyOctree tree(resolution, {origin, origin}, params);
  // The header depth is authoritative; recompute the grid from it so the
  // cube matches the saved tree exactly.
  tree.depth_ = depth;
  tree.grid_size_ = static_cast<std::int32_t>(std::int64_t{1} << depth);
  tree.bounds_ = bounds;
  for (std::size_t i = 0; i < count; ++i) {
    const int d = get_u8(in);
    VoxelIndex v{get_i32_le(in), get_i32_le(in), get_i32_le(in)};
    const double lo = get_f64_le(in);
    if (!in) throw std::runtime_error("octree load: truncated record stream");
    if (d != depth || !tree.in_grid(v)) {
      throw std::runtime_error("octree load: record outside the stored grid");
    }
    tree.make_leaf(v).log_odds = lo;
  }
  return tree;
}

}  // namespace rangemap::octree
