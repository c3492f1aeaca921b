// Ground-truth obstacle world: analytic signed distances, ray casting with a
// uniform-grid index, point clouds and reachability/density pruning.
#pragma once

#include "egoplan/core.hpp"
#include "egoplan/kinematics.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <unordered_map>
#include <variant>
#include <vector>

namespace egoplan {

struct SphereShape {
  Vec3 center = Vec3::Zero();
  double radius = 0.1;
};

struct BoxShape {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Constant(0.1);
  Quat orientation = Quat::Identity();
};

struct CapsuleShape {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::UnitX();
  double radius = 0.05;
};

using Obstacle = std::variant<SphereShape, BoxShape, CapsuleShape>;

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool empty() const { return (lo.array() > hi.array()).any(); }
  void extend(const Aabb& o) {
    lo = lo.cwiseMin(o.lo);
    hi = hi.cwiseMax(o.hi);
  }
  bool contains(const Aabb& o, double tol = 1e-9) const {
    return (o.lo.array() >= lo.array() - tol).all() && (o.hi.array() <= hi.array() + tol).all();
  }
  /// Euclidean distance from p to the box; zero inside.
  double distance(const Vec3& p) const {
    Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
    return d.norm();
  }
};

// ---------------------------------------------------------------------------
// Per-shape primitives.

inline void validate_obstacle(const Obstacle& o) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SphereShape>) {
          require(s.radius > 0.0 && s.center.allFinite(), "sphere obstacle: radius must be positive");
        } else if constexpr (std::is_same_v<T, BoxShape>) {
          require((s.half_extents.array() > 0.0).all() && s.center.allFinite(),
                  "box obstacle: half-extents must be positive");
          require(std::abs(s.orientation.norm() - 1.0) < 1e-9, "box obstacle: orientation not unit");
        } else {
          require(s.radius > 0.0, "capsule obstacle: radius must be positive");
          require((s.a - s.b).norm() > 0.0, "capsule obstacle: endpoints must be distinct");
        }
      },
      o);
}

inline Aabb bounding_box(const Obstacle& o) {
  return std::visit(
      [](const auto& s) -> Aabb {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SphereShape>) {
          return {s.center.array() - s.radius, s.center.array() + s.radius};
        } else if constexpr (std::is_same_v<T, BoxShape>) {
          Vec3 ext = s.orientation.toRotationMatrix().cwiseAbs() * s.half_extents;
          return {s.center - ext, s.center + ext};
        } else {
          return {s.a.cwiseMin(s.b).array() - s.radius, s.a.cwiseMax(s.b).array() + s.radius};
        }
      },
      o);
}

inline double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

inline double box_sdf_local(const Vec3& local, const Vec3& half) {
  const Vec3 q = local.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

inline double obstacle_sdf(const Obstacle& o, const Vec3& p) {
  return std::visit(
      [&p](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SphereShape>) {
          return (p - s.center).norm() - s.radius;
        } else if constexpr (std::is_same_v<T, BoxShape>) {
          return box_sdf_local(s.orientation.conjugate() * (p - s.center), s.half_extents);
        } else {
          return segment_distance(p, s.a, s.b) - s.radius;
        }
      },
      o);
}

namespace detail {

// Smallest positive root of |o + t d - c|^2 = r^2, unit d.
inline std::optional<double> ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
  const Vec3 oc = o - c;
  const double b = oc.dot(d);
  const double cc = oc.squaredNorm() - r * r;
  const double disc = b * b - cc;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  const double t0 = -b - s;
  if (t0 > 0.0) return t0;
  const double t1 = -b + s;
  if (t1 > 0.0) return t1;
  return std::nullopt;
}

inline std::optional<double> ray_box(const Vec3& o, const Vec3& d, const BoxShape& box) {
  const Quat inv = box.orientation.conjugate();
  const Vec3 lo = inv * (o - box.center);
  const Vec3 ld = inv * d;
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double h = box.half_extents[i];
    if (std::abs(ld[i]) < 1e-300) {
      if (lo[i] < -h || lo[i] > h) return std::nullopt;
      continue;
    }
    double t1 = (-h - lo[i]) / ld[i];
    double t2 = (h - lo[i]) / ld[i];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
  }
  if (tmin > tmax) return std::nullopt;
  if (tmin > 0.0) return tmin;
  if (tmax > 0.0) return tmax;
  return std::nullopt;
}

inline std::optional<double> ray_capsule(const Vec3& o, const Vec3& d, const CapsuleShape& cap) {
  const Vec3 axis_full = cap.b - cap.a;
  const double len = axis_full.norm();
  const Vec3 u = axis_full / len;
  const double r = cap.radius;
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](double t) {
    if (t > 0.0 && t < best) best = t;
  };

  // Lateral surface of the finite cylinder.
  const Vec3 ao = o - cap.a;
  const Vec3 dp = d - d.dot(u) * u;
  const Vec3 op = ao - ao.dot(u) * u;
  const double A = dp.squaredNorm();
  if (A > 1e-300) {
    const double B = 2.0 * dp.dot(op);
    const double C = op.squaredNorm() - r * r;
    const double disc = B * B - 4.0 * A * C;
    if (disc >= 0.0) {
      const double s = std::sqrt(disc);
      for (double t : {(-B - s) / (2.0 * A), (-B + s) / (2.0 * A)}) {
        const double h = (ao + t * d).dot(u);
        if (h >= 0.0 && h <= len) consider(t);
      }
    }
  }
  // End caps: only the hemisphere beyond each endpoint lies on the surface.
  auto cap_hits = [&](const Vec3& c, bool at_a) {
    const Vec3 oc = o - c;
    const double b = oc.dot(d);
    const double cc = oc.squaredNorm() - r * r;
    const double disc = b * b - cc;
    if (disc < 0.0) return;
    const double s = std::sqrt(disc);
    for (double t : {-b - s, -b + s}) {
      const double h = (ao + t * d).dot(u);
      if (at_a ? h <= 0.0 : h >= len) consider(t);
    }
  };
  cap_hits(cap.a, true);
  cap_hits(cap.b, false);
  if (std::isfinite(best)) return best;
  return std::nullopt;
}

}  // namespace detail

/// Smallest positive ray parameter on the obstacle surface (exit surface when
/// the origin is inside).
inline std::optional<double> ray_obstacle(const Obstacle& o, const Vec3& origin, const Vec3& dir) {
  return std::visit(
      [&](const auto& s) -> std::optional<double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SphereShape>) {
          return detail::ray_sphere(origin, dir, s.center, s.radius);
        } else if constexpr (std::is_same_v<T, BoxShape>) {
          return detail::ray_box(origin, dir, s);
        } else {
          return detail::ray_capsule(origin, dir, s);
        }
      },
      o);
}

inline Obstacle transform_obstacle(const Obstacle& o, const Pose& t) {
  return std::visit(
      [&t](const auto& s) -> Obstacle {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SphereShape>) {
          return SphereShape{t.apply(s.center), s.radius};
        } else if constexpr (std::is_same_v<T, BoxShape>) {
          return BoxShape{t.apply(s.center), s.half_extents, (t.rotation * s.orientation).normalized()};
        } else {
          return CapsuleShape{t.apply(s.a), t.apply(s.b), s.radius};
        }
      },
      o);
}

// ---------------------------------------------------------------------------

/// Immutable obstacle set with a uniform-grid index built at construction.
class World {
 public:
  World() = default;
  explicit World(std::vector<Obstacle> obstacles) : obstacles_(std::move(obstacles)) {
    for (const auto& o : obstacles_) {
      validate_obstacle(o);
      boxes_.push_back(bounding_box(o));
      bounds_.extend(boxes_.back());
    }
    build_grid();
  }

  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  const Aabb& bounds() const { return bounds_; }
  const std::vector<Aabb>& obstacle_boxes() const { return boxes_; }
  std::size_t size() const { return obstacles_.size(); }
  bool empty() const { return obstacles_.empty(); }

  World transformed(const Pose& t) const {
    std::vector<Obstacle> moved;
    moved.reserve(obstacles_.size());
    for (const auto& o : obstacles_) moved.push_back(transform_obstacle(o, t));
    return World(std::move(moved));
  }

  World with_obstacle(const Obstacle& o) const {
    auto all = obstacles_;
    all.push_back(o);
    return World(std::move(all));
  }

  // Grid accessors used by the accelerated queries.
  const Eigen::Vector3i& grid_dims() const { return dims_; }
  const Vec3& grid_origin() const { return grid_lo_; }
  const Vec3& cell_size() const { return cell_; }
  const std::vector<int>& cell(int ix, int iy, int iz) const {
    return cells_[static_cast<std::size_t>((iz * dims_.y() + iy) * dims_.x() + ix)];
  }

 private:
  void build_grid() {
    if (obstacles_.empty()) return;
    const int per_axis = std::clamp(static_cast<int>(std::ceil(2.0 * std::cbrt(double(obstacles_.size())))), 1, 32);
    grid_lo_ = bounds_.lo.array() - 1e-6;
    const Vec3 hi = bounds_.hi.array() + 1e-6;
    dims_ = Eigen::Vector3i::Constant(per_axis);
    cell_ = (hi - grid_lo_).array() / dims_.cast<double>().array();
    cells_.assign(static_cast<std::size_t>(dims_.prod()), {});
    for (std::size_t i = 0; i < boxes_.size(); ++i) {
      Eigen::Vector3i a = cell_index(boxes_[i].lo.array() - 1e-9);
      Eigen::Vector3i b = cell_index(boxes_[i].hi.array() + 1e-9);
      for (int z = a.z(); z <= b.z(); ++z)
        for (int y = a.y(); y <= b.y(); ++y)
          for (int x = a.x(); x <= b.x(); ++x)
            cells_[static_cast<std::size_t>((z * dims_.y() + y) * dims_.x() + x)].push_back(int(i));
    }
  }

 public:
  Eigen::Vector3i cell_index(const Vec3& p) const {
    Eigen::Vector3i c;
    for (int k = 0; k < 3; ++k)
      c[k] = std::clamp(static_cast<int>(std::floor((p[k] - grid_lo_[k]) / cell_[k])), 0, dims_[k] - 1);
    return c;
  }

 private:
  std::vector<Obstacle> obstacles_;
  std::vector<Aabb> boxes_;
  Aabb bounds_;
  Eigen::Vector3i dims_ = Eigen::Vector3i::Zero();
  Vec3 grid_lo_ = Vec3::Zero();
  Vec3 cell_ = Vec3::Ones();
  std::vector<std::vector<int>> cells_;
};

/// Unaccelerated reference: min over every obstacle.
inline double sdf_point_bruteforce(const World& world, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : world.obstacles()) best = std::min(best, obstacle_sdf(o, p));
  return best;
}

/// Signed distance to the nearest obstacle surface (+inf for an empty world).
/// Obstacles in p's grid cell are evaluated first; any obstacle whose bounding
/// box is no closer than the running minimum is skipped, which leaves the
/// result identical to the brute-force minimum.
inline double sdf_point(const World& world, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  if (world.empty()) return best;
  const auto& boxes = world.obstacle_boxes();
  const Eigen::Vector3i c = world.cell_index(p);
  for (int i : world.cell(c.x(), c.y(), c.z()))
    best = std::min(best, obstacle_sdf(world.obstacles()[static_cast<std::size_t>(i)], p));
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (boxes[i].distance(p) >= best) continue;
    best = std::min(best, obstacle_sdf(world.obstacles()[i], p));
  }
  return best;
}

inline void require_unit(const Vec3& d) {
  require(std::abs(d.norm() - 1.0) <= 1e-9, "raycast: direction must be unit length");
}

inline std::optional<double> raycast_bruteforce(const World& world, const Vec3& origin,
                                                const Vec3& dir, double max_range) {
  require_unit(dir);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : world.obstacles())
    if (auto t = ray_obstacle(o, origin, dir); t && *t < best) best = *t;
  if (best <= max_range) return best;
  return std::nullopt;
}

/// First surface hit within max_range. Walks the grid cells along the ray
/// (3-D DDA) and stops once the best hit lies inside the current cell.
inline std::optional<double> raycast(const World& world, const Vec3& origin, const Vec3& dir,
                                     double max_range) {
  require_unit(dir);
  if (world.empty()) return std::nullopt;

  const Vec3 lo = world.grid_origin();
  const Vec3 cell = world.cell_size();
  const Eigen::Vector3i dims = world.grid_dims();
  const Vec3 hi = lo.array() + cell.array() * dims.cast<double>().array();

  // Clip to the grid box.
  double t_enter = 0.0;
  double t_exit = max_range;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(dir[k]) < 1e-300) {
      if (origin[k] < lo[k] || origin[k] > hi[k]) return std::nullopt;
      continue;
    }
    double t1 = (lo[k] - origin[k]) / dir[k];
    double t2 = (hi[k] - origin[k]) / dir[k];
    if (t1 > t2) std::swap(t1, t2);
    t_enter = std::max(t_enter, t1);
    t_exit = std::min(t_exit, t2);
  }
  if (t_enter > t_exit) return std::nullopt;

  Eigen::Vector3i idx = world.cell_index(origin + t_enter * dir);
  Eigen::Vector3i step;
  Vec3 t_next;
  Vec3 t_delta;
  for (int k = 0; k < 3; ++k) {
    if (dir[k] > 0.0) {
      step[k] = 1;
      t_next[k] = (lo[k] + (idx[k] + 1) * cell[k] - origin[k]) / dir[k];
      t_delta[k] = cell[k] / dir[k];
    } else if (dir[k] < 0.0) {
      step[k] = -1;
      t_next[k] = (lo[k] + idx[k] * cell[k] - origin[k]) / dir[k];
      t_delta[k] = -cell[k] / dir[k];
    } else {
      step[k] = 0;
      t_next[k] = std::numeric_limits<double>::infinity();
      t_delta[k] = std::numeric_limits<double>::infinity();
    }
  }

  double best = std::numeric_limits<double>::infinity();
  std::vector<char> tested(world.size(), 0);
  while (true) {
    for (int i : world.cell(idx.x(), idx.y(), idx.z())) {
      if (tested[static_cast<std::size_t>(i)]) continue;
      tested[static_cast<std::size_t>(i)] = 1;
      if (auto t = ray_obstacle(world.obstacles()[static_cast<std::size_t>(i)], origin, dir);
          t && *t < best)
        best = *t;
    }
    int axis = 0;
    if (t_next[1] < t_next[axis]) axis = 1;
    if (t_next[2] < t_next[axis]) axis = 2;
    const double cell_exit = t_next[axis];
    if (best <= cell_exit || cell_exit > t_exit) break;
    idx[axis] += step[axis];
    if (idx[axis] < 0 || idx[axis] >= dims[axis]) break;
    t_next[axis] += t_delta[axis];
  }
  if (best <= max_range) return best;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Robot body distance.

/// min over spheres of |p - c| - r. Negative when p is inside the body proxy.
inline double robot_sdf(std::span<const BodySphere> spheres, const Vec3& p) {
  require(!spheres.empty(), "robot_sdf: sphere list is empty");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : spheres) best = std::min(best, (p - s.center).norm() - s.radius);
  return best;
}

/// Ray against a set of body spheres.
inline std::optional<double> raycast_spheres(std::span<const BodySphere> spheres, const Vec3& origin,
                                             const Vec3& dir, double max_range) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : spheres)
    if (auto t = detail::ray_sphere(origin, dir, s.center, s.radius); t && *t < best) best = *t;
  if (best <= max_range) return best;
  return std::nullopt;
}

/// Clearance between body spheres and the world: min(sdf(center) - radius).
inline double body_clearance(const World& world, std::span<const BodySphere> spheres) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : spheres) best = std::min(best, sdf_point(world, s.center) - s.radius);
  return best;
}

// ---------------------------------------------------------------------------
// Point clouds.

enum class Provenance : std::uint8_t { egocentric = 0, exocentric = 1, synthetic = 2 };

inline std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::egocentric: return "egocentric";
    case Provenance::exocentric: return "exocentric";
    case Provenance::synthetic: return "synthetic";
  }
  return "unknown";
}

struct PointCloud {
  std::vector<Vec3> points;
  Provenance provenance = Provenance::synthetic;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Binary layout, little endian:
//   char[4] "EPCL" | u32 version (1) | u64 count | u8 provenance | count * 3 * f32
inline constexpr char kCloudMagic[4] = {'E', 'P', 'C', 'L'};
inline constexpr std::uint32_t kCloudVersion = 1;

namespace detail {
template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}
template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw Error(ErrorKind::validation, "binary stream truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}
}  // namespace detail

inline void write_cloud(std::ostream& os, const PointCloud& cloud) {
  os.write(kCloudMagic, 4);
  detail::put_le<std::uint32_t>(os, kCloudVersion);
  detail::put_le<std::uint64_t>(os, cloud.points.size());
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(cloud.provenance));
  for (const auto& p : cloud.points)
    for (int k = 0; k < 3; ++k) detail::put_le<float>(os, static_cast<float>(p[k]));
}

inline PointCloud read_cloud(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCloudMagic, 4) != 0)
    throw Error(ErrorKind::validation, "point cloud: bad magic");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCloudVersion)
    throw Error(ErrorKind::validation, "point cloud: unsupported version " + std::to_string(version));
  const auto count = detail::get_le<std::uint64_t>(is);
  const auto prov = detail::get_le<std::uint8_t>(is);
  if (prov > 2) throw Error(ErrorKind::validation, "point cloud: bad provenance byte");
  PointCloud cloud;
  cloud.provenance = static_cast<Provenance>(prov);
  cloud.points.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = detail::get_le<float>(is);
    if (!p.allFinite()) throw Error(ErrorKind::validation, "point cloud: non-finite point");
    cloud.points.push_back(p);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Pruning.

struct PruneStats {
  std::size_t unreachable = 0;
  std::size_t self_collision = 0;
  std::size_t downsampled = 0;
  double voxel_size = 0.0;  // 0 when no downsampling happened
};

inline constexpr double kReachMargin = 0.1;
inline constexpr double kInitialVoxel = 0.005;

/// Radius of the reachable sphere centred between the shoulders.
inline double reachable_radius(const RobotModel& model) {
  const Vec3 c = model.shoulder_center();
  double r = 0.0;
  for (Side s : kSides)
    r = std::max(r, (model.torso_frame.apply(model.arm(s).base.translation) - c).norm() +
                        model.arm(s).reach());
  return r + kReachMargin;
}

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    return splitmix64(static_cast<std::uint64_t>(k.x) * 73856093ULL ^
                      static_cast<std::uint64_t>(k.y) * 19349663ULL ^
                      static_cast<std::uint64_t>(k.z) * 83492791ULL);
  }
};

inline VoxelKey voxel_of(const Vec3& p, double v) {
  return {static_cast<std::int64_t>(std::floor(p.x() / v)),
          static_cast<std::int64_t>(std::floor(p.y() / v)),
          static_cast<std::int64_t>(std::floor(p.z() / v))};
}

/// Drops points out of reach or inside the body at q, then, if more than
/// max_points remain, keeps one seeded-random representative per voxel using
/// the smallest voxel size (5 mm doubled) whose occupancy fits the budget.
/// Output points keep their input order.
inline PointCloud prune_pointcloud(const PointCloud& cloud, const RobotModel& model,
                                   const JointVector& q, std::size_t max_points,
                                   std::uint64_t seed, PruneStats* stats = nullptr) {
  require(max_points >= 1, "prune_pointcloud: max_points must be >= 1");
  PruneStats st;
  const Vec3 center = model.shoulder_center();
  const double radius = reachable_radius(model);
  const auto spheres = collision_spheres_at(model, q);

  PointCloud kept;
  kept.provenance = cloud.provenance;
  for (const auto& p : cloud.points) {
    if ((p - center).norm() > radius) {
      ++st.unreachable;
      continue;
    }
    if (robot_sdf(spheres, p) <= 0.0) {
      ++st.self_collision;
      continue;
    }
    kept.points.push_back(p);
  }

  if (kept.size() > max_points) {
    double v = kInitialVoxel;
    std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> occupied;
    while (true) {
      occupied.clear();
      for (const auto& p : kept.points) {
        occupied.try_emplace(voxel_of(p, v), 0);
        if (occupied.size() > max_points) break;
      }
      if (occupied.size() <= max_points) break;
      v *= 2.0;
    }
    // Representative per voxel: the point with the smallest seeded hash.
    std::unordered_map<VoxelKey, std::pair<std::uint64_t, std::size_t>, VoxelKeyHash> pick;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const std::uint64_t h = splitmix64(seed ^ splitmix64(i));
      auto [it, inserted] = pick.try_emplace(voxel_of(kept.points[i], v), h, i);
      if (!inserted && h < it->second.first) it->second = {h, i};
    }
    std::vector<std::size_t> chosen;
    chosen.reserve(pick.size());
    for (const auto& [key, val] : pick) chosen.push_back(val.second);
    std::sort(chosen.begin(), chosen.end());
    PointCloud down;
    down.provenance = kept.provenance;
    down.points.reserve(chosen.size());
    for (std::size_t i : chosen) down.points.push_back(kept.points[i]);
    st.downsampled = kept.size() - down.size();
    st.voxel_size = v;
    kept = std::move(down);
  }
  if (stats) *stats = st;
  return kept;
}

}  // namespace egoplan
