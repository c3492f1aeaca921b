// Core value types shared by every egoplan module: joint vectors, rigid
// poses, trajectories, body spheres, error categories and seeded randomness.
#pragma once

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace egoplan {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using Mat3 = Eigen::Matrix3d;

inline constexpr int kJointsPerArm = 7;
inline constexpr int kNumJoints = 2 * kJointsPerArm;
inline constexpr double kControlRateHz = 15.0;
inline constexpr double kPi = 3.14159265358979323846;

enum class Side { left = 0, right = 1 };

inline constexpr std::array<Side, 2> kSides{Side::left, Side::right};

inline constexpr int side_index(Side s) { return s == Side::left ? 0 : 1; }
inline constexpr std::string_view side_name(Side s) { return s == Side::left ? "left" : "right"; }

// Per-arm joint order; every file format and JointVector uses it.
inline constexpr std::array<std::string_view, kJointsPerArm> kJointNames{
    "shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow_pitch",
    "wrist_yaw",      "wrist_pitch",   "wrist_roll"};

enum JointSlot : int {
  kShoulderPitch = 0,
  kShoulderRoll = 1,
  kShoulderYaw = 2,
  kElbowPitch = 3,
  kWristYaw = 4,
  kWristPitch = 5,
  kWristRoll = 6,
};

// ---------------------------------------------------------------------------
// Errors. The category maps one-to-one onto CLI exit codes.

enum class ErrorKind {
  invalid_argument,  // exit 1
  missing_input,     // exit 2
  validation,        // exit 3
  planner,           // exit 4
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& what) {
  throw Error(ErrorKind::invalid_argument, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(what);
}

// ---------------------------------------------------------------------------

/// Both arms' joint angles in radians, ordered [left 7, right 7].
class JointVector {
 public:
  JointVector() { values_.fill(0.0); }
  explicit JointVector(const std::array<double, kNumJoints>& v) : values_(v) {}

  static JointVector constant(double v) {
    JointVector q;
    q.values_.fill(v);
    return q;
  }

  double& operator[](int i) { return values_[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return values_[static_cast<std::size_t>(i)]; }

  double& at(Side s, int joint) { return (*this)[side_index(s) * kJointsPerArm + joint]; }
  double at(Side s, int joint) const { return (*this)[side_index(s) * kJointsPerArm + joint]; }

  std::span<double, kJointsPerArm> arm(Side s) {
    return std::span<double, kJointsPerArm>(values_.data() + side_index(s) * kJointsPerArm,
                                            kJointsPerArm);
  }
  std::span<const double, kJointsPerArm> arm(Side s) const {
    return std::span<const double, kJointsPerArm>(values_.data() + side_index(s) * kJointsPerArm,
                                                  kJointsPerArm);
  }

  const std::array<double, kNumJoints>& values() const { return values_; }
  std::array<double, kNumJoints>& values() { return values_; }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double max_abs_diff(const JointVector& o) const {
    double m = 0.0;
    for (int i = 0; i < kNumJoints; ++i) m = std::max(m, std::abs((*this)[i] - o[i]));
    return m;
  }

  friend bool operator==(const JointVector&, const JointVector&) = default;

 private:
  std::array<double, kNumJoints> values_;
};

/// Waypoints at a fixed timestep (15 Hz unless stated otherwise).
struct Trajectory {
  std::vector<JointVector> waypoints;
  double dt = 1.0 / kControlRateHz;

  std::size_t size() const { return waypoints.size(); }
  bool empty() const { return waypoints.empty(); }
  const JointVector& operator[](std::size_t i) const { return waypoints[i]; }
  JointVector& operator[](std::size_t i) { return waypoints[i]; }
  const JointVector& front() const { return waypoints.front(); }
  const JointVector& back() const { return waypoints.back(); }
  auto begin() const { return waypoints.begin(); }
  auto end() const { return waypoints.end(); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Joint-space linear blend with exact endpoints.
inline JointVector lerp(const JointVector& a, const JointVector& b, double s) {
  JointVector out;
  for (int i = 0; i < kNumJoints; ++i) out[i] = (1.0 - s) * a[i] + s * b[i];
  return out;
}

/// Samples a trajectory `factor` times per waypoint interval by joint-space
/// interpolation; the final waypoint is included once.
inline std::vector<JointVector> oversample(const Trajectory& traj, int factor) {
  std::vector<JointVector> out;
  if (traj.empty()) return out;
  out.reserve((traj.size() - 1) * static_cast<std::size_t>(factor) + 1);
  for (std::size_t i = 0; i + 1 < traj.size(); ++i)
    for (int j = 0; j < factor; ++j)
      out.push_back(j == 0 ? traj[i] : lerp(traj[i], traj[i + 1], double(j) / factor));
  out.push_back(traj.back());
  return out;
}

// ---------------------------------------------------------------------------

/// Rigid transform; rotation is a unit quaternion.
struct Pose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {Quat::Identity(), t}; }
  static Pose from_axis_angle(const Vec3& axis, double angle, const Vec3& t = Vec3::Zero()) {
    return {Quat(Eigen::AngleAxisd(angle, axis.normalized())), t};
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }

  Pose inverse() const {
    Quat inv = rotation.conjugate();
    return {inv, -(inv * translation)};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  bool is_valid() const {
    return std::abs(rotation.norm() - 1.0) <= 1e-9 && translation.allFinite() &&
           rotation.coeffs().allFinite();
  }
};

inline Pose operator*(const Pose& a, const Pose& b) {
  Quat r = a.rotation * b.rotation;
  r.normalize();
  return {r, a.rotation * b.translation + a.translation};
}

/// Frame whose +z looks along `forward`, +x to the right of it (world +z is up).
inline Pose look_along(const Vec3& origin, const Vec3& forward) {
  Vec3 z = forward.normalized();
  Vec3 up = Vec3::UnitZ();
  if (std::abs(z.dot(up)) > 1.0 - 1e-9) up = Vec3::UnitX();
  Vec3 x = z.cross(up).normalized();
  Vec3 y = z.cross(x);
  Mat3 m;
  m.col(0) = x;
  m.col(1) = y;
  m.col(2) = z;
  Quat q(m);
  q.normalize();
  return {q, origin};
}

/// World-frame ball used as the robot body proxy.
struct BodySphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

// ---------------------------------------------------------------------------
// Seeds. Every component draws from its own stream derived from the master
// seed, so results do not depend on evaluation order.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view component,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ fnv1a(component)) + splitmix64(index));
}

/// Seeded generator. Distribution transforms are written out here because the
/// standard library distributions differ between implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) {
    auto i = static_cast<std::size_t>(uniform() * double(n));
    return i < n ? i : n - 1;
  }
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
  Vec3 unit_vector() {
    double z = uniform(-1.0, 1.0);
    double phi = uniform(0.0, 2.0 * kPi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
  }
  Quat rotation() {
    Quat q(normal(), normal(), normal(), normal());
    if (q.norm() < 1e-12) return Quat::Identity();
    q.normalize();
    return q;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace egoplan
