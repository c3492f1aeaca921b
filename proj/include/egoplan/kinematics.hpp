// Dual-arm serial-chain forward kinematics, joint limits and the collision
// sphere body decomposition.
//
// Each arm is a chain of seven revolute joints. Link frame i is
//   frame(i) = frame(i-1) * offset(i) * Rot(axis(i), q(i))
// with frame(-1) = torso_frame * base. The hand frame is frame(6) * tool.
#pragma once

#include "egoplan/core.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace egoplan {

struct JointSpec {
  std::string name;
  Vec3 axis = Vec3::UnitZ();  // unit, in the joint's own frame
  Pose offset;                // fixed transform from the parent frame
  double lower = -kPi;
  double upper = kPi;
};

struct LinkSphere {
  int link = 0;  // 0..6 within the arm
  Vec3 center = Vec3::Zero();
  double radius = 0.05;
};

struct ArmModel {
  std::array<JointSpec, kJointsPerArm> joints;
  Pose base;  // arm root in the torso frame
  Pose tool;  // hand frame relative to the last link
  std::vector<LinkSphere> spheres;

  /// Upper bound on the hand's distance from the arm root.
  double reach() const {
    double r = tool.translation.norm();
    for (const auto& j : joints) r += j.offset.translation.norm();
    return r;
  }
};

struct RobotModel {
  ArmModel left;
  ArmModel right;
  Pose torso_frame;  // world
  Pose head_frame;   // torso-relative
  std::vector<BodySphere> torso_spheres;  // torso frame
  bool nominal = true;

  const ArmModel& arm(Side s) const { return s == Side::left ? left : right; }
  ArmModel& arm(Side s) { return s == Side::left ? left : right; }

  std::size_t sphere_count() const {
    return left.spheres.size() + right.spheres.size() + torso_spheres.size();
  }

  /// Shoulder midpoint in the world frame.
  Vec3 shoulder_center() const {
    return 0.5 * (torso_frame.apply(left.base.translation) +
                  torso_frame.apply(right.base.translation));
  }

  void validate() const;
};

inline void RobotModel::validate() const {
  require(torso_frame.is_valid() && head_frame.is_valid(), "robot model: invalid torso/head pose");
  for (Side s : kSides) {
    const ArmModel& a = arm(s);
    std::string tag = "robot model: " + std::string(side_name(s)) + " arm ";
    require(a.base.is_valid() && a.tool.is_valid(), tag + "has an invalid base/tool pose");
    for (const auto& j : a.joints) {
      require(std::abs(j.axis.norm() - 1.0) < 1e-9, tag + j.name + " axis is not unit length");
      require(j.offset.is_valid(), tag + j.name + " offset is invalid");
      require(j.lower < j.upper, tag + j.name + " has lower >= upper");
    }
    for (const auto& sp : a.spheres) {
      require(sp.radius > 0.0, tag + "sphere radius must be positive");
      require(sp.link >= 0 && sp.link < kJointsPerArm, tag + "sphere link index out of range");
    }
  }
  for (const auto& sp : torso_spheres) require(sp.radius > 0.0, "robot model: torso sphere radius");

  // Mirror consistency about the torso xz-plane: axes are pseudovectors.
  const Mat3 mirror = Vec3(1.0, -1.0, 1.0).asDiagonal();
  for (int i = 0; i < kJointsPerArm; ++i) {
    const Vec3 mirrored = -(mirror * left.joints[i].axis);
    require((mirrored - right.joints[i].axis).norm() < 1e-9,
            "robot model: arms are not mirror-consistent at joint " + left.joints[i].name);
  }
  require(left.spheres.size() == right.spheres.size(),
          "robot model: arms carry different sphere counts");
}

/// Nominal humanoid geometry: upper arm 0.25 m, forearm 0.25 m, hand 0.10 m,
/// shoulders 0.40 m apart, torso origin 1.0 m above the floor. Arms hang
/// along -z at q = 0; x is forward, y is left.
inline RobotModel default_robot_model() {
  RobotModel m;
  m.torso_frame = Pose::from_translation({0.0, 0.0, 1.0});
  m.head_frame = Pose::from_translation({0.05, 0.0, 0.35});
  m.nominal = true;

  auto build_arm = [](double y_sign) {
    ArmModel a;
    const Vec3 ex = Vec3::UnitX() * (y_sign > 0 ? 1.0 : -1.0);
    const Vec3 ey = Vec3::UnitY();
    const Vec3 ez = Vec3::UnitZ() * (y_sign > 0 ? 1.0 : -1.0);
    const std::array<Vec3, kJointsPerArm> axes{ey, ex, ez, ey, ez, ey, ex};
    const std::array<Vec3, kJointsPerArm> offsets{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(),
                                                  Vec3(0, 0, -0.25), Vec3(0, 0, -0.25),
                                                  Vec3::Zero(), Vec3::Zero()};
    for (int i = 0; i < kJointsPerArm; ++i) {
      a.joints[i].name = std::string(kJointNames[i]);
      a.joints[i].axis = axes[i];
      a.joints[i].offset = Pose::from_translation(offsets[i]);
      a.joints[i].lower = -kPi;
      a.joints[i].upper = kPi;
    }
    a.joints[kElbowPitch].lower = -2.6;
    a.joints[kElbowPitch].upper = 0.0;
    a.base = Pose::from_translation({0.0, 0.2 * y_sign, 0.0});
    a.tool = Pose::from_translation({0.0, 0.0, -0.10});
    for (double z : {0.0, -0.0625, -0.125, -0.1875}) a.spheres.push_back({kShoulderYaw, {0, 0, z}, 0.07});
    for (double z : {0.0, -0.0625, -0.125, -0.1875}) a.spheres.push_back({kElbowPitch, {0, 0, z}, 0.06});
    for (double z : {0.0, -0.035, -0.07, -0.10}) a.spheres.push_back({kWristRoll, {0, 0, z}, 0.05});
    return a;
  };
  m.left = build_arm(+1.0);
  m.right = build_arm(-1.0);
  for (double z : {-0.05, -0.25, -0.45, -0.65}) m.torso_spheres.push_back({{0.0, 0.0, z}, 0.10});
  return m;
}

// ---------------------------------------------------------------------------

struct FkResult {
  std::array<Pose, kNumJoints> links;  // [left 0..6, right 0..6]
  std::array<Pose, 2> hands;           // [left, right]

  const Pose& link(Side s, int i) const { return links[side_index(s) * kJointsPerArm + i]; }
  const Pose& hand(Side s) const { return hands[side_index(s)]; }
};

inline void require_finite(const JointVector& q) {
  for (int i = 0; i < kNumJoints; ++i)
    if (!std::isfinite(q[i]))
      fail("joint " + std::to_string(i) + " (" + std::string(kJointNames[i % kJointsPerArm]) +
           ") is not finite");
}

inline FkResult forward_kinematics(const RobotModel& model, const JointVector& q) {
  require_finite(q);
  FkResult out;
  for (Side s : kSides) {
    const ArmModel& a = model.arm(s);
    Pose frame = model.torso_frame * a.base;
    for (int i = 0; i < kJointsPerArm; ++i) {
      const JointSpec& j = a.joints[i];
      frame = frame * j.offset * Pose::from_axis_angle(j.axis, q.at(s, i));
      out.links[side_index(s) * kJointsPerArm + i] = frame;
    }
    out.hands[side_index(s)] = frame * a.tool;
  }
  return out;
}

inline Vec3 end_effector_position(const RobotModel& model, const JointVector& q, Side side) {
  return forward_kinematics(model, q).hand(side).translation;
}

/// Which link carries a body sphere; side is empty for torso spheres.
struct SphereOwner {
  std::optional<Side> side;
  int link = -1;
};

/// Sphere order: left arm, right arm, torso.
inline std::vector<SphereOwner> sphere_owners(const RobotModel& model) {
  std::vector<SphereOwner> out;
  out.reserve(model.sphere_count());
  for (Side s : kSides)
    for (const auto& sp : model.arm(s).spheres) out.push_back({s, sp.link});
  for (std::size_t i = 0; i < model.torso_spheres.size(); ++i) out.push_back({std::nullopt, -1});
  return out;
}

inline std::vector<BodySphere> collision_spheres_at(const RobotModel& model, const FkResult& fk) {
  std::vector<BodySphere> out;
  out.reserve(model.sphere_count());
  for (Side s : kSides)
    for (const auto& sp : model.arm(s).spheres)
      out.push_back({fk.link(s, sp.link).apply(sp.center), sp.radius});
  for (const auto& sp : model.torso_spheres)
    out.push_back({model.torso_frame.apply(sp.center), sp.radius});
  return out;
}

inline std::vector<BodySphere> collision_spheres_at(const RobotModel& model, const JointVector& q) {
  return collision_spheres_at(model, forward_kinematics(model, q));
}

/// d(point)/d(q) for a point rigidly attached to `link` of `side`. Columns
/// for joints distal to the link are zero.
inline Eigen::Matrix<double, 3, kJointsPerArm> position_jacobian(const RobotModel& model,
                                                                 const FkResult& fk, Side side,
                                                                 int link, const Vec3& point) {
  Eigen::Matrix<double, 3, kJointsPerArm> jac = Eigen::Matrix<double, 3, kJointsPerArm>::Zero();
  const ArmModel& a = model.arm(side);
  for (int j = 0; j <= link; ++j) {
    const Pose& f = fk.link(side, j);
    jac.col(j) = f.rotate(a.joints[j].axis).cross(point - f.translation);
  }
  return jac;
}

struct LimitViolation {
  int joint = 0;  // 0..13
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

inline std::vector<LimitViolation> check_limits(const RobotModel& model, const JointVector& q) {
  std::vector<LimitViolation> out;
  for (Side s : kSides)
    for (int i = 0; i < kJointsPerArm; ++i) {
      const JointSpec& j = model.arm(s).joints[i];
      const double v = q.at(s, i);
      if (v < j.lower || v > j.upper)
        out.push_back({side_index(s) * kJointsPerArm + i, v, j.lower, j.upper});
    }
  return out;
}

inline bool within_limits(const RobotModel& model, const JointVector& q) {
  return check_limits(model, q).empty();
}

inline JointVector clamp_to_limits(const RobotModel& model, JointVector q) {
  for (Side s : kSides)
    for (int i = 0; i < kJointsPerArm; ++i) {
      const JointSpec& j = model.arm(s).joints[i];
      q.at(s, i) = std::clamp(q.at(s, i), j.lower, j.upper);
    }
  return q;
}

/// Waypoint i is ((n-1-i) q0 + i q1) / (n-1), so reversing the output equals
/// interpolating the swapped endpoints bit for bit.
inline Trajectory linear_interpolate(const JointVector& q0, const JointVector& q1, int steps) {
  require(steps >= 2, "linear_interpolate: steps must be >= 2, got " + std::to_string(steps));
  Trajectory t;
  t.waypoints.resize(static_cast<std::size_t>(steps));
  const double n = steps - 1;
  for (int i = 0; i < steps; ++i) {
    const double a = double(steps - 1 - i) / n;
    const double b = double(i) / n;
    for (int j = 0; j < kNumJoints; ++j) t[i][j] = q0[j] == q1[j] ? q0[j] : a * q0[j] + b * q1[j];
  }
  return t;
}

}  // namespace egoplan
