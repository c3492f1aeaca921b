// Expert demonstration scenarios: retargeting of human arm rotations,
// synthetic and imported expert trajectories, tight obstacle placement around
// an expert path, the three scenario kinds, verification and dataset export.
#pragma once

#include "egoplan/core.hpp"
#include "egoplan/geometry.hpp"
#include "egoplan/io.hpp"
#include "egoplan/kinematics.hpp"
#include "egoplan/sensing.hpp"

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace egoplan {

// ---------------------------------------------------------------------------
// Retargeting.

/// Axis-angle rotation vectors of one human arm. Vectors are expressed in the
/// robot arm-base convention (x forward, y left, z up, arm hanging along -z).
struct HumanArmPose {
  Vec3 collar = Vec3::Zero();
  Vec3 shoulder = Vec3::Zero();
  Vec3 elbow = Vec3::Zero();
  Vec3 wrist = Vec3::Zero();
};

struct HumanFrame {
  std::array<HumanArmPose, 2> arms;  // [left, right]
};

struct RetargetResult {
  JointVector raw;      // before clamping
  JointVector q;        // clamped to limits
  std::vector<LimitViolation> clamps;
  bool gimbal = false;  // shoulder roll at +-pi/2 on some arm
};

inline Mat3 axis_angle_matrix(const Vec3& v) {
  const double a = v.norm();
  if (a == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(a, v / a).toRotationMatrix();
}

inline constexpr double kGimbalTolerance = 1e-6;

/// Shoulder joints are pitch(y), roll(x), yaw(z) up to axis sign; the
/// composed collar-shoulder rotation is split as Ry(p) Rx(r) Rz(y). At
/// |r| = pi/2 only p + y is observable and y is set to zero.
inline RetargetResult retarget_frame(const RobotModel& model, const HumanFrame& human) {
  RetargetResult out;
  for (Side s : kSides) {
    const HumanArmPose& h = human.arms[static_cast<std::size_t>(side_index(s))];
    for (const Vec3& v : {h.collar, h.shoulder, h.elbow, h.wrist})
      require(v.allFinite(), "retarget: non-finite axis-angle vector");
    const ArmModel& arm = model.arm(s);
    const double sy = arm.joints[kShoulderPitch].axis.y();
    const double sx = arm.joints[kShoulderRoll].axis.x();
    const double sz = arm.joints[kShoulderYaw].axis.z();
    require(std::abs(std::abs(sy) - 1.0) < 1e-9 && std::abs(std::abs(sx) - 1.0) < 1e-9 &&
                std::abs(std::abs(sz) - 1.0) < 1e-9,
            "retarget: shoulder axes must be +-y, +-x, +-z");

    const Mat3 m = axis_angle_matrix(h.collar) * axis_angle_matrix(h.shoulder);
    const double roll = std::asin(std::clamp(-m(1, 2), -1.0, 1.0));
    double pitch = 0.0, yaw = 0.0;
    if (std::abs(std::abs(roll) - kPi / 2.0) <= kGimbalTolerance) {
      out.gimbal = true;
      pitch = std::atan2(-m(2, 0), m(0, 0));
    } else {
      pitch = std::atan2(m(0, 2), m(2, 2));
      yaw = std::atan2(m(1, 0), m(1, 1));
    }
    out.raw.at(s, kShoulderPitch) = sy * pitch;
    out.raw.at(s, kShoulderRoll) = sx * roll;
    out.raw.at(s, kShoulderYaw) = sz * yaw;
    out.raw.at(s, kElbowPitch) = h.elbow.dot(arm.joints[kElbowPitch].axis);
    for (int j : {kWristYaw, kWristPitch, kWristRoll}) out.raw.at(s, j) = h.wrist.dot(arm.joints[j].axis);
  }
  out.clamps = check_limits(model, out.raw);
  out.q = clamp_to_limits(model, out.raw);
  return out;
}

// ---------------------------------------------------------------------------
// Expert trajectories.

enum class ExpertSource { synthetic, imported };

struct ExpertTrajectory {
  Trajectory traj;
  ExpertSource source = ExpertSource::synthetic;
};

inline constexpr double kMaxStep = 0.5;  // rad between consecutive waypoints

/// Messages for every limit or continuity violation; empty when valid.
inline std::vector<std::string> expert_problems(const RobotModel& model, const Trajectory& t) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!t[i].all_finite()) out.push_back("non-finite waypoint " + std::to_string(i));
    else if (!within_limits(model, t[i])) out.push_back("joint limit violated at waypoint " + std::to_string(i));
    if (i > 0 && t[i].max_abs_diff(t[i - 1]) >= kMaxStep)
      out.push_back("discontinuity between waypoints " + std::to_string(i - 1) + " and " + std::to_string(i));
  }
  return out;
}

struct SynthParams {
  double duration_s = 3.0;
  double amplitude_scale = 1.0;
  int components = 3;
  double min_freq_hz = 0.05;
  double max_freq_hz = 0.5;
};

namespace detail {
// Per joint slot: total sinusoid amplitude (rad) and the comfortable range
// the motion centre is drawn from.
inline constexpr std::array<double, kJointsPerArm> kSynthAmplitude{0.5, 0.3, 0.4, 0.6, 0.4, 0.3, 0.3};
inline constexpr std::array<std::pair<double, double>, kJointsPerArm> kComfort{
    {{-1.6, 0.2}, {0.0, 0.6}, {-0.6, 0.6}, {-2.0, -0.2}, {-0.5, 0.5}, {-0.5, 0.5}, {-0.5, 0.5}}};
}  // namespace detail

/// Sum of low-frequency sinusoids per joint around a sampled centre. The
/// random stream does not depend on the amplitude scale, so a zero scale
/// yields the constant centre pose of the same seed.
inline ExpertTrajectory synth_trajectory(const RobotModel& model, std::uint64_t seed,
                                         const SynthParams& p = {}) {
  require(p.duration_s >= 1.0, "synth_trajectory: duration must be >= 1 s");
  require(p.amplitude_scale >= 0.0 && p.components >= 1, "synth_trajectory: bad style parameters");
  require(p.min_freq_hz > 0.0 && p.min_freq_hz <= p.max_freq_hz && p.max_freq_hz <= 0.5,
          "synth_trajectory: frequencies must lie in (0, 0.5] Hz");
  const auto n = static_cast<std::size_t>(std::llround(p.duration_s * kControlRateHz));
  Rng rng(derive_seed(seed, "datagen.synth"));

  struct Wave {
    double a, f, phi;
  };
  std::array<double, kNumJoints> centre{};
  std::array<std::vector<Wave>, kNumJoints> waves;
  for (Side s : kSides)
    for (int j = 0; j < kJointsPerArm; ++j) {
      const int g = side_index(s) * kJointsPerArm + j;
      const JointSpec& spec = model.arm(s).joints[j];
      double amp = detail::kSynthAmplitude[j] * p.amplitude_scale;
      amp = std::min(amp, 0.45 * (spec.upper - spec.lower));
      // Step bound: sum a 2 pi f dt <= amp * pi / 15 must stay below kMaxStep.
      amp = std::min(amp, 0.9 * kMaxStep * kControlRateHz / (2.0 * kPi * p.max_freq_hz));
      double lo = std::max(detail::kComfort[j].first, spec.lower + amp);
      double hi = std::min(detail::kComfort[j].second, spec.upper - amp);
      if (lo > hi) lo = hi = std::clamp(0.5 * (spec.lower + spec.upper), spec.lower + amp, spec.upper - amp);
      centre[static_cast<std::size_t>(g)] = rng.uniform(lo, hi);
      std::vector<double> w(static_cast<std::size_t>(p.components));
      double total = 0.0;
      for (auto& x : w) total += (x = rng.uniform(0.2, 1.0));
      for (int k = 0; k < p.components; ++k)
        waves[static_cast<std::size_t>(g)].push_back(
            {amp * w[static_cast<std::size_t>(k)] / total, rng.uniform(p.min_freq_hz, p.max_freq_hz),
             rng.uniform(0.0, 2.0 * kPi)});
    }

  ExpertTrajectory out;
  out.source = ExpertSource::synthetic;
  out.traj.waypoints.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = double(k) / kControlRateHz;
    for (int g = 0; g < kNumJoints; ++g) {
      double v = centre[static_cast<std::size_t>(g)];
      for (const auto& w : waves[static_cast<std::size_t>(g)])
        if (w.a != 0.0) v += w.a * std::sin(2.0 * kPi * w.f * t + w.phi);
      out.traj[k][g] = v;
    }
    out.traj[k] = clamp_to_limits(model, out.traj[k]);
  }
  return out;
}

struct ImportResult {
  ExpertTrajectory expert;
  std::size_t frames = 0;
  std::size_t clamped_frames = 0;
  std::size_t gimbal_frames = 0;
  std::vector<std::string> warnings;
};

inline constexpr double kClampWarnFraction = 0.2;

/// Line-delimited JSON: a header {"rate_hz": R} followed by one record per
/// frame {"frame": i, "left": {...}, "right": {...}} where each arm holds
/// "collar", "shoulder", "elbow" and "wrist" axis-angle triples. Frames are
/// retargeted and resampled to 15 Hz by joint-space linear interpolation.
inline ImportResult import_trajectory(const RobotModel& model, std::istream& in) {
  auto bad = [](std::size_t line, const std::string& what) -> Error {
    return Error(ErrorKind::validation, "import: line " + std::to_string(line) + ": " + what);
  };
  std::string text;
  std::size_t line_no = 0;
  std::optional<double> rate;
  std::vector<JointVector> frames;
  ImportResult res;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::exception&) {
      throw bad(line_no, "malformed record");
    }
    if (!rate) {
      if (!j.is_object() || !j.contains("rate_hz") || !j["rate_hz"].is_number())
        throw bad(line_no, "missing rate_hz header");
      rate = j["rate_hz"].get<double>();
      if (!(*rate > 0.0) || !std::isfinite(*rate)) throw bad(line_no, "rate_hz must be positive");
      continue;
    }
    HumanFrame f;
    try {
      if (j.at("frame").get<std::size_t>() != frames.size())
        throw bad(line_no, "expected frame " + std::to_string(frames.size()));
      for (Side s : kSides) {
        const Json& a = j.at(std::string(side_name(s)));
        auto& h = f.arms[static_cast<std::size_t>(side_index(s))];
        h.collar = io::vec(a.at("collar"));
        h.shoulder = io::vec(a.at("shoulder"));
        h.elbow = io::vec(a.at("elbow"));
        h.wrist = io::vec(a.at("wrist"));
      }
    } catch (const Json::exception&) {
      throw bad(line_no, "malformed frame");
    } catch (const Error& e) {
      if (std::string(e.what()).rfind("import:", 0) == 0) throw;
      throw bad(line_no, e.what());
    }
    const RetargetResult r = retarget_frame(model, f);
    res.clamped_frames += r.clamps.empty() ? 0 : 1;
    res.gimbal_frames += r.gimbal ? 1 : 0;
    frames.push_back(r.q);
  }
  if (!rate) throw Error(ErrorKind::validation, "import: empty stream");
  if (frames.empty()) throw Error(ErrorKind::validation, "import: no frames");
  res.frames = frames.size();

  const double duration = double(frames.size() - 1) / *rate;
  Trajectory& t = res.expert.traj;
  for (std::size_t k = 0;; ++k) {
    const double tk = double(k) / kControlRateHz;
    if (tk > duration + 1e-12) break;
    const double s = tk * *rate;
    const auto i = std::min(static_cast<std::size_t>(std::floor(s)), frames.size() - 1);
    const double frac = s - double(i);
    t.waypoints.push_back(i + 1 < frames.size() && frac > 0.0 ? lerp(frames[i], frames[i + 1], frac)
                                                              : frames[i]);
  }
  res.expert.source = ExpertSource::imported;
  if (double(res.clamped_frames) > kClampWarnFraction * double(res.frames))
    res.warnings.push_back("joint limits clamped on " + std::to_string(res.clamped_frames) + " of " +
                           std::to_string(res.frames) + " frames");
  for (const auto& p : expert_problems(model, t)) throw Error(ErrorKind::validation, "import: " + p);
  return res;
}

// ---------------------------------------------------------------------------
// Obstacle placement.

struct PlacementParams {
  int count_min = 3;
  int count_max = 8;
  double clearance_min = 0.02;
  double clearance_max = 0.10;
  double w_box = 0.5;
  double w_sphere = 0.3;
  double w_capsule = 0.2;
  double size_min = 0.05;
  double size_max = 0.30;
  int attempts_per_obstacle = 50;
  int max_total_attempts = 500;
  int oversample = 10;

  void validate() const {
    require(count_min >= 0 && count_min <= count_max, "placement: bad count range");
    require(clearance_min > 0.0 && clearance_min <= clearance_max, "placement: bad clearance band");
    require(w_box >= 0 && w_sphere >= 0 && w_capsule >= 0 && w_box + w_sphere + w_capsule > 0,
            "placement: bad shape weights");
    require(size_min > 0.0 && size_min <= size_max, "placement: bad size range");
    require(attempts_per_obstacle >= 1 && max_total_attempts >= 1 && oversample >= 1,
            "placement: bad attempt limits");
  }
};

/// Body spheres along a trajectory sampled `factor` times per interval.
struct SweptBody {
  std::vector<BodySphere> spheres;
  std::size_t per_sample = 0;
  std::size_t samples = 0;
};

inline SweptBody swept_body(const RobotModel& model, const Trajectory& t, int factor) {
  SweptBody b;
  for (const auto& q : oversample(t, factor)) {
    auto s = collision_spheres_at(model, q);
    b.per_sample = s.size();
    b.spheres.insert(b.spheres.end(), s.begin(), s.end());
    ++b.samples;
  }
  return b;
}

namespace detail {
inline double bounding_radius(const Obstacle& o, Vec3& centre) {
  return std::visit(
      [&centre](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SphereShape>) {
          centre = s.center;
          return s.radius;
        } else if constexpr (std::is_same_v<T, BoxShape>) {
          centre = s.center;
          return s.half_extents.norm();
        } else {
          centre = 0.5 * (s.a + s.b);
          return 0.5 * (s.b - s.a).norm() + s.radius;
        }
      },
      o);
}

inline Obstacle moved_to(const Obstacle& o, const Vec3& c) {
  return std::visit(
      [&c](auto s) -> Obstacle {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CapsuleShape>) {
          const Vec3 h = 0.5 * (s.b - s.a);
          s.a = c - h;
          s.b = c + h;
        } else {
          s.center = c;
        }
        return s;
      },
      o);
}
}  // namespace detail

/// min over swept spheres of obstacle_sdf(center) - radius, with a bounding
/// sphere cull that never changes the result.
inline double obstacle_clearance(const Obstacle& o, const SweptBody& body) {
  Vec3 oc;
  const double br = detail::bounding_radius(o, oc);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : body.spheres) {
    const double lower = (s.center - oc).norm() - br - s.radius;
    if (lower >= best) continue;
    best = std::min(best, obstacle_sdf(o, s.center) - s.radius);
  }
  return best;
}

struct PlacementResult {
  std::optional<World> world;
  int attempts = 0;
  int shrinks = 0;
  std::string reason;  // set when world is empty
};

namespace detail {
inline Obstacle sample_shape(Rng& rng, const PlacementParams& p) {
  const double total = p.w_box + p.w_sphere + p.w_capsule;
  const double u = rng.uniform() * total;
  const double a = rng.uniform(p.size_min, p.size_max);
  const double b = rng.uniform(p.size_min, p.size_max);
  const double c = rng.uniform(p.size_min, p.size_max);
  const Quat rot = rng.rotation();
  if (u < p.w_box) return BoxShape{Vec3::Zero(), 0.5 * Vec3(a, b, c), rot};
  if (u < p.w_box + p.w_sphere) return SphereShape{Vec3::Zero(), 0.5 * a};
  const Vec3 axis = rot * Vec3::UnitX();
  const double r = 0.25 * std::max(p.size_min, b);
  return CapsuleShape{-0.5 * a * axis, 0.5 * a * axis, r};
}

inline Obstacle scaled(const Obstacle& o, double k) {
  return std::visit(
      [k](auto s) -> Obstacle {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SphereShape>) {
          s.radius *= k;
        } else if constexpr (std::is_same_v<T, BoxShape>) {
          s.half_extents *= k;
        } else {
          const Vec3 c = 0.5 * (s.a + s.b);
          s.a = c + k * (s.a - c);
          s.b = c + k * (s.b - c);
          s.radius *= k;
        }
        return s;
      },
      o);
}
}  // namespace detail

/// Places each obstacle so its clearance to the expert's swept body equals a
/// sampled target in [clearance_min, clearance_max]. The obstacle starts
/// centred on a random swept sphere and retreats along a random direction
/// until the target is met from above; it shrinks by 0.8 when the retreat
/// leaves the reachable workspace.
inline PlacementResult place_obstacles(const Trajectory& expert, const RobotModel& model,
                                       std::uint64_t seed, const PlacementParams& p = {}) {
  p.validate();
  require(!expert.empty(), "place_obstacles: expert is empty");
  Rng rng(derive_seed(seed, "datagen.place"));
  PlacementResult res;
  const int count = p.count_min + static_cast<int>(rng.index(static_cast<std::size_t>(p.count_max - p.count_min + 1)));
  if (count == 0) {
    res.world = World{};
    return res;
  }
  const SweptBody body = swept_body(model, expert, p.oversample);
  const std::size_t arm_spheres = model.left.spheres.size() + model.right.spheres.size();
  const Vec3 ws_centre = model.shoulder_center();
  const double ws_radius = reachable_radius(model);

  std::vector<Obstacle> placed;
  while (static_cast<int>(placed.size()) < count) {
    bool ok = false;
    for (int attempt = 0; attempt < p.attempts_per_obstacle && !ok; ++attempt) {
      if (res.attempts >= p.max_total_attempts) {
        res.reason = "placement budget of " + std::to_string(p.max_total_attempts) + " attempts exhausted";
        return res;
      }
      ++res.attempts;
      const double target = rng.uniform(p.clearance_min, p.clearance_max);
      Obstacle shape = detail::sample_shape(rng, p);
      const std::size_t sample = rng.index(body.samples);
      const BodySphere& anchor = body.spheres[sample * body.per_sample + rng.index(arm_spheres)];
      const Vec3 u = rng.unit_vector();

      for (int shrink = 0; shrink < 4 && !ok; ++shrink) {
        if (shrink > 0) {
          shape = detail::scaled(shape, 0.8);
          ++res.shrinks;
        }
        auto at = [&](double lambda) { return detail::moved_to(shape, anchor.center + lambda * u); };
        auto gap = [&](double lambda) { return obstacle_clearance(at(lambda), body) - target; };
        // Bracket: gap(0) < 0 because the obstacle contains the anchor centre.
        double lo = 0.0, hi = 0.1, ghi = gap(hi);
        while (ghi < 0.0 && hi < 2.0 * ws_radius) {
          lo = hi;
          hi *= 2.0;
          ghi = gap(hi);
        }
        if (ghi < 0.0) continue;
        // Clearance is 1-Lipschitz in lambda, so stepping back by the excess
        // never undershoots; bisection guards slow progress.
        for (int it = 0; it < 200 && ghi > 1e-7; ++it) {
          const double step = hi - ghi;
          const double g = step > lo ? gap(step) : -1.0;
          if (g >= 0.0) {
            const bool slow = g > 0.5 * ghi;
            hi = step;
            ghi = g;
            if (!slow) continue;
          } else if (step > lo) {
            lo = step;
          }
          const double mid = 0.5 * (lo + hi);
          const double gm = gap(mid);
          if (gm >= 0.0) {
            hi = mid;
            ghi = gm;
          } else {
            lo = mid;
          }
        }
        const Obstacle o = at(hi);
        Vec3 oc;
        detail::bounding_radius(o, oc);
        if ((oc - ws_centre).norm() > ws_radius) continue;
        placed.push_back(o);
        ok = true;
      }
    }
    if (!ok) {
      res.reason = "obstacle " + std::to_string(placed.size()) + " not placed within " +
                   std::to_string(p.attempts_per_obstacle) + " attempts";
      return res;
    }
  }
  res.world = World(std::move(placed));
  return res;
}

// ---------------------------------------------------------------------------
// Scenarios.

enum class ScenarioKind { collision_avoidance, emergency_stop, free_motion };

inline std::string_view kind_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::collision_avoidance: return "collision_avoidance";
    case ScenarioKind::emergency_stop: return "emergency_stop";
    case ScenarioKind::free_motion: return "free_motion";
  }
  return "?";
}

inline ScenarioKind parse_kind(std::string_view s) {
  if (s == "collision_avoidance" || s == "ca") return ScenarioKind::collision_avoidance;
  if (s == "emergency_stop" || s == "stop") return ScenarioKind::emergency_stop;
  if (s == "free_motion" || s == "free") return ScenarioKind::free_motion;
  throw Error(ErrorKind::validation, "unknown scenario kind '" + std::string(s) + "'");
}

inline constexpr int kHorizonSteps = 15;  // 1 s at 15 Hz

struct Scenario {
  std::string id;
  ScenarioKind kind = ScenarioKind::free_motion;
  JointVector start;
  JointVector goal;
  World world;
  ExpertTrajectory expert;
  std::uint64_t seed = 0;
  double clearance_min = 0.0;
  std::optional<Side> stop_side;  // arm driven into the obstacle
};

struct ScenarioParams {
  PlacementParams placement;
  int goal_attempts = 200;
};

struct ScenarioOutcome {
  std::optional<Scenario> scenario;
  std::string reason;  // why it was discarded
};

namespace detail {
/// Damped least squares on one arm toward a world point; clamps each step.
inline JointVector reach_toward(const RobotModel& model, JointVector q, Side side, const Vec3& target,
                                int iterations = 80, double damping = 0.05) {
  for (int it = 0; it < iterations; ++it) {
    const FkResult fk = forward_kinematics(model, q);
    const Vec3 ee = fk.hand(side).translation;
    const Vec3 err = target - ee;
    if (err.norm() < 1e-4) break;
    const auto jac = position_jacobian(model, fk, side, kWristRoll, ee);
    const Eigen::Matrix3d a = jac * jac.transpose() + damping * damping * Eigen::Matrix3d::Identity();
    const Eigen::Matrix<double, kJointsPerArm, 1> dq = jac.transpose() * a.ldlt().solve(err);
    for (int j = 0; j < kJointsPerArm; ++j) q.at(side, j) += std::clamp(dq[j], -0.3, 0.3);
    q = clamp_to_limits(model, q);
  }
  return q;
}

inline std::vector<double> sample_clearances(const World& world, const SweptBody& body) {
  std::vector<double> out(body.samples, std::numeric_limits<double>::infinity());
  if (world.empty()) return out;
  for (std::size_t s = 0; s < body.samples; ++s)
    out[s] = body_clearance(world, std::span<const BodySphere>(body.spheres.data() + s * body.per_sample,
                                                               body.per_sample));
  return out;
}
}  // namespace detail

inline constexpr int kCheckOversample = 10;

inline ScenarioOutcome make_scenario(const RobotModel& model, const ExpertTrajectory& expert,
                                     ScenarioKind kind, std::uint64_t seed, const std::string& id,
                                     const ScenarioParams& params = {}) {
  require(expert.traj.size() >= static_cast<std::size_t>(kHorizonSteps + 1),
          "make_scenario: expert must span at least " + std::to_string(kHorizonSteps + 1) + " waypoints");
  Rng rng(derive_seed(seed, "datagen.scenario"));
  const std::size_t t0 = rng.index(expert.traj.size() - kHorizonSteps);
  Trajectory window;
  window.waypoints.assign(expert.traj.waypoints.begin() + static_cast<std::ptrdiff_t>(t0),
                          expert.traj.waypoints.begin() + static_cast<std::ptrdiff_t>(t0 + kHorizonSteps + 1));

  Scenario s;
  s.id = id;
  s.kind = kind;
  s.seed = seed;
  s.start = window.front();
  s.goal = window.back();
  s.expert.source = expert.source;
  ScenarioOutcome out;

  if (kind == ScenarioKind::free_motion) {
    s.expert.traj = linear_interpolate(s.start, s.goal, kHorizonSteps);
    out.scenario = std::move(s);
    return out;
  }

  s.clearance_min = params.placement.clearance_min;
  auto placed = place_obstacles(window, model, derive_seed(seed, "datagen.obstacles"), params.placement);
  if (!placed.world) {
    out.reason = placed.reason;
    return out;
  }
  s.world = std::move(*placed.world);

  if (kind == ScenarioKind::collision_avoidance) {
    s.expert.traj = std::move(window);
    out.scenario = std::move(s);
    return out;
  }

  if (s.world.empty()) {
    out.reason = "emergency stop needs at least one obstacle";
    return out;
  }
  const FkResult fk_end = forward_kinematics(model, window.back());
  std::optional<JointVector> goal;
  for (int attempt = 0; attempt < params.goal_attempts && !goal; ++attempt) {
    const auto& o = s.world.obstacles()[rng.index(s.world.size())];
    Vec3 target;
    detail::bounding_radius(o, target);
    Side side = Side::left;
    if (attempt == 0) {
      side = (fk_end.hand(Side::left).translation - target).norm() <=
                     (fk_end.hand(Side::right).translation - target).norm()
                 ? Side::left
                 : Side::right;
    } else {
      side = rng.index(2) == 0 ? Side::left : Side::right;
    }
    JointVector init = window.back();
    const double spread = 0.05 * attempt / double(params.goal_attempts);
    for (int j = 0; j < kJointsPerArm; ++j) init.at(side, j) += spread * rng.normal();
    init = clamp_to_limits(model, init);
    const JointVector q = detail::reach_toward(model, init, side, target);
    if (sdf_point(s.world, end_effector_position(model, q, side)) < 0.0) {
      goal = q;
      s.stop_side = side;
    }
  }
  if (!goal) {
    out.reason = "no goal inside an obstacle after " + std::to_string(params.goal_attempts) + " attempts";
    return out;
  }
  s.goal = *goal;
  // Stop label: the straight path, cut before the first segment that collides.
  const Trajectory path = linear_interpolate(s.start, s.goal, kHorizonSteps + 1);
  const auto clear = detail::sample_clearances(s.world, swept_body(model, path, kCheckOversample));
  std::size_t keep = path.size();
  for (std::size_t m = 0; m < clear.size(); ++m)
    if (clear[m] < 0.0) {
      keep = (m + kCheckOversample - 1) / kCheckOversample;  // waypoints strictly before the segment end
      break;
    }
  if (keep == 0) {
    out.reason = "start configuration already collides";
    return out;
  }
  s.expert.traj.waypoints.assign(path.waypoints.begin(), path.waypoints.begin() + static_cast<std::ptrdiff_t>(keep));
  out.scenario = std::move(s);
  return out;
}

// ---------------------------------------------------------------------------
// Verification.

struct CheckResult {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool ok() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
  const CheckResult* first_failure() const {
    for (const auto& c : checks)
      if (!c.passed) return &c;
    return nullptr;
  }
};

/// Re-derives every scenario invariant from the stored data alone.
inline VerifyReport verify_scenario(const RobotModel& model, const Scenario& s) {
  VerifyReport rep;
  auto check = [&rep](std::string name, bool ok, std::string detail = {}) {
    rep.checks.push_back({std::move(name), ok, ok ? std::string{} : std::move(detail)});
  };
  const Trajectory& e = s.expert.traj;
  check("id", !s.id.empty(), "scenario id is empty");
  check("expert non-empty", !e.empty(), "expert trajectory is empty");
  if (e.empty()) return rep;
  const auto problems = expert_problems(model, e);
  check("expert limits and continuity", problems.empty(), problems.empty() ? "" : problems.front());
  check("start within limits", within_limits(model, s.start), "start violates joint limits");
  check("goal within limits", within_limits(model, s.goal), "goal violates joint limits");
  check("expert starts at start", e.front() == s.start, "expert does not start at the start pose");

  const auto clear = detail::sample_clearances(s.world, swept_body(model, e, kCheckOversample));
  auto first_below = [&](double threshold) -> std::optional<std::size_t> {
    for (std::size_t m = 0; m < clear.size(); ++m)
      if (clear[m] < threshold) return m / kCheckOversample;
    return std::nullopt;
  };

  switch (s.kind) {
    case ScenarioKind::free_motion:
      check("world empty", s.world.empty(), "free-motion world has obstacles");
      check("expert ends at goal", e.back() == s.goal, "expert does not end at the goal");
      check("expert is interpolation", e == linear_interpolate(s.start, s.goal, kHorizonSteps),
            "expert differs from linear interpolation");
      break;
    case ScenarioKind::collision_avoidance: {
      check("expert ends at goal", e.back() == s.goal, "expert does not end at the goal");
      check("horizon", e.size() == kHorizonSteps + 1u, "expert does not span 15 steps");
      const auto hit = first_below(0.0);
      check("expert collision-free", !hit, hit ? "expert collision at frame " + std::to_string(*hit) : "");
      const auto tight = first_below(s.clearance_min - 1e-9);
      if (!hit)
        check("clearance", !tight,
              tight ? "clearance below " + std::to_string(s.clearance_min) + " at frame " + std::to_string(*tight) : "");
      break;
    }
    case ScenarioKind::emergency_stop: {
      check("world non-empty", !s.world.empty(), "emergency-stop world is empty");
      bool inside = false;
      if (!s.world.empty())
        for (Side side : kSides)
          if ((!s.stop_side || *s.stop_side == side) &&
              sdf_point(s.world, end_effector_position(model, s.goal, side)) < 0.0)
            inside = true;
      check("goal inside obstacle", inside, "goal end effector is not inside an obstacle");
      const auto hit = first_below(0.0);
      check("expert collision-free", !hit, hit ? "expert collision at frame " + std::to_string(*hit) : "");
      break;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization.

inline Json scenario_json(const Scenario& s) {
  Json j{{"id", s.id},
         {"kind", kind_name(s.kind)},
         {"seed", s.seed},
         {"start", io::joints(s.start)},
         {"goal", io::joints(s.goal)},
         {"world", io::world(s.world)},
         {"expert", io::trajectory(s.expert.traj)},
         {"source", s.expert.source == ExpertSource::synthetic ? "synthetic" : "imported"},
         {"clearance_min", s.clearance_min}};
  j["stop_side"] = s.stop_side ? Json(side_name(*s.stop_side)) : Json(nullptr);
  return j;
}

inline Scenario scenario_from_json(const Json& j) {
  Scenario s;
  s.id = j.at("id").get<std::string>();
  s.kind = parse_kind(j.at("kind").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.start = io::joints(j.at("start"));
  s.goal = io::joints(j.at("goal"));
  s.world = io::world(j.at("world"));
  s.expert.traj = io::trajectory(j.at("expert"));
  s.expert.source = j.value("source", "synthetic") == "imported" ? ExpertSource::imported : ExpertSource::synthetic;
  s.clearance_min = j.value("clearance_min", 0.0);
  if (j.contains("stop_side") && !j["stop_side"].is_null())
    s.stop_side = j["stop_side"].get<std::string>() == "left" ? Side::left : Side::right;
  return s;
}

// ---------------------------------------------------------------------------
// Batches.

struct KindMix {
  double collision_avoidance = 0.6;
  double emergency_stop = 0.2;
  double free_motion = 0.2;

  void validate() const {
    require(collision_avoidance >= 0 && emergency_stop >= 0 && free_motion >= 0 &&
                collision_avoidance + emergency_stop + free_motion > 0,
            "kind mix: weights must be >= 0 with a positive sum");
  }

  ScenarioKind draw(double u) const {
    const double total = collision_avoidance + emergency_stop + free_motion;
    u *= total;
    if (u < collision_avoidance) return ScenarioKind::collision_avoidance;
    if (u < collision_avoidance + emergency_stop) return ScenarioKind::emergency_stop;
    return ScenarioKind::free_motion;
  }
};

/// "ca:0.6,stop:0.2,free:0.2"
inline KindMix parse_mix(const std::string& text) {
  KindMix m{0, 0, 0};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error(ErrorKind::invalid_argument, "mix: expected kind:weight, got '" + item + "'");
    double w = 0.0;
    try {
      w = std::stod(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::invalid_argument, "mix: bad weight in '" + item + "'");
    }
    ScenarioKind k;
    try {
      k = parse_kind(item.substr(0, colon));
    } catch (const Error& e) {
      throw Error(ErrorKind::invalid_argument, std::string("mix: ") + e.what());
    }
    (k == ScenarioKind::collision_avoidance ? m.collision_avoidance
     : k == ScenarioKind::emergency_stop    ? m.emergency_stop
                                            : m.free_motion) = w;
  }
  m.validate();
  return m;
}

struct BatchParams {
  std::size_t count = 10;
  KindMix mix;
  SynthParams synth;
  ScenarioParams scenario;
  int retries_per_slot = 20;
};

struct Discard {
  std::string id;
  ScenarioKind kind;
  std::string reason;
};

struct BatchResult {
  std::vector<Scenario> scenarios;
  std::vector<Discard> discards;
};

inline Json batch_params_json(const BatchParams& p) {
  const auto& pl = p.scenario.placement;
  return {{"count", p.count},
          {"mix", {{"ca", p.mix.collision_avoidance}, {"stop", p.mix.emergency_stop}, {"free", p.mix.free_motion}}},
          {"synth",
           {{"duration_s", p.synth.duration_s},
            {"amplitude_scale", p.synth.amplitude_scale},
            {"components", p.synth.components},
            {"min_freq_hz", p.synth.min_freq_hz},
            {"max_freq_hz", p.synth.max_freq_hz}}},
          {"placement",
           {{"count_min", pl.count_min},
            {"count_max", pl.count_max},
            {"clearance_min", pl.clearance_min},
            {"clearance_max", pl.clearance_max},
            {"w_box", pl.w_box},
            {"w_sphere", pl.w_sphere},
            {"w_capsule", pl.w_capsule},
            {"size_min", pl.size_min},
            {"size_max", pl.size_max},
            {"attempts_per_obstacle", pl.attempts_per_obstacle},
            {"max_total_attempts", pl.max_total_attempts},
            {"oversample", pl.oversample}}},
          {"goal_attempts", p.scenario.goal_attempts},
          {"retries_per_slot", p.retries_per_slot}};
}

/// Missing keys keep their defaults.
inline BatchParams batch_params_from_json(const Json& j) {
  BatchParams p;
  p.count = j.value("count", p.count);
  if (j.contains("mix")) {
    const Json& m = j["mix"];
    p.mix = {m.value("ca", 0.0), m.value("stop", 0.0), m.value("free", 0.0)};
  }
  if (j.contains("synth")) {
    const Json& s = j["synth"];
    p.synth.duration_s = s.value("duration_s", p.synth.duration_s);
    p.synth.amplitude_scale = s.value("amplitude_scale", p.synth.amplitude_scale);
    p.synth.components = s.value("components", p.synth.components);
    p.synth.min_freq_hz = s.value("min_freq_hz", p.synth.min_freq_hz);
    p.synth.max_freq_hz = s.value("max_freq_hz", p.synth.max_freq_hz);
  }
  if (j.contains("placement")) {
    const Json& s = j["placement"];
    auto& pl = p.scenario.placement;
    pl.count_min = s.value("count_min", pl.count_min);
    pl.count_max = s.value("count_max", pl.count_max);
    pl.clearance_min = s.value("clearance_min", pl.clearance_min);
    pl.clearance_max = s.value("clearance_max", pl.clearance_max);
    pl.w_box = s.value("w_box", pl.w_box);
    pl.w_sphere = s.value("w_sphere", pl.w_sphere);
    pl.w_capsule = s.value("w_capsule", pl.w_capsule);
    pl.size_min = s.value("size_min", pl.size_min);
    pl.size_max = s.value("size_max", pl.size_max);
    pl.attempts_per_obstacle = s.value("attempts_per_obstacle", pl.attempts_per_obstacle);
    pl.max_total_attempts = s.value("max_total_attempts", pl.max_total_attempts);
    pl.oversample = s.value("oversample", pl.oversample);
  }
  p.scenario.goal_attempts = j.value("goal_attempts", p.scenario.goal_attempts);
  p.retries_per_slot = j.value("retries_per_slot", p.retries_per_slot);
  try {
    p.mix.validate();
    p.scenario.placement.validate();
    require(p.synth.duration_s >= 1.0 && p.synth.amplitude_scale >= 0.0 && p.synth.components >= 1 &&
                p.synth.min_freq_hz > 0.0 && p.synth.min_freq_hz <= p.synth.max_freq_hz &&
                p.synth.max_freq_hz <= 0.5,
            "datagen: bad synth parameters");
    require(p.scenario.goal_attempts >= 1 && p.retries_per_slot >= 1, "datagen: attempt counts must be >= 1");
  } catch (const Error& e) {
    throw Error(ErrorKind::validation, e.what());
  }
  return p;
}

inline std::string scenario_id(std::size_t slot) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%05zu", slot);
  return buf;
}

/// Slot i draws its kind and expert from seeds derived from (seed, i), so
/// every scenario is independent of the others. A discarded attempt is
/// retried with the next attempt seed and the same kind.
inline BatchResult generate_batch(const RobotModel& model, const BatchParams& p, std::uint64_t seed,
                                  const std::vector<ExpertTrajectory>& imported = {}) {
  p.mix.validate();
  BatchResult out;
  for (std::size_t slot = 0; slot < p.count; ++slot) {
    const std::uint64_t slot_seed = derive_seed(seed, "datagen.slot", slot);
    Rng rng(slot_seed);
    const ScenarioKind kind = p.mix.draw(rng.uniform());
    const std::string id = scenario_id(slot);
    bool done = false;
    for (int attempt = 0; attempt < p.retries_per_slot && !done; ++attempt) {
      const std::uint64_t s = derive_seed(slot_seed, "attempt", static_cast<std::uint64_t>(attempt));
      ExpertTrajectory expert;
      if (imported.empty()) {
        expert = synth_trajectory(model, s, p.synth);
      } else {
        Rng pick(derive_seed(s, "datagen.import"));
        expert = imported[pick.index(imported.size())];
      }
      auto o = make_scenario(model, expert, kind, s, id, p.scenario);
      if (o.scenario) {
        out.scenarios.push_back(std::move(*o.scenario));
        done = true;
      } else {
        out.discards.push_back({id, kind, o.reason});
      }
    }
    if (!done)
      throw Error(ErrorKind::validation, "scenario " + id + ": every attempt was discarded (last: " +
                                             out.discards.back().reason + ")");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset records.

inline constexpr int kChunk = kHorizonSteps;

/// Next k waypoints after t, holding the final pose past the end.
inline std::vector<JointVector> action_chunk(const Trajectory& t, std::size_t i, int k = kChunk) {
  std::vector<JointVector> out;
  for (int j = 1; j <= k; ++j) out.push_back(t[std::min(i + static_cast<std::size_t>(j), t.size() - 1)]);
  return out;
}

inline std::uint64_t observation_seed(std::uint64_t seed, const std::string& scenario_id, std::size_t t) {
  return derive_seed(derive_seed(seed, "datagen.obs"), scenario_id, t);
}

inline RigObservation record_observation(const RobotModel& model, const RigLayout& rig, const Scenario& s,
                                         std::size_t t, const NoiseParams& noise, std::uint64_t seed) {
  return render_rig(s.world, model, s.expert.traj[t], rig, noise, observation_seed(seed, s.id, t),
                    static_cast<std::int64_t>(t));
}

/// Writes one JSON line per (scenario, timestep) and the observation frames
/// to the binary sidecar; obs_ref is the byte offset of each batch.
inline std::size_t build_dataset(const RobotModel& model, const RigLayout& rig,
                                 const std::vector<Scenario>& scenarios, const NoiseParams& noise,
                                 std::uint64_t seed, std::ostream& records, std::ostream& sidecar) {
  std::size_t n = 0;
  std::uint64_t offset = 0;
  for (const auto& s : scenarios) {
    const Trajectory& e = s.expert.traj;
    for (std::size_t t = 0; t < e.size(); ++t) {
      std::ostringstream batch;
      write_observation(batch, record_observation(model, rig, s, t, noise, seed));
      const std::string bytes = batch.str();
      sidecar.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      Json chunk = Json::array();
      for (const auto& q : action_chunk(e, t)) chunk.push_back(io::joints(q));
      const Json rec{{"scenario_id", s.id}, {"t", t},      {"q", io::joints(e[t])},
                     {"g", io::joints(s.goal)}, {"chunk", chunk}, {"obs_ref", offset}};
      records << rec.dump() << '\n';
      offset += bytes.size();
      ++n;
    }
  }
  if (!records || !sidecar) throw Error(ErrorKind::invalid_argument, "dataset: write failed");
  return n;
}

}  // namespace egoplan
