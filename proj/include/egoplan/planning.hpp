// Reciprocal-SDF collision cost, inference-time selection over candidate
// trajectories, smooth perturbation candidates and a gradient-descent
// trajectory optimizer used as the baseline planner.
#pragma once

#include "egoplan/core.hpp"
#include "egoplan/geometry.hpp"
#include "egoplan/kinematics.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace egoplan {

struct CostConfig {
  double epsilon_min = 1e-3;  // SDF clamp floor (m)
  int horizon = 15;           // waypoints T
  double w_collision = 1e-3;
  double w_smooth = 1.0;
  double w_goal = 50.0;
  int max_iterations = 150;
  double goal_tolerance = 0.10;  // m, for declaring no-solution

  void validate() const {
    require(epsilon_min > 0.0, "cost config: epsilon_min must be > 0");
    require(horizon >= 2, "cost config: horizon must be >= 2");
    require(w_collision >= 0.0 && w_smooth >= 0.0 && w_goal >= 0.0, "cost config: weights must be >= 0");
    require(max_iterations >= 0, "cost config: max_iterations must be >= 0");
  }
};

namespace detail {
/// Body spheres as flat arrays for the inner distance loop.
struct SphereSoA {
  std::vector<double> x, y, z, r;

  explicit SphereSoA(const std::vector<BodySphere>& s) {
    for (const auto& b : s) {
      x.push_back(b.center.x());
      y.push_back(b.center.y());
      z.push_back(b.center.z());
      r.push_back(b.radius);
    }
  }

  /// robot_sdf and the index of the nearest sphere.
  double nearest(const Vec3& p, std::size_t& arg) const {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = p.x() - x[i], dy = p.y() - y[i], dz = p.z() - z[i];
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz) - r[i];
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    return best;
  }

  double nearest(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = p.x() - x[i], dy = p.y() - y[i], dz = p.z() - z[i];
      best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz) - r[i]);
    }
    return best;
  }
};
}  // namespace detail

/// sum over waypoints t and points k of 1 / max(robot_sdf(q_t, p_k), eps).
/// An empty cloud costs 0.
inline double candidate_cost(const Trajectory& traj, const PointCloud& cloud, const RobotModel& model,
                       const CostConfig& cfg) {
  require(cfg.epsilon_min > 0.0, "candidate_cost: epsilon_min must be > 0");
  require(!traj.empty(), "candidate_cost: trajectory is empty");
  if (cloud.empty()) return 0.0;
  double total = 0.0;
  for (const auto& q : traj) {
    const detail::SphereSoA s(collision_spheres_at(model, q));
    double row = 0.0;
    for (const auto& p : cloud.points) row += 1.0 / std::max(s.nearest(p), cfg.epsilon_min);
    total += row;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Candidates and selection.

enum class CandidateProvenance { policy, perturbation, restart };

inline std::string_view provenance_name(CandidateProvenance p) {
  switch (p) {
    case CandidateProvenance::policy: return "policy";
    case CandidateProvenance::perturbation: return "perturbation";
    case CandidateProvenance::restart: return "restart";
  }
  return "?";
}

struct CandidateSet {
  std::vector<Trajectory> candidates;
  CandidateProvenance provenance = CandidateProvenance::perturbation;

  void validate() const {
    require(!candidates.empty(), "candidate set: at least one candidate required");
    const auto t = candidates.front().size();
    require(t >= 1, "candidate set: empty trajectory");
    for (const auto& c : candidates) {
      require(c.size() == t, "candidate set: candidates differ in length");
      require(c.front() == candidates.front().front(), "candidate set: candidates differ in start");
    }
  }
};

struct Selection {
  std::size_t index = 0;
  std::vector<double> costs;
};

/// argmin of candidate_cost; the lowest index wins ties.
inline Selection ito_select(const CandidateSet& cands, const PointCloud& cloud, const RobotModel& model,
                            const CostConfig& cfg) {
  cands.validate();
  Selection s;
  for (std::size_t i = 0; i < cands.candidates.size(); ++i) {
    s.costs.push_back(candidate_cost(cands.candidates[i], cloud, model, cfg));
    if (s.costs[i] < s.costs[s.index]) s.index = i;
  }
  return s;
}

/// Candidate 0 is `base`. Others add a1 sin(pi s) + a2 sin(2 pi s) per joint
/// with |a1| + |a2| <= amplitude, s in [0, 1] along the trajectory, then clamp
/// to limits. Both endpoints stay equal to the base's.
inline CandidateSet perturb_candidates(const Trajectory& base, std::size_t n, std::uint64_t seed,
                                       double amplitude, const RobotModel& model) {
  require(n >= 1, "perturb_candidates: N must be >= 1");
  require(base.size() >= 2, "perturb_candidates: base needs >= 2 waypoints");
  require(amplitude >= 0.0, "perturb_candidates: amplitude must be >= 0");
  CandidateSet out;
  out.provenance = CandidateProvenance::perturbation;
  out.candidates.push_back(base);
  const std::size_t t = base.size();
  for (std::size_t c = 1; c < n; ++c) {
    Rng rng(derive_seed(seed, "planning.perturb", c));
    std::array<double, kNumJoints> a1{}, a2{};
    for (int j = 0; j < kNumJoints; ++j) {
      const double u1 = rng.uniform(-1.0, 1.0), u2 = rng.uniform(-1.0, 1.0);
      const double mag = amplitude * rng.uniform();
      const double norm = std::abs(u1) + std::abs(u2);
      a1[static_cast<std::size_t>(j)] = norm > 0.0 ? mag * u1 / norm : 0.0;
      a2[static_cast<std::size_t>(j)] = norm > 0.0 ? mag * u2 / norm : 0.0;
    }
    Trajectory tr = base;
    for (std::size_t i = 1; i + 1 < t; ++i) {
      const double s = double(i) / double(t - 1);
      for (int j = 0; j < kNumJoints; ++j)
        tr[i][j] += a1[static_cast<std::size_t>(j)] * std::sin(kPi * s) + a2[static_cast<std::size_t>(j)] * std::sin(2.0 * kPi * s);
      tr[i] = clamp_to_limits(model, tr[i]);
    }
    out.candidates.push_back(std::move(tr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baseline optimizer.

struct CostBreakdown {
  double collision = 0.0;
  double smooth = 0.0;
  double goal = 0.0;
  double total = 0.0;
};

/// Gradient with respect to every waypoint (row t, 14 columns).
using TrajectoryGradient = std::vector<std::array<double, kNumJoints>>;

/// Objective of the baseline: w_c candidate_cost + w_s sum |dq|^2 + w_g sum_arms
/// |ee(q_T) - ee(goal)|^2. With `grad`, fills the analytic gradient; the
/// collision part is accumulated per sphere and mapped through the
/// position Jacobian of its link.
inline CostBreakdown baseline_objective(const Trajectory& traj, const PointCloud& cloud, const RobotModel& model,
                                        const JointVector& goal, const CostConfig& cfg,
                                        TrajectoryGradient* grad = nullptr) {
  CostBreakdown c;
  const std::size_t n = traj.size();
  if (grad) grad->assign(n, std::array<double, kNumJoints>{});
  const auto owners = sphere_owners(model);
  const std::array<Vec3, 2> ee_goal{end_effector_position(model, goal, Side::left),
                                    end_effector_position(model, goal, Side::right)};

  for (std::size_t t = 0; t < n; ++t) {
    const FkResult fk = forward_kinematics(model, traj[t]);
    if (!cloud.empty() && cfg.w_collision > 0.0) {
      const auto spheres = collision_spheres_at(model, fk);
      const detail::SphereSoA soa(spheres);
      std::vector<Vec3> force(spheres.size(), Vec3::Zero());
      double row = 0.0;
      for (const auto& p : cloud.points) {
        std::size_t s = 0;
        const double d = soa.nearest(p, s);
        if (d > cfg.epsilon_min) {
          row += 1.0 / d;
          if (grad) {
            const Vec3 diff = p - spheres[s].center;
            force[s] += diff / (diff.norm() * d * d);
          }
        } else {
          row += 1.0 / cfg.epsilon_min;
        }
      }
      c.collision += row;
      if (grad)
        for (std::size_t s = 0; s < spheres.size(); ++s) {
          if (!owners[s].side || force[s].isZero(0.0)) continue;
          const auto jac = position_jacobian(model, fk, *owners[s].side, owners[s].link, spheres[s].center);
          const Eigen::Matrix<double, kJointsPerArm, 1> g = jac.transpose() * force[s];
          for (int j = 0; j < kJointsPerArm; ++j)
            (*grad)[t][static_cast<std::size_t>(side_index(*owners[s].side) * kJointsPerArm + j)] += cfg.w_collision * g[j];
        }
    }
    if (t + 1 == n) {
      for (Side side : kSides) {
        const Vec3 e = fk.hand(side).translation - ee_goal[static_cast<std::size_t>(side_index(side))];
        c.goal += e.squaredNorm();
        if (grad) {
          const auto jac = position_jacobian(model, fk, side, kWristRoll, fk.hand(side).translation);
          const Eigen::Matrix<double, kJointsPerArm, 1> g = 2.0 * cfg.w_goal * (jac.transpose() * e);
          for (int j = 0; j < kJointsPerArm; ++j) (*grad)[t][static_cast<std::size_t>(side_index(side) * kJointsPerArm + j)] += g[j];
        }
      }
    }
  }
  for (std::size_t t = 0; t + 1 < n; ++t)
    for (int j = 0; j < kNumJoints; ++j) {
      const double d = traj[t + 1][j] - traj[t][j];
      c.smooth += d * d;
      if (grad) {
        (*grad)[t][static_cast<std::size_t>(j)] -= 2.0 * cfg.w_smooth * d;
        (*grad)[t + 1][static_cast<std::size_t>(j)] += 2.0 * cfg.w_smooth * d;
      }
    }
  c.total = cfg.w_collision * c.collision + cfg.w_smooth * c.smooth + cfg.w_goal * c.goal;
  return c;
}

/// Central differences of the objective total, step h, over waypoints 1..T-1.
inline TrajectoryGradient baseline_gradient_fd(const Trajectory& traj, const PointCloud& cloud,
                                               const RobotModel& model, const JointVector& goal,
                                               const CostConfig& cfg, double h = 1e-6) {
  TrajectoryGradient g(traj.size(), std::array<double, kNumJoints>{});
  Trajectory work = traj;
  for (std::size_t t = 0; t < traj.size(); ++t)
    for (int j = 0; j < kNumJoints; ++j) {
      const double v = traj[t][j];
      work[t][j] = v + h;
      const double up = baseline_objective(work, cloud, model, goal, cfg).total;
      work[t][j] = v - h;
      const double down = baseline_objective(work, cloud, model, goal, cfg).total;
      work[t][j] = v;
      g[t][static_cast<std::size_t>(j)] = (up - down) / (2.0 * h);
    }
  return g;
}

struct PlanResult {
  std::optional<Trajectory> trajectory;  // empty on no-solution
  Trajectory best_effort;                // optimizer output even when rejected
  CostBreakdown cost;
  int iterations = 0;
  double wall_ms = 0.0;
  std::string failure;
};

struct BaselineOptions {
  int restarts = 0;
  double restart_amplitude = 0.3;
  const World* truth = nullptr;  // ground truth for the no-solution check
};

namespace detail {
/// Projected gradient descent with Armijo backtracking; waypoint 0 fixed.
inline Trajectory descend(Trajectory x, const PointCloud& cloud, const RobotModel& model, const JointVector& goal,
                          const CostConfig& cfg, int& iterations, CostBreakdown& final_cost) {
  TrajectoryGradient g;
  CostBreakdown f = baseline_objective(x, cloud, model, goal, cfg, &g);
  double step = 1e-2;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    ++iterations;
    double gnorm2 = 0.0;
    for (std::size_t t = 1; t < x.size(); ++t)
      for (double v : g[t]) gnorm2 += v * v;
    if (gnorm2 < 1e-18) break;
    // Cap the largest joint change per step at 0.2 rad.
    double gmax = 0.0;
    for (std::size_t t = 1; t < x.size(); ++t)
      for (double v : g[t]) gmax = std::max(gmax, std::abs(v));
    step = std::min(step, 0.2 / gmax);
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      Trajectory y = x;
      for (std::size_t t = 1; t < x.size(); ++t) {
        for (int j = 0; j < kNumJoints; ++j) y[t][j] -= step * g[t][static_cast<std::size_t>(j)];
        y[t] = clamp_to_limits(model, y[t]);
      }
      double decrease = 0.0;
      for (std::size_t t = 1; t < x.size(); ++t)
        for (int j = 0; j < kNumJoints; ++j) decrease += g[t][static_cast<std::size_t>(j)] * (x[t][j] - y[t][j]);
      TrajectoryGradient gy;
      const CostBreakdown fy = baseline_objective(y, cloud, model, goal, cfg, &gy);
      if (fy.total <= f.total - 1e-4 * decrease) {
        const double rel = (f.total - fy.total) / std::max(1e-12, std::abs(f.total));
        x = std::move(y);
        g = std::move(gy);
        f = fy;
        accepted = true;
        step *= 2.0;
        if (rel < 1e-7) it = cfg.max_iterations;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  final_cost = f;
  return x;
}
}  // namespace detail

/// Result collision check: min robot clearance along the trajectory (4x
/// oversampled) against the ground-truth world when given, else the minimum
/// robot_sdf over cloud points.
inline double plan_clearance(const Trajectory& traj, const PointCloud& cloud, const RobotModel& model,
                             const World* truth) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : oversample(traj, 4)) {
    const auto spheres = collision_spheres_at(model, q);
    if (truth) {
      if (!truth->empty()) best = std::min(best, body_clearance(*truth, spheres));
    } else {
      const detail::SphereSoA soa(spheres);
      for (const auto& p : cloud.points) best = std::min(best, soa.nearest(p));
    }
  }
  return best;
}

/// Hand distance to the goal for every arm that moves between start and goal.
inline double goal_error(const RobotModel& model, const JointVector& start, const JointVector& final_q,
                         const JointVector& goal) {
  double worst = 0.0;
  for (Side s : kSides) {
    bool moves = false;
    for (int j = 0; j < kJointsPerArm; ++j) moves |= std::abs(goal.at(s, j) - start.at(s, j)) > 1e-6;
    if (!moves) continue;
    worst = std::max(worst, (end_effector_position(model, final_q, s) - end_effector_position(model, goal, s)).norm());
  }
  return worst;
}

inline PlanResult baseline_plan(const PointCloud& cloud, const JointVector& start, const JointVector& goal,
                                const RobotModel& model, const CostConfig& cfg, std::uint64_t seed,
                                const BaselineOptions& opt = {}) {
  cfg.validate();
  require(opt.restarts >= 0, "baseline_plan: restarts must be >= 0");
  if (!start.all_finite() || !within_limits(model, start))
    throw Error(ErrorKind::invalid_argument, "baseline_plan: start violates joint limits");
  const auto t0 = std::chrono::steady_clock::now();
  PlanResult res;
  const Trajectory init = linear_interpolate(start, goal, cfg.horizon);
  std::optional<Trajectory> best;
  for (int r = 0; r <= opt.restarts; ++r) {
    Trajectory x0 = init;
    if (r > 0) {
      x0 = perturb_candidates(init, 2, derive_seed(seed, "planning.restart", static_cast<std::uint64_t>(r)),
                              opt.restart_amplitude, model)
               .candidates[1];
    }
    CostBreakdown cost;
    Trajectory x = cloud.empty() ? x0 : detail::descend(x0, cloud, model, goal, cfg, res.iterations, cost);
    if (cloud.empty()) cost = baseline_objective(x, cloud, model, goal, cfg);
    if (!best || cost.total < res.cost.total) {
      best = std::move(x);
      res.cost = cost;
    }
  }
  res.best_effort = *best;
  const double clearance = plan_clearance(*best, cloud, model, opt.truth);
  const double err = goal_error(model, start, best->back(), goal);
  if (clearance < 0.0) {
    res.failure = "collision along the optimized trajectory";
  } else if (err > cfg.goal_tolerance) {
    res.failure = "goal not reached (hand error " + std::to_string(err) + " m)";
  } else {
    res.trajectory = *best;
  }
  res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace egoplan
