// Suite runner and metrics: render the rig at the start pose, plan once,
// execute open loop and score success and ground-truth collisions. Also the
// report format, relative comparison and the canned test scenes.
#pragma once

#include "egoplan/bridge.hpp"
#include "egoplan/datagen.hpp"
#include "egoplan/io.hpp"
#include "egoplan/planning.hpp"
#include "egoplan/sensing.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace egoplan {

inline constexpr double kSuccessRadius = 0.10;  // m
inline constexpr int kCollisionOversample = 4;
inline constexpr std::size_t kExoMaxPoints = 10000;

/// Hand within kSuccessRadius of the goal's hand for each arm that moves.
inline bool judge_success(const RobotModel& model, const Trajectory& executed, const JointVector& start,
                          const JointVector& goal) {
  require(!executed.empty(), "judge_success: executed trajectory is empty");
  return goal_error(model, start, executed.back(), goal) <= kSuccessRadius;
}

struct CollisionCount {
  int frames = 0;
  bool collided = false;
};

/// Samples at kCollisionOversample per interval that penetrate the world.
inline CollisionCount count_collisions(const Trajectory& executed, const World& world, const RobotModel& model) {
  CollisionCount c;
  if (world.empty()) return c;
  for (const auto& q : oversample(executed, kCollisionOversample))
    if (body_clearance(world, collision_spheres_at(model, q)) < 0.0) ++c.frames;
  c.collided = c.frames > 0;
  return c;
}

// ---------------------------------------------------------------------------
// Planners.

struct PlanInput {
  std::string id;
  JointVector start, goal;
  PointCloud cloud;
  const RigObservation* obs = nullptr;
  const World* truth = nullptr;
  std::uint64_t seed = 0;
  int horizon = 0;  // 0: the planner's configured horizon
};

struct PlanOutput {
  std::optional<Trajectory> trajectory;
  int selected = -1;
  bool fallback = false;
  std::string note;
  double cost = 0.0;
};

class Planner {
 public:
  virtual ~Planner() = default;
  virtual PlanOutput plan(const PlanInput& in) = 0;
  virtual std::string name() const = 0;
};

enum class PlannerKind { baseline, ito_perturb, ito_extern, straight };

inline std::string_view planner_name(PlannerKind k) {
  switch (k) {
    case PlannerKind::baseline: return "baseline";
    case PlannerKind::ito_perturb: return "ito-perturb";
    case PlannerKind::ito_extern: return "ito-extern";
    case PlannerKind::straight: return "straight";
  }
  return "?";
}

inline PlannerKind parse_planner(std::string_view s) {
  for (auto k : {PlannerKind::baseline, PlannerKind::ito_perturb, PlannerKind::ito_extern, PlannerKind::straight})
    if (planner_name(k) == s) return k;
  fail("unknown planner '" + std::string(s) + "' (baseline, ito-perturb, ito-extern, straight)");
}

struct PlannerSpec {
  PlannerKind kind = PlannerKind::ito_perturb;
  std::size_t candidates = 16;
  double amplitude = 0.05;         // candidate perturbation (rad)
  double restart_amplitude = 0.3;  // baseline re-initialization (rad)
  int restarts = 2;
  CostConfig cost;
  std::string extern_command;  // ito-extern over stdio
  std::string extern_socket;   // ito-extern over a unix socket
  int timeout_ms = 2000;

  void validate() const {
    cost.validate();
    require(candidates >= 1, "planner: candidates must be >= 1");
    require(amplitude >= 0.0 && restart_amplitude >= 0.0, "planner: amplitudes must be >= 0");
    require(restarts >= 0, "planner: restarts must be >= 0");
    require(timeout_ms > 0, "planner: timeout must be > 0");
    if (kind == PlannerKind::ito_extern)
      require(!extern_command.empty() || !extern_socket.empty(), "planner: ito-extern needs a command or socket");
  }
};

inline Json planner_json(const PlannerSpec& p) {
  Json j{{"kind", planner_name(p.kind)},
         {"candidates", p.candidates},
         {"amplitude", p.amplitude},
         {"restart_amplitude", p.restart_amplitude},
         {"restarts", p.restarts},
         {"timeout_ms", p.timeout_ms},
         {"cost",
          {{"epsilon_min", p.cost.epsilon_min},
           {"horizon", p.cost.horizon},
           {"w_collision", p.cost.w_collision},
           {"w_smooth", p.cost.w_smooth},
           {"w_goal", p.cost.w_goal},
           {"max_iterations", p.cost.max_iterations},
           {"goal_tolerance", p.cost.goal_tolerance}}}};
  if (!p.extern_command.empty()) j["extern_command"] = p.extern_command;
  if (!p.extern_socket.empty()) j["extern_socket"] = p.extern_socket;
  return j;
}

inline PlannerSpec planner_from_json(const Json& j) {
  PlannerSpec p;
  p.kind = parse_planner(j.value("kind", std::string(planner_name(p.kind))));
  p.candidates = j.value("candidates", p.candidates);
  p.amplitude = j.value("amplitude", p.amplitude);
  p.restart_amplitude = j.value("restart_amplitude", p.restart_amplitude);
  p.restarts = j.value("restarts", p.restarts);
  p.timeout_ms = j.value("timeout_ms", p.timeout_ms);
  p.extern_command = j.value("extern_command", std::string());
  p.extern_socket = j.value("extern_socket", std::string());
  if (j.contains("cost")) {
    const Json& c = j["cost"];
    p.cost.epsilon_min = c.value("epsilon_min", p.cost.epsilon_min);
    p.cost.horizon = c.value("horizon", p.cost.horizon);
    p.cost.w_collision = c.value("w_collision", p.cost.w_collision);
    p.cost.w_smooth = c.value("w_smooth", p.cost.w_smooth);
    p.cost.w_goal = c.value("w_goal", p.cost.w_goal);
    p.cost.max_iterations = c.value("max_iterations", p.cost.max_iterations);
    p.cost.goal_tolerance = c.value("goal_tolerance", p.cost.goal_tolerance);
  }
  p.validate();
  return p;
}

class BaselinePlanner : public Planner {
 public:
  BaselinePlanner(const RobotModel& model, PlannerSpec spec) : model_(model), spec_(std::move(spec)) {}

  PlanOutput plan(const PlanInput& in) override {
    CostConfig cfg = spec_.cost;
    if (in.horizon > 0) cfg.horizon = in.horizon;
    const auto r = baseline_plan(in.cloud, in.start, in.goal, model_, cfg, in.seed,
                                 {spec_.restarts, spec_.restart_amplitude, in.truth});
    PlanOutput out;
    out.trajectory = r.trajectory;
    out.cost = r.cost.total;
    out.note = r.failure;
    return out;
  }
  std::string name() const override { return "baseline"; }

 private:
  const RobotModel& model_;
  PlannerSpec spec_;
};

/// Inference-time selection over candidates from any source.
class ItoPlanner : public Planner {
 public:
  ItoPlanner(const RobotModel& model, PlannerSpec spec, std::unique_ptr<CandidateSource> source)
      : model_(model), spec_(std::move(spec)), source_(std::move(source)) {}

  PlanOutput plan(const PlanInput& in) override {
    CandidateRequest req;
    req.id = in.id;
    req.q = in.start;
    req.g = in.goal;
    req.n = spec_.candidates;
    req.horizon = in.horizon > 0 ? in.horizon : spec_.cost.horizon;
    req.seed = in.seed;
    req.obs = in.obs;
    const auto got = source_->request(req);
    const auto sel = ito_select(got.set, in.cloud, model_, spec_.cost);
    PlanOutput out;
    out.trajectory = got.set.candidates[sel.index];
    out.selected = static_cast<int>(sel.index);
    out.cost = sel.costs[sel.index];
    out.fallback = got.fallback;
    out.note = got.warning;
    return out;
  }
  std::string name() const override { return "ito:" + source_->name(); }

 private:
  const RobotModel& model_;
  PlannerSpec spec_;
  std::unique_ptr<CandidateSource> source_;
};

/// Always the joint-space line (candidate 0 of the perturbation source).
class StraightPlanner : public Planner {
 public:
  explicit StraightPlanner(PlannerSpec spec) : spec_(std::move(spec)) {}
  PlanOutput plan(const PlanInput& in) override {
    PlanOutput out;
    out.trajectory = linear_interpolate(in.start, in.goal, in.horizon > 0 ? in.horizon : spec_.cost.horizon);
    out.selected = 0;
    return out;
  }
  std::string name() const override { return "straight"; }

 private:
  PlannerSpec spec_;
};

inline std::unique_ptr<Planner> make_planner(const RobotModel& model, const PlannerSpec& spec) {
  spec.validate();
  const auto timeout = std::chrono::milliseconds(spec.timeout_ms);
  switch (spec.kind) {
    case PlannerKind::baseline: return std::make_unique<BaselinePlanner>(model, spec);
    case PlannerKind::straight: return std::make_unique<StraightPlanner>(spec);
    case PlannerKind::ito_perturb:
      return std::make_unique<ItoPlanner>(model, spec, std::make_unique<PerturbationSource>(model, spec.amplitude));
    case PlannerKind::ito_extern: {
      std::unique_ptr<CandidateSource> src =
          spec.extern_socket.empty() ? StreamSource::process(model, spec.extern_command, spec.amplitude, timeout)
                                     : StreamSource::socket(model, spec.extern_socket, spec.amplitude, timeout);
      return std::make_unique<ItoPlanner>(model, spec, std::move(src));
    }
  }
  fail("unknown planner kind");
}

// ---------------------------------------------------------------------------
// Suites.

struct TrialOutcome {
  std::string scenario_id;
  ScenarioKind kind = ScenarioKind::free_motion;
  Trajectory executed;
  int collision_frames = 0;
  bool collided = false;
  bool success = false;
  double latency_ms = 0.0;
  bool no_solution = false;
  int selected = -1;
  bool fallback = false;
  std::size_t cloud_points = 0;
  std::string note;
};

struct SuiteAggregates {
  std::size_t trials = 0;
  double collision_rate = 0.0;
  double success_rate = 0.0;
  double no_solution_rate = 0.0;
  double mean_latency_ms = 0.0;
  double median_latency_ms = 0.0;
  std::size_t fallbacks = 0;

  friend bool operator==(const SuiteAggregates&, const SuiteAggregates&) = default;
};

inline SuiteAggregates aggregate(const std::vector<TrialOutcome>& rows) {
  SuiteAggregates a;
  a.trials = rows.size();
  if (rows.empty()) return a;
  std::size_t col = 0, suc = 0, ns = 0;
  double lat = 0.0;
  std::vector<double> lats;
  for (const auto& r : rows) {
    col += r.collided;
    suc += r.success;
    ns += r.no_solution;
    a.fallbacks += r.fallback;
    lat += r.latency_ms;
    lats.push_back(r.latency_ms);
  }
  const double n = double(rows.size());
  a.collision_rate = double(col) / n;
  a.success_rate = double(suc) / n;
  a.no_solution_rate = double(ns) / n;
  a.mean_latency_ms = lat / n;
  std::sort(lats.begin(), lats.end());
  const std::size_t m = lats.size() / 2;
  a.median_latency_ms = lats.size() % 2 ? lats[m] : 0.5 * (lats[m - 1] + lats[m]);
  return a;
}

struct SuiteReport {
  std::string planner;
  RigKind rig = RigKind::egocentric;
  std::uint64_t seed = 0;
  std::string fingerprint;
  Json config;
  std::vector<TrialOutcome> trials;
  SuiteAggregates aggregates;
};

struct SuiteOptions {
  NoiseParams noise;
  std::size_t exo_max_points = kExoMaxPoints;
  bool use_truth_for_no_solution = true;
  bool closed_loop = false;  // replan from every executed waypoint
};

namespace detail {
inline PointCloud observe(const World& world, const RobotModel& model, const RigLayout& rig, const JointVector& q,
                          const SuiteOptions& opt, std::uint64_t seed, RigObservation& obs) {
  obs = render_rig(world, model, q, rig, opt.noise, seed);
  PointCloud cloud = deproject(obs);
  if (rig.kind == RigKind::exocentric)
    cloud = prune_pointcloud(cloud, model, q, opt.exo_max_points, derive_seed(seed, "eval.prune"));
  return cloud;
}
}  // namespace detail

/// One trial: observe at the start pose, plan, execute, score.
inline TrialOutcome run_trial(const Scenario& s, const RobotModel& model, const RigLayout& rig, Planner& planner,
                              std::uint64_t seed, const SuiteOptions& opt) {
  TrialOutcome row;
  row.scenario_id = s.id;
  row.kind = s.kind;
  const std::uint64_t obs_seed = observation_seed(derive_seed(seed, "eval"), s.id, 0);
  const std::uint64_t plan_seed = derive_seed(derive_seed(seed, "eval.plan"), s.id);
  RigObservation obs;
  PlanInput in;
  in.id = s.id;
  in.start = s.start;
  in.goal = s.goal;
  in.cloud = detail::observe(s.world, model, rig, s.start, opt, obs_seed, obs);
  in.obs = &obs;
  in.truth = opt.use_truth_for_no_solution ? &s.world : nullptr;
  in.seed = plan_seed;
  row.cloud_points = in.cloud.size();

  auto timed = [&](const PlanInput& pi) {
    const auto t0 = std::chrono::steady_clock::now();
    PlanOutput o = planner.plan(pi);
    row.latency_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    row.fallback |= o.fallback;
    if (!o.note.empty()) row.note = o.note;
    return o;
  };

  const PlanOutput first = timed(in);
  row.selected = first.selected;
  if (!first.trajectory) {
    row.no_solution = true;
    row.executed.waypoints = {s.start};
  } else if (!opt.closed_loop) {
    row.executed = *first.trajectory;
  } else {
    row.executed.waypoints = {s.start, (*first.trajectory)[1]};
    const std::size_t steps = first.trajectory->size();
    for (std::size_t t = 1; t + 1 < steps; ++t) {
      PlanInput step = in;
      step.start = row.executed.back();
      RigObservation o;
      step.cloud = detail::observe(s.world, model, rig, step.start, opt,
                                   observation_seed(derive_seed(seed, "eval"), s.id, t), o);
      step.obs = &o;
      step.seed = derive_seed(plan_seed, "step", t);
      step.horizon = static_cast<int>(steps - t);
      const PlanOutput next = timed(step);
      row.executed.waypoints.push_back(next.trajectory ? (*next.trajectory)[1] : step.start);
    }
  }
  const auto cc = count_collisions(row.executed, s.world, model);
  row.collision_frames = cc.frames;
  row.collided = cc.collided;
  // Reaching the goal through an obstacle does not count.
  row.success = !row.no_solution && !row.collided && judge_success(model, row.executed, s.start, s.goal);
  return row;
}

inline SuiteReport run_suite(const std::vector<Scenario>& scenarios, const RobotModel& model, const RigLayout& rig,
                             Planner& planner, std::uint64_t seed, const SuiteOptions& opt = {},
                             Json config = Json::object()) {
  SuiteReport rep;
  rep.planner = planner.name();
  rep.rig = rig.kind;
  rep.seed = seed;
  config["seed"] = seed;
  config["rig"] = rig_name(rig.kind);
  config["planner_name"] = rep.planner;
  config["noise"] = io::noise(opt.noise);
  config["closed_loop"] = opt.closed_loop;
  rep.config = config;
  rep.fingerprint = io::fingerprint(config);
  std::vector<const Scenario*> order;
  for (const auto& s : scenarios) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const Scenario* a, const Scenario* b) { return a->id < b->id; });
  for (const Scenario* s : order) rep.trials.push_back(run_trial(*s, model, rig, planner, seed, opt));
  rep.aggregates = aggregate(rep.trials);
  return rep;
}

// ---------------------------------------------------------------------------
// Report IO.

inline Json trial_json(const TrialOutcome& t) {
  return {{"scenario_id", t.scenario_id},
          {"kind", kind_name(t.kind)},
          {"executed", io::trajectory(t.executed)},
          {"collision_frames", t.collision_frames},
          {"collided", t.collided},
          {"success", t.success},
          {"latency_ms", t.latency_ms},
          {"no_solution", t.no_solution},
          {"selected", t.selected},
          {"fallback", t.fallback},
          {"cloud_points", t.cloud_points},
          {"note", t.note}};
}

inline Json report_json(const SuiteReport& r) {
  Json rows = Json::array();
  for (const auto& t : r.trials) rows.push_back(trial_json(t));
  const auto& a = r.aggregates;
  return {{"planner", r.planner},
          {"rig", rig_name(r.rig)},
          {"seed", r.seed},
          {"fingerprint", r.fingerprint},
          {"config", r.config},
          {"aggregates",
           {{"trials", a.trials},
            {"collision_rate", a.collision_rate},
            {"success_rate", a.success_rate},
            {"no_solution_rate", a.no_solution_rate},
            {"mean_latency_ms", a.mean_latency_ms},
            {"median_latency_ms", a.median_latency_ms},
            {"fallbacks", a.fallbacks}}},
          {"trials", rows}};
}

inline SuiteReport report_from_json(const Json& j) {
  SuiteReport r;
  r.planner = j.at("planner").get<std::string>();
  const auto rig = j.at("rig").get<std::string>();
  if (rig != "egocentric" && rig != "exocentric") throw Error(ErrorKind::validation, "report: unknown rig " + rig);
  r.rig = rig == "egocentric" ? RigKind::egocentric : RigKind::exocentric;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.fingerprint = j.at("fingerprint").get<std::string>();
  r.config = j.value("config", Json::object());
  for (const auto& t : j.at("trials")) {
    TrialOutcome o;
    o.scenario_id = t.at("scenario_id").get<std::string>();
    o.kind = parse_kind(t.at("kind").get<std::string>());
    o.executed = io::trajectory(t.at("executed"));
    o.collision_frames = t.at("collision_frames").get<int>();
    o.collided = t.at("collided").get<bool>();
    o.success = t.at("success").get<bool>();
    o.latency_ms = t.at("latency_ms").get<double>();
    o.no_solution = t.at("no_solution").get<bool>();
    o.selected = t.value("selected", -1);
    o.fallback = t.value("fallback", false);
    o.cloud_points = t.value("cloud_points", std::size_t{0});
    o.note = t.value("note", std::string());
    if (o.collided != (o.collision_frames > 0))
      throw Error(ErrorKind::validation, "report: trial " + o.scenario_id + " collided flag disagrees with frames");
    if (o.success && o.no_solution)
      throw Error(ErrorKind::validation, "report: trial " + o.scenario_id + " succeeds without a solution");
    r.trials.push_back(std::move(o));
  }
  r.aggregates = aggregate(r.trials);
  return r;
}

inline std::string report_table(const SuiteReport& r) {
  const auto& a = r.aggregates;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "planner %s | rig %s | seed %llu | fingerprint %s\n"
                "%-18s %10s\n%-18s %10zu\n%-18s %9.1f%%\n%-18s %9.1f%%\n%-18s %9.1f%%\n%-18s %10.2f\n%-18s %10.2f\n"
                "%-18s %10zu\n",
                r.planner.c_str(), std::string(rig_name(r.rig)).c_str(), static_cast<unsigned long long>(r.seed),
                r.fingerprint.c_str(), "metric", "value", "trials", a.trials, "collided", 100.0 * a.collision_rate,
                "success", 100.0 * a.success_rate, "no solution", 100.0 * a.no_solution_rate, "mean latency ms",
                a.mean_latency_ms, "median latency ms", a.median_latency_ms, "fallbacks", a.fallbacks);
  return buf;
}

// ---------------------------------------------------------------------------
// Comparison.

struct Comparison {
  std::size_t trials = 0;
  std::size_t base_collided = 0, treat_collided = 0;
  std::size_t base_success = 0, treat_success = 0;
  std::optional<double> collision_reduction;  // (base - treat) / base
  std::optional<double> success_improvement;  // (treat - base) / base
  std::optional<double> latency_ratio;        // treat mean / base mean
};

/// Both reports must cover the same scenario ids. With
/// `baseline_solved_only`, trials where the baseline found no solution are
/// dropped from both sides.
inline Comparison compare_reports(const SuiteReport& treatment, const SuiteReport& baseline,
                                  bool baseline_solved_only = false) {
  std::map<std::string, const TrialOutcome*> base;
  for (const auto& t : baseline.trials) base[t.scenario_id] = &t;
  if (base.size() != treatment.trials.size())
    throw Error(ErrorKind::validation, "compare: reports cover different scenario sets");
  Comparison c;
  double base_lat = 0.0, treat_lat = 0.0;
  for (const auto& t : treatment.trials) {
    const auto it = base.find(t.scenario_id);
    if (it == base.end()) throw Error(ErrorKind::validation, "compare: scenario " + t.scenario_id + " missing from baseline");
    const TrialOutcome& b = *it->second;
    if (baseline_solved_only && b.no_solution) continue;
    ++c.trials;
    c.base_collided += b.collided;
    c.treat_collided += t.collided;
    c.base_success += b.success;
    c.treat_success += t.success;
    base_lat += b.latency_ms;
    treat_lat += t.latency_ms;
  }
  if (c.trials == 0) throw Error(ErrorKind::validation, "compare: no trials left to compare");
  auto rel = [](double num, double den) -> std::optional<double> {
    if (den == 0.0) return num == 0.0 ? std::optional<double>(0.0) : std::nullopt;
    return num / den;
  };
  c.collision_reduction = rel(double(c.base_collided) - double(c.treat_collided), double(c.base_collided));
  c.success_improvement = rel(double(c.treat_success) - double(c.base_success), double(c.base_success));
  c.latency_ratio = base_lat > 0.0 ? std::optional<double>(treat_lat / base_lat)
                                   : (treat_lat == 0.0 ? std::optional<double>(1.0) : std::nullopt);
  return c;
}

inline Json comparison_json(const Comparison& c) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"trials", c.trials},
          {"baseline_collided", c.base_collided},
          {"treatment_collided", c.treat_collided},
          {"baseline_success", c.base_success},
          {"treatment_success", c.treat_success},
          {"collision_reduction", opt(c.collision_reduction)},
          {"success_improvement", opt(c.success_improvement)},
          {"latency_ratio", opt(c.latency_ratio)}};
}

inline std::string comparison_table(const Comparison& c) {
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char b[32];
    std::snprintf(b, sizeof b, "%.1f%%", 100.0 * *v);
    return std::string(b);
  };
  auto ratio = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char b[32];
    std::snprintf(b, sizeof b, "%.3f", *v);
    return std::string(b);
  };
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-22s %10s %10s %12s\n%-22s %10zu %10zu %12s\n%-22s %10zu %10zu %12s\n%-22s %10s %10s %12s\n"
                "trials compared: %zu\n",
                "metric", "baseline", "treatment", "relative", "collided trials", c.base_collided,
                c.treat_collided, (pct(c.collision_reduction) + " lower").c_str(), "successful trials",
                c.base_success, c.treat_success, (pct(c.success_improvement) + " higher").c_str(),
                "latency (treat/base)", "-", "-", ratio(c.latency_ratio).c_str(), c.trials);
  return buf;
}

// ---------------------------------------------------------------------------
// Canned scenes.

struct DrawerScene {
  World world;
  JointVector q;      // left arm reaching into the cabinet
  BoxShape target;    // box next to the forearm
};

/// Cabinet closed on every side except the face toward the robot; its top
/// panel overhangs the shoulders so the head camera cannot look in. The
/// left arm points forward into it beside a box.
inline DrawerScene drawer_scene() {
  DrawerScene d;
  auto panel = [](Vec3 lo, Vec3 hi) { return BoxShape{0.5 * (lo + hi), 0.5 * (hi - lo), Quat::Identity()}; };
  d.target = panel({0.32, 0.37, 0.92}, {0.48, 0.47, 1.08});
  d.world = World({panel({-0.05, -0.07, 1.20}, {0.82, 0.57, 1.24}),   // top
                   panel({0.15, -0.07, 0.83}, {0.82, 0.57, 0.85}),    // bottom
                   panel({0.15, 0.55, 0.83}, {0.82, 0.57, 1.24}),     // left side
                   panel({0.15, -0.07, 0.83}, {0.82, -0.05, 1.24}),   // right side
                   panel({0.78, -0.07, 0.83}, {0.80, 0.57, 1.24}),    // back
                   d.target});
  d.q.at(Side::left, kShoulderPitch) = -kPi / 2.0;
  return d;
}

/// Straight-line path blocked by one small sphere while a known smooth
/// detour (the returned expert) keeps `corridor` clearance from it.
inline std::optional<Scenario> corridor_scenario(const RobotModel& model, std::uint64_t seed, const std::string& id,
                                                 double corridor = 0.05) {
  Rng rng(derive_seed(seed, "eval.corridor"));
  const int t = kHorizonSteps;
  for (int attempt = 0; attempt < 100; ++attempt) {
    JointVector start, goal;
    for (Side s : kSides) {
      start.at(s, kShoulderPitch) = rng.uniform(-0.4, 0.2);
      start.at(s, kElbowPitch) = rng.uniform(-1.2, -0.2);
    }
    goal = start;
    goal.at(Side::left, kShoulderPitch) = rng.uniform(-1.6, -0.9);
    goal.at(Side::left, kShoulderRoll) = rng.uniform(0.0, 0.4);
    goal.at(Side::left, kElbowPitch) = rng.uniform(-1.4, -0.3);
    goal.at(Side::left, kWristPitch) = rng.uniform(-0.5, 0.5);
    const Trajectory line = linear_interpolate(start, goal, t);
    const Trajectory detour = perturb_candidates(line, 2, rng.index(1u << 30), 0.6, model).candidates[1];
    // Sphere on the hand path somewhere mid-way.
    const std::size_t w = 5 + rng.index(5);
    const Vec3 hand = end_effector_position(model, line[w], Side::left);
    const double radius = rng.uniform(0.03, 0.06);
    const SphereShape obs{hand + 0.02 * rng.unit_vector(), radius};
    const World world({obs});
    double detour_clear = std::numeric_limits<double>::infinity();
    for (const auto& q : oversample(detour, 10))
      detour_clear = std::min(detour_clear, body_clearance(world, collision_spheres_at(model, q)));
    if (detour_clear < corridor) continue;
    if (body_clearance(world, collision_spheres_at(model, goal)) < corridor) continue;
    if (count_collisions(line, world, model).frames == 0) continue;
    Scenario s;
    s.id = id;
    s.kind = ScenarioKind::collision_avoidance;
    s.start = start;
    s.goal = goal;
    s.world = world;
    s.expert.traj = detour;
    s.seed = seed;
    s.clearance_min = corridor;
    return s;
  }
  return std::nullopt;
}

/// FreeMotion scenario with random comfortable start and goal.
inline Scenario free_scenario(const RobotModel& model, std::uint64_t seed, const std::string& id) {
  const auto expert = synth_trajectory(model, seed, SynthParams{1.0});
  Scenario s;
  s.id = id;
  s.kind = ScenarioKind::free_motion;
  s.start = expert.traj.front();
  s.goal = expert.traj.back();
  s.expert.traj = linear_interpolate(s.start, s.goal, kHorizonSteps);
  s.seed = seed;
  return s;
}

}  // namespace egoplan
