// egoplan: scenario generation, rendering, planning, evaluation and report
// comparison behind one binary. Every config is loaded and validated before
// any work starts; every JSON artifact carries the master seed and the config
// fingerprint.
#include "egoplan/datagen.hpp"
#include "egoplan/evaluation.hpp"
#include "egoplan/io.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace fs = std::filesystem;
using namespace egoplan;

namespace {

// ---------------------------------------------------------------------------
// Shared options and config loading.

struct SensorOpts {
  std::string rig = "ego";
  std::string rig_config;
  double noise_sigma = 0.0;
  double dropout = 0.0;
  std::size_t max_points = kExoMaxPoints;
};

struct PlannerOpts {
  std::string kind;
  std::string config;
  std::size_t candidates = 0;
  std::string policy_cmd;
  std::string policy_socket;
  int timeout_ms = 0;
};

void add_robot(CLI::App* app, std::string& path) {
  app->add_option("--robot", path, "robot model JSON (default: built-in nominal model)");
}

void add_seed(CLI::App* app, std::uint64_t& seed) { app->add_option("--seed", seed, "master seed")->capture_default_str(); }

void add_sensor(CLI::App* app, SensorOpts& o) {
  app->add_option("--rig", o.rig, "ego or exo")->capture_default_str();
  app->add_option("--rig-config", o.rig_config, "rig layout JSON (overrides the built-in layout)");
  app->add_option("--noise-sigma", o.noise_sigma, "relative range noise")->capture_default_str();
  app->add_option("--dropout", o.dropout, "per-zone dropout probability")->capture_default_str();
  app->add_option("--max-points", o.max_points, "exocentric cloud budget")->capture_default_str();
}

void add_planner(CLI::App* app, PlannerOpts& o) {
  app->add_option("--planner", o.kind, "baseline, ito-perturb, ito-extern or straight");
  app->add_option("--planner-config", o.config, "planner JSON");
  app->add_option("--candidates", o.candidates, "candidate count");
  app->add_option("--policy-cmd", o.policy_cmd, "external candidate generator command (stdio)");
  app->add_option("--policy-socket", o.policy_socket, "external candidate generator unix socket");
  app->add_option("--timeout-ms", o.timeout_ms, "external generator timeout");
}

RobotModel load_robot(const std::string& path) {
  if (path.empty()) return default_robot_model();
  return io::load_json(path, [](const Json& j) { return io::robot_model(j); });
}

RigKind parse_rig(const std::string& s) {
  if (s == "ego" || s == "egocentric") return RigKind::egocentric;
  if (s == "exo" || s == "exocentric") return RigKind::exocentric;
  throw Error(ErrorKind::invalid_argument, "unknown rig '" + s + "' (ego, exo)");
}

RigLayout load_rig(const SensorOpts& o, const RobotModel& model) {
  const RigKind kind = parse_rig(o.rig);
  if (o.rig_config.empty())
    return kind == RigKind::egocentric ? default_egocentric_rig() : default_exocentric_rig(model);
  RigLayout r = io::load_json(o.rig_config, [](const Json& j) { return io::rig(j); });
  if (r.kind != kind)
    throw Error(ErrorKind::validation, o.rig_config + ": layout is " + std::string(rig_name(r.kind)) +
                                           " but --rig asks for " + std::string(rig_name(kind)));
  return r;
}

NoiseParams load_noise(const SensorOpts& o) {
  NoiseParams n{o.noise_sigma, o.dropout};
  n.validate();
  require(o.max_points >= 1, "--max-points must be >= 1");
  return n;
}

PlannerSpec load_planner(const PlannerOpts& o) {
  PlannerSpec p;
  if (!o.config.empty()) p = io::load_json(o.config, [](const Json& j) { return planner_from_json(j); });
  if (!o.kind.empty()) p.kind = parse_planner(o.kind);
  if (o.candidates) p.candidates = o.candidates;
  if (!o.policy_cmd.empty()) p.extern_command = o.policy_cmd;
  if (!o.policy_socket.empty()) p.extern_socket = o.policy_socket;
  if (o.timeout_ms) p.timeout_ms = o.timeout_ms;
  p.validate();
  return p;
}

Scenario load_scenario(const std::string& path) {
  return io::load_json(path, [](const Json& j) { return scenario_from_json(j); });
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string digest_file(const std::string& path) { return hex(fnv1a(io::read_text(path))); }

Json sensor_config(const RigLayout& rig, const NoiseParams& noise, std::size_t max_points) {
  return {{"rig_layout", io::fingerprint(io::rig(rig))}, {"noise", io::noise(noise)}, {"max_points", max_points}};
}

// Adds the run stamp to an artifact.
Json stamped(Json j, std::uint64_t seed, const Json& config) {
  j["master_seed"] = seed;
  j["fingerprint"] = io::fingerprint(config);
  return j;
}

void verify_or_throw(const RobotModel& model, const Scenario& s, const std::string& where) {
  const auto rep = verify_scenario(model, s);
  if (const auto* f = rep.first_failure())
    throw Error(ErrorKind::validation, where + ": check '" + f->name + "' failed: " + f->detail);
}

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw Error(ErrorKind::invalid_argument, "cannot create " + out.string());
}

// ---------------------------------------------------------------------------
// gen

struct GenOpts {
  std::string robot, datagen, out, mix;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> imports;
  bool dataset = false;
  SensorOpts sensor;
};

int cmd_gen(const GenOpts& o) {
  const RobotModel model = load_robot(o.robot);
  BatchParams params;
  if (!o.datagen.empty()) params = io::load_json(o.datagen, [](const Json& j) { return batch_params_from_json(j); });
  if (o.count) params.count = o.count;
  if (!o.mix.empty()) params.mix = parse_mix(o.mix);
  const RigLayout rig = load_rig(o.sensor, model);
  const NoiseParams noise = load_noise(o.sensor);

  std::vector<ExpertTrajectory> experts;
  Json import_digests = Json::array();
  for (const auto& path : o.imports) {
    std::istringstream in(io::read_text(path));
    ImportResult r;
    try {
      r = import_trajectory(model, in);
    } catch (const Error& e) {
      throw Error(ErrorKind::validation, path + ": " + e.what());
    }
    for (const auto& w : r.warnings) std::cerr << "warning: " << path << ": " << w << "\n";
    experts.push_back(std::move(r.expert));
    import_digests.push_back(digest_file(path));
  }

  Json config{{"command", "gen"},
              {"seed", o.seed},
              {"robot", io::fingerprint(io::robot_model(model))},
              {"datagen", batch_params_json(params)},
              {"imports", import_digests},
              {"dataset", o.dataset}};
  if (o.dataset) config["sensing"] = sensor_config(rig, noise, o.sensor.max_points);

  const BatchResult batch = generate_batch(model, params, o.seed, experts);

  const fs::path out(o.out);
  prepare_out(out);
  fs::remove_all(out / "scenarios");
  Json listing = Json::array(), discards = Json::array();
  std::map<std::string, std::size_t> kinds;
  for (const auto& s : batch.scenarios) {
    io::write_text(out / "scenarios" / (s.id + ".json"), io::dump(stamped(scenario_json(s), o.seed, config)));
    listing.push_back({{"id", s.id}, {"kind", kind_name(s.kind)}, {"obstacles", s.world.obstacles().size()}});
    ++kinds[std::string(kind_name(s.kind))];
  }
  for (const auto& d : batch.discards) discards.push_back({{"id", d.id}, {"kind", kind_name(d.kind)}, {"reason", d.reason}});

  std::size_t records = 0;
  if (o.dataset) {
    std::ofstream rec(out / "records.jsonl", std::ios::binary), side(out / "frames.edfb", std::ios::binary);
    if (!rec || !side) throw Error(ErrorKind::invalid_argument, "cannot write dataset under " + out.string());
    records = build_dataset(model, rig, batch.scenarios, noise, o.seed, rec, side);
  } else {
    fs::remove(out / "records.jsonl");
    fs::remove(out / "frames.edfb");
  }
  Json manifest{{"config", config}, {"scenarios", listing}, {"discards", discards}, {"kinds", kinds}};
  if (o.dataset) manifest["dataset"] = {{"records", "records.jsonl"}, {"frames", "frames.edfb"}, {"count", records}};
  io::write_text(out / "manifest.json", io::dump(stamped(manifest, o.seed, config)));

  std::printf("generated %zu scenarios (%zu discarded attempts) in %s, fingerprint %s\n", batch.scenarios.size(),
              batch.discards.size(), out.string().c_str(), io::fingerprint(config).c_str());
  if (o.dataset) std::printf("dataset: %zu records\n", records);
  return 0;
}

// ---------------------------------------------------------------------------
// render

struct RenderOpts {
  std::string robot, scenario, out;
  std::size_t t = 0;
  std::uint64_t seed = 0;
  SensorOpts sensor;
};

int cmd_render(const RenderOpts& o) {
  const RobotModel model = load_robot(o.robot);
  const RigLayout rig = load_rig(o.sensor, model);
  const NoiseParams noise = load_noise(o.sensor);
  const Scenario s = load_scenario(o.scenario);
  if (o.t >= s.expert.traj.size())
    throw Error(ErrorKind::invalid_argument, "--t " + std::to_string(o.t) + " is past the expert's " +
                                                 std::to_string(s.expert.traj.size()) + " waypoints");
  Json config{{"command", "render"},
              {"seed", o.seed},
              {"robot", io::fingerprint(io::robot_model(model))},
              {"scenario", digest_file(o.scenario)},
              {"t", o.t},
              {"sensing", sensor_config(rig, noise, o.sensor.max_points)}};

  const JointVector& q = s.expert.traj[o.t];
  const RigObservation obs =
      render_rig(s.world, model, q, rig, noise, observation_seed(o.seed, s.id, o.t), static_cast<std::int64_t>(o.t));
  PointCloud cloud = deproject(obs);
  const std::size_t raw = cloud.size();
  if (rig.kind == RigKind::exocentric)
    cloud = prune_pointcloud(cloud, model, q, o.sensor.max_points, derive_seed(o.seed, "render.prune"));

  const fs::path out(o.out);
  prepare_out(out);
  {
    std::ofstream f(out / "frames.edfb", std::ios::binary), c(out / "cloud.epcl", std::ios::binary);
    if (!f || !c) throw Error(ErrorKind::invalid_argument, "cannot write under " + out.string());
    write_observation(f, obs);
    write_cloud(c, cloud);
  }
  const Json meta{{"config", config},
                  {"scenario_id", s.id},
                  {"frames", obs.frames.size()},
                  {"raw_points", raw},
                  {"points", cloud.size()}};
  io::write_text(out / "render.json", io::dump(stamped(meta, o.seed, config)));
  std::printf("%s t=%zu: %zu frames, %zu points (%zu before pruning)\n", s.id.c_str(), o.t, obs.frames.size(),
              cloud.size(), raw);
  return 0;
}

// ---------------------------------------------------------------------------
// plan

struct PlanOpts {
  std::string robot, scenario, out;
  std::uint64_t seed = 0;
  bool closed_loop = false;
  SensorOpts sensor;
  PlannerOpts planner;
};

int cmd_plan(const PlanOpts& o) {
  const RobotModel model = load_robot(o.robot);
  const RigLayout rig = load_rig(o.sensor, model);
  const NoiseParams noise = load_noise(o.sensor);
  const PlannerSpec spec = load_planner(o.planner);
  const Scenario s = load_scenario(o.scenario);
  verify_or_throw(model, s, o.scenario);
  Json config{{"command", "plan"},
              {"seed", o.seed},
              {"robot", io::fingerprint(io::robot_model(model))},
              {"scenario", digest_file(o.scenario)},
              {"planner", planner_json(spec)},
              {"closed_loop", o.closed_loop},
              {"sensing", sensor_config(rig, noise, o.sensor.max_points)}};

  auto planner = make_planner(model, spec);
  SuiteOptions opt;
  opt.noise = noise;
  opt.exo_max_points = o.sensor.max_points;
  opt.closed_loop = o.closed_loop;
  const TrialOutcome row = run_trial(s, model, rig, *planner, o.seed, opt);

  const Json result{{"config", config}, {"planner", planner->name()}, {"trial", trial_json(row)}};
  if (!o.out.empty()) {
    prepare_out(o.out);
    io::write_text(fs::path(o.out) / "plan.json", io::dump(stamped(result, o.seed, config)));
  }
  if (!row.note.empty()) std::cerr << "note: " << row.note << "\n";
  if (row.no_solution) {
    std::fprintf(stderr, "%s: %s found no solution\n", s.id.c_str(), planner->name().c_str());
    return 4;
  }
  std::printf("%s: %s, %zu waypoints, selected %d, collided %s, success %s, %.2f ms\n", s.id.c_str(),
              planner->name().c_str(), row.executed.size(), row.selected, row.collided ? "yes" : "no",
              row.success ? "yes" : "no", row.latency_ms);
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
  std::string robot, suite, out;
  std::uint64_t seed = 0;
  bool closed_loop = false;
  SensorOpts sensor;
  PlannerOpts planner;
};

std::vector<fs::path> suite_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::missing_input, "suite directory not found: " + dir.string());
  const fs::path root = fs::is_directory(dir / "scenarios") ? dir / "scenarios" : dir;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "manifest.json")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::validation, "suite " + dir.string() + " holds no scenario files");
  return files;
}

int cmd_eval(const EvalOpts& o) {
  const RobotModel model = load_robot(o.robot);
  const RigLayout rig = load_rig(o.sensor, model);
  const NoiseParams noise = load_noise(o.sensor);
  const PlannerSpec spec = load_planner(o.planner);
  std::vector<Scenario> suite;
  std::uint64_t digest = fnv1a("");
  for (const auto& f : suite_files(o.suite)) {
    suite.push_back(load_scenario(f.string()));
    verify_or_throw(model, suite.back(), f.string());
    digest = fnv1a(io::read_text(f), digest);
  }
  Json config{{"command", "eval"},
              {"robot", io::fingerprint(io::robot_model(model))},
              {"suite", hex(digest)},
              {"planner", planner_json(spec)},
              {"sensing", sensor_config(rig, noise, o.sensor.max_points)}};

  auto planner = make_planner(model, spec);
  SuiteOptions opt;
  opt.noise = noise;
  opt.exo_max_points = o.sensor.max_points;
  opt.closed_loop = o.closed_loop;
  const SuiteReport rep = run_suite(suite, model, rig, *planner, o.seed, opt, config);

  const fs::path out(o.out);
  prepare_out(out);
  io::write_text(out / "report.json", io::dump(report_json(rep)));
  io::write_text(out / "report.txt", report_table(rep));
  std::fputs(report_table(rep).c_str(), stdout);
  return 0;
}

// ---------------------------------------------------------------------------
// compare

struct CompareOpts {
  std::string treatment, baseline, out;
  bool solved_only = false;
};

SuiteReport load_report(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "report.json";
  return io::load_json(p, [](const Json& j) { return report_from_json(j); });
}

int cmd_compare(const CompareOpts& o) {
  const SuiteReport treat = load_report(o.treatment), base = load_report(o.baseline);
  const Comparison c = compare_reports(treat, base, o.solved_only);
  std::printf("treatment %s (%s) vs baseline %s (%s)\n", treat.planner.c_str(), treat.fingerprint.c_str(),
              base.planner.c_str(), base.fingerprint.c_str());
  std::fputs(comparison_table(c).c_str(), stdout);
  if (!o.out.empty()) {
    Json j = comparison_json(c);
    j["treatment"] = {{"planner", treat.planner}, {"seed", treat.seed}, {"fingerprint", treat.fingerprint}};
    j["baseline"] = {{"planner", base.planner}, {"seed", base.seed}, {"fingerprint", base.fingerprint}};
    j["baseline_solved_only"] = o.solved_only;
    prepare_out(o.out);
    io::write_text(fs::path(o.out) / "comparison.json", io::dump(j));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// inspect

struct InspectOpts {
  std::string robot, scenario;
};

int cmd_inspect(const InspectOpts& o) {
  const RobotModel model = load_robot(o.robot);
  const Scenario s = load_scenario(o.scenario);
  const Trajectory& e = s.expert.traj;
  double joint_len = 0.0, hand_len = 0.0;
  for (std::size_t i = 1; i < e.size(); ++i) {
    for (int j = 0; j < kNumJoints; ++j) joint_len += std::abs(e[i][j] - e[i - 1][j]);
    for (Side side : kSides)
      hand_len += (end_effector_position(model, e[i], side) - end_effector_position(model, e[i - 1], side)).norm();
  }
  double clearance = std::numeric_limits<double>::infinity();
  if (!s.world.empty() && !e.empty())
    for (const auto& q : oversample(e, kCheckOversample))
      clearance = std::min(clearance, body_clearance(s.world, collision_spheres_at(model, q)));

  std::printf("id              %s\n", s.id.c_str());
  std::printf("kind            %s\n", std::string(kind_name(s.kind)).c_str());
  std::printf("obstacles       %zu\n", s.world.obstacles().size());
  std::printf("waypoints       %zu (%.2f s)\n", e.size(), e.empty() ? 0.0 : double(e.size() - 1) * e.dt);
  std::printf("path length     %.4f rad joint-space, %.4f m hand travel\n", joint_len, hand_len);
  if (std::isinf(clearance))
    std::printf("min clearance   none (empty world)\n");
  else
    std::printf("min clearance   %.4f m\n", clearance);

  const auto rep = verify_scenario(model, s);
  std::printf("verification    %s\n", rep.ok() ? "ok" : "FAILED");
  if (const auto* f = rep.first_failure()) {
    std::fprintf(stderr, "%s: check '%s' failed: %s\n", o.scenario.c_str(), f->name.c_str(), f->detail.c_str());
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// defaults

int cmd_defaults(const std::string& out) {
  const RobotModel model = default_robot_model();
  const fs::path dir(out);
  prepare_out(dir);
  io::write_text(dir / "robot_nominal.json", io::dump(io::robot_model(model)));
  io::write_text(dir / "rig_egocentric.json", io::dump(io::rig(default_egocentric_rig())));
  io::write_text(dir / "rig_exocentric.json", io::dump(io::rig(default_exocentric_rig(model))));
  io::write_text(dir / "planner_default.json", io::dump(planner_json(PlannerSpec{})));
  io::write_text(dir / "datagen_default.json", io::dump(batch_params_json(BatchParams{})));
  std::printf("wrote built-in configs to %s\n", dir.string().c_str());
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_argument: return 1;
    case ErrorKind::missing_input: return 2;
    case ErrorKind::validation: return 3;
    case ErrorKind::planner: return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"egoplan: whole-body collision avoidance scenarios, planners and evaluation"};
  app.require_subcommand(1);

  GenOpts gen;
  auto* g = app.add_subcommand("gen", "generate a verified scenario batch (and optionally a training dataset)");
  add_robot(g, gen.robot);
  add_seed(g, gen.seed);
  g->add_option("--count", gen.count, "number of scenarios");
  g->add_option("--mix", gen.mix, "kind weights, e.g. ca:0.6,stop:0.2,free:0.2");
  g->add_option("--datagen", gen.datagen, "datagen parameter JSON");
  g->add_option("--import", gen.imports, "human motion capture file (repeatable)");
  g->add_flag("--dataset", gen.dataset, "also write records.jsonl and frames.edfb");
  g->add_option("--out", gen.out, "output directory")->required();
  add_sensor(g, gen.sensor);

  RenderOpts render;
  auto* r = app.add_subcommand("render", "render a rig observation of a scenario waypoint");
  add_robot(r, render.robot);
  add_seed(r, render.seed);
  r->add_option("--scenario", render.scenario, "scenario JSON")->required();
  r->add_option("--t", render.t, "expert waypoint index")->capture_default_str();
  r->add_option("--out", render.out, "output directory")->required();
  add_sensor(r, render.sensor);

  PlanOpts plan;
  auto* p = app.add_subcommand("plan", "plan one scenario from its start observation");
  add_robot(p, plan.robot);
  add_seed(p, plan.seed);
  p->add_option("--scenario", plan.scenario, "scenario JSON")->required();
  p->add_option("--out", plan.out, "output directory for plan.json");
  p->add_flag("--closed-loop", plan.closed_loop, "replan from every executed waypoint");
  add_sensor(p, plan.sensor);
  add_planner(p, plan.planner);

  EvalOpts eval;
  auto* e = app.add_subcommand("eval", "run a planner over a scenario suite");
  add_robot(e, eval.robot);
  add_seed(e, eval.seed);
  e->add_option("--suite", eval.suite, "suite directory (gen output or a folder of scenario files)")->required();
  e->add_option("--out", eval.out, "output directory for report.json and report.txt")->required();
  e->add_flag("--closed-loop", eval.closed_loop, "replan from every executed waypoint");
  add_sensor(e, eval.sensor);
  add_planner(e, eval.planner);

  CompareOpts compare;
  auto* c = app.add_subcommand("compare", "compare two suite reports");
  c->add_option("--treatment", compare.treatment, "treatment report.json or its directory")->required();
  c->add_option("--baseline", compare.baseline, "baseline report.json or its directory")->required();
  c->add_flag("--solved-only", compare.solved_only, "drop trials the baseline could not solve");
  c->add_option("--out", compare.out, "output directory for comparison.json");

  InspectOpts inspect;
  auto* i = app.add_subcommand("inspect", "summarize and verify a scenario file");
  add_robot(i, inspect.robot);
  i->add_option("--scenario", inspect.scenario, "scenario JSON")->required();

  std::string defaults_out;
  auto* d = app.add_subcommand("defaults", "write the built-in configs as JSON");
  d->add_option("--out", defaults_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 1;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*r) return cmd_render(render);
    if (*p) return cmd_plan(plan);
    if (*e) return cmd_eval(eval);
    if (*c) return cmd_compare(compare);
    if (*i) return cmd_inspect(inspect);
    if (*d) return cmd_defaults(defaults_out);
  } catch (const Error& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return exit_code(ex.kind());
  } catch (const Json::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 3;
  } catch (const fs::filesystem_error& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 2;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 1;
}
