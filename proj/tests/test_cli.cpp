// Runs the built egoplan binary end to end.
#include "egoplan/datagen.hpp"
#include "egoplan/evaluation.hpp"
#include "egoplan/io.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>

namespace fs = std::filesystem;
using namespace egoplan;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;
};

CmdResult run(const std::string& args) {
  const std::string cmd = std::string(EGOPLAN_BIN) + " " + args + " 2>&1";
  FILE* p = ::popen(cmd.c_str(), "r");
  CmdResult r;
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("egoplan_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& rel) const { return (dir_ / rel).string(); }

  fs::path dir_;
};

void expect_same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  ASSERT_EQ(fa, fb);
  for (const auto& f : fa) EXPECT_EQ(io::read_text(a / f), io::read_text(b / f)) << f;
}

}  // namespace

TEST_F(Cli, GenTwiceIsByteIdentical) {
  ASSERT_EQ(run("gen --count 10 --seed 7 --dataset --out " + at("a")).code, 0);
  ASSERT_EQ(run("gen --count 10 --seed 7 --dataset --out " + at("b")).code, 0);
  expect_same_tree(dir_ / "a", dir_ / "b");
  EXPECT_TRUE(fs::exists(dir_ / "a" / "records.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "frames.edfb"));

  const Json manifest = io::load_json(dir_ / "a" / "manifest.json");
  EXPECT_EQ(manifest.at("master_seed"), 7);
  EXPECT_EQ(manifest.at("fingerprint"), io::fingerprint(manifest.at("config")));
  ASSERT_EQ(manifest.at("scenarios").size(), 10u);
  const RobotModel model = default_robot_model();
  for (const auto& e : fs::directory_iterator(dir_ / "a" / "scenarios")) {
    const Json j = io::load_json(e.path());
    EXPECT_EQ(j.at("fingerprint"), manifest.at("fingerprint"));
    EXPECT_TRUE(verify_scenario(model, scenario_from_json(j)).ok()) << e.path();
  }

  // A different seed changes the output.
  ASSERT_EQ(run("gen --count 10 --seed 8 --out " + at("c")).code, 0);
  EXPECT_NE(io::read_text(dir_ / "a" / "scenarios" / "s00000.json"),
            io::read_text(dir_ / "c" / "scenarios" / "s00000.json"));
}

TEST_F(Cli, RegenerationReplacesStaleScenarios) {
  ASSERT_EQ(run("gen --count 6 --seed 1 --out " + at("a")).code, 0);
  ASSERT_EQ(run("gen --count 3 --seed 1 --out " + at("a")).code, 0);
  EXPECT_EQ(std::distance(fs::directory_iterator(dir_ / "a" / "scenarios"), fs::directory_iterator{}), 3);
}

TEST_F(Cli, EvalOnMissingSuiteExitsTwo) {
  const CmdResult r = run("eval --suite " + at("nowhere") + " --out " + at("rep"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("nowhere"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "rep"));
}

TEST_F(Cli, EvalThenCompareAgainstItself) {
  ASSERT_EQ(run("gen --count 4 --mix free:1 --seed 2 --out " + at("suite")).code, 0);
  const CmdResult e = run("eval --suite " + at("suite") + " --planner ito-perturb --seed 5 --out " + at("rep"));
  ASSERT_EQ(e.code, 0) << e.out;
  const SuiteReport rep = report_from_json(io::load_json(dir_ / "rep" / "report.json"));
  EXPECT_EQ(rep.trials.size(), 4u);
  EXPECT_EQ(rep.seed, 5u);
  EXPECT_EQ(rep.fingerprint, io::fingerprint(rep.config));
  EXPECT_TRUE(fs::exists(dir_ / "rep" / "report.txt"));

  const CmdResult c = run("compare --treatment " + at("rep") + " --baseline " + at("rep/report.json") + " --out " + at("cmp"));
  EXPECT_EQ(c.code, 0) << c.out;
  EXPECT_NE(c.out.find("0.0% lower"), std::string::npos) << c.out;
  EXPECT_NE(c.out.find("0.0% higher"), std::string::npos) << c.out;
  const Json cmp = io::load_json(dir_ / "cmp" / "comparison.json");
  EXPECT_EQ(cmp.at("collision_reduction"), 0.0);
  EXPECT_EQ(cmp.at("latency_ratio"), 1.0);
}

TEST_F(Cli, CompareRejectsDifferentSuites) {
  ASSERT_EQ(run("gen --count 2 --mix free:1 --seed 2 --out " + at("s1")).code, 0);
  ASSERT_EQ(run("gen --count 3 --mix free:1 --seed 2 --out " + at("s2")).code, 0);
  ASSERT_EQ(run("eval --suite " + at("s1") + " --planner straight --out " + at("r1")).code, 0);
  ASSERT_EQ(run("eval --suite " + at("s2") + " --planner straight --out " + at("r2")).code, 0);
  EXPECT_EQ(run("compare --treatment " + at("r1") + " --baseline " + at("r2")).code, 3);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_NE(run("gen --count 2 --out " + at("g") + " --bogus").code, 0);
  EXPECT_NE(run("").code, 0);
  EXPECT_NE(run("frobnicate").code, 0);
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("gen --count 2 --mix walk:1 --out " + at("g")).code, 1);
  EXPECT_EQ(run("plan --scenario x.json --planner curobo").code, 1);
  EXPECT_FALSE(fs::exists(dir_ / "g"));
}

TEST_F(Cli, InspectSummaryAndErrors) {
  ASSERT_EQ(run("gen --count 1 --mix ca:1 --seed 4 --out " + at("s")).code, 0);
  const std::string file = at("s/scenarios/s00000.json");
  const CmdResult r = run("inspect --scenario " + file);
  EXPECT_EQ(r.code, 0) << r.out;
  for (const char* key : {"collision_avoidance", "obstacles", "path length", "min clearance", "verification    ok"})
    EXPECT_NE(r.out.find(key), std::string::npos) << key;

  EXPECT_EQ(run("inspect --scenario " + at("absent.json")).code, 2);
  io::write_text(dir_ / "broken.json", "{\"id\":");
  EXPECT_EQ(run("inspect --scenario " + at("broken.json")).code, 3);

  // Tampered start: loads fine, fails verification.
  Json j = io::load_json(file);
  j["start"][0] = j["start"][0].get<double>() + 0.3;
  io::write_text(dir_ / "tampered.json", j.dump());
  const CmdResult t = run("inspect --scenario " + at("tampered.json"));
  EXPECT_EQ(t.code, 3);
  EXPECT_NE(t.out.find("failed"), std::string::npos);
}

TEST_F(Cli, PlanWritesStampedResultAndExitsFourWithoutSolution) {
  ASSERT_EQ(run("gen --count 1 --mix free:1 --seed 3 --out " + at("f")).code, 0);
  const CmdResult ok = run("plan --scenario " + at("f/scenarios/s00000.json") + " --seed 9 --out " + at("p"));
  EXPECT_EQ(ok.code, 0) << ok.out;
  const Json pj = io::load_json(dir_ / "p" / "plan.json");
  EXPECT_EQ(pj.at("master_seed"), 9);
  EXPECT_EQ(pj.at("fingerprint"), io::fingerprint(pj.at("config")));
  EXPECT_TRUE(pj.at("trial").at("success").get<bool>());

  // Stop scenarios drive an arm into an obstacle at the goal.
  ASSERT_EQ(run("gen --count 1 --mix stop:1 --seed 3 --out " + at("e")).code, 0);
  const CmdResult ns = run("plan --scenario " + at("e/scenarios/s00000.json") + " --planner baseline --out " + at("q"));
  EXPECT_EQ(ns.code, 4) << ns.out;
  EXPECT_TRUE(io::load_json(dir_ / "q" / "plan.json").at("trial").at("no_solution").get<bool>());
}

TEST_F(Cli, PlanWithExternalGenerator) {
  ASSERT_EQ(run("gen --count 1 --mix free:1 --seed 3 --out " + at("f")).code, 0);
  const CmdResult r = run("plan --scenario " + at("f/scenarios/s00000.json") + " --planner ito-extern --candidates 4 " +
                    "--policy-cmd " + CANDIDATE_STUB + " --out " + at("p"));
  EXPECT_EQ(r.code, 0) << r.out;
  const Json pj = io::load_json(dir_ / "p" / "plan.json");
  EXPECT_FALSE(pj.at("trial").at("fallback").get<bool>());
  EXPECT_EQ(pj.at("config").at("planner").at("kind"), "ito-extern");
}

TEST_F(Cli, RenderWritesReadableArtifacts) {
  ASSERT_EQ(run("gen --count 1 --mix ca:1 --seed 6 --out " + at("s")).code, 0);
  for (const char* rig : {"ego", "exo"}) {
    const std::string out = at(std::string("r_") + rig);
    const CmdResult r = run("render --scenario " + at("s/scenarios/s00000.json") + " --rig " + rig + " --t 3 --out " + out);
    ASSERT_EQ(r.code, 0) << r.out;
    std::ifstream f(fs::path(out) / "frames.edfb", std::ios::binary), c(fs::path(out) / "cloud.epcl", std::ios::binary);
    const RigObservation obs = read_observation(f);
    const PointCloud cloud = read_cloud(c);
    const Json meta = io::load_json(fs::path(out) / "render.json");
    EXPECT_EQ(meta.at("frames"), obs.frames.size());
    EXPECT_EQ(meta.at("points"), cloud.size());
    EXPECT_EQ(obs.frames.size(), std::string(rig) == "ego" ? 40u : 4u);
  }
  EXPECT_EQ(run("render --scenario " + at("s/scenarios/s00000.json") + " --t 999 --out " + at("x")).code, 1);
}

TEST_F(Cli, ShippedConfigsMatchBuiltIns) {
  const fs::path data(EGOPLAN_DATA_DIR);
  const RobotModel model = default_robot_model();
  EXPECT_EQ(io::load_json(data / "robot_nominal.json"), io::robot_model(model));
  EXPECT_EQ(io::load_json(data / "rig_egocentric.json"), io::rig(default_egocentric_rig()));
  EXPECT_EQ(io::load_json(data / "rig_exocentric.json"), io::rig(default_exocentric_rig(model)));
  EXPECT_EQ(io::load_json(data / "planner_default.json"), planner_json(PlannerSpec{}));
  EXPECT_EQ(io::load_json(data / "datagen_default.json"), batch_params_json(BatchParams{}));

  // Loading them through the flags gives the same fingerprints as the built-ins.
  const std::string flags = " --robot " + (data / "robot_nominal.json").string() + " --rig-config " +
                            (data / "rig_egocentric.json").string() + " --datagen " +
                            (data / "datagen_default.json").string();
  ASSERT_EQ(run("gen --count 2 --dataset --seed 1 --out " + at("a")).code, 0);
  ASSERT_EQ(run("gen --count 2 --dataset --seed 1 --out " + at("b") + flags).code, 0);
  expect_same_tree(dir_ / "a", dir_ / "b");

  const CmdResult mismatch = run("gen --count 1 --rig exo --rig-config " + (data / "rig_egocentric.json").string() +
                           " --out " + at("c"));
  EXPECT_EQ(mismatch.code, 3);
}
