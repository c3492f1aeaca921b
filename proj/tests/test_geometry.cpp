#include "egoplan/geometry.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>
#include <tuple>

namespace egoplan {
namespace {

using oracle::march;
using oracle::random_world;

TEST(Geometry, AnalyticSdfCases) {
  const World sphere({SphereShape{Vec3::Zero(), 0.5}});
  EXPECT_NEAR(sdf_point(sphere, Vec3(1, 0, 0)), 0.5, 1e-12);
  EXPECT_NEAR(sdf_point(sphere, Vec3::Zero()), -0.5, 1e-12);

  const World box({BoxShape{Vec3::Zero(), Vec3::Constant(0.5), Quat::Identity()}});
  EXPECT_NEAR(sdf_point(box, Vec3(1, 1, 1)), std::sqrt(0.75), 1e-12);
  EXPECT_NEAR(sdf_point(box, Vec3(0.2, 0, 0)), -0.3, 1e-12);
  EXPECT_NEAR(sdf_point(box, Vec3(0, 0, 0.5)), 0.0, 1e-12);

  const World cap({CapsuleShape{Vec3(-1, 0, 0), Vec3(1, 0, 0), 0.25}});
  EXPECT_NEAR(sdf_point(cap, Vec3(0, 1, 0)), 0.75, 1e-12);
  EXPECT_NEAR(sdf_point(cap, Vec3(2, 0, 0)), 0.75, 1e-12);
  EXPECT_NEAR(sdf_point(cap, Vec3(0.5, 0, 0)), -0.25, 1e-12);

  const World rotated({BoxShape{Vec3(1, 0, 0), Vec3(0.5, 0.1, 0.1),
                                Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()))}});
  EXPECT_NEAR(sdf_point(rotated, Vec3(1, 0.9, 0)), 0.4, 1e-12);
}

TEST(Geometry, EmptyWorld) {
  const World w;
  EXPECT_TRUE(std::isinf(sdf_point(w, Vec3::Zero())));
  EXPECT_FALSE(raycast(w, Vec3::Zero(), Vec3::UnitX(), 10.0));
}

TEST(Geometry, RejectsInvalidObstacles) {
  EXPECT_THROW(World({SphereShape{Vec3::Zero(), 0.0}}), Error);
  EXPECT_THROW(World({BoxShape{Vec3::Zero(), Vec3(0.1, -0.1, 0.1), Quat::Identity()}}), Error);
  EXPECT_THROW(World({CapsuleShape{Vec3::Ones(), Vec3::Ones(), 0.1}}), Error);
}

TEST(Geometry, BoundsContainEveryObstacle) {
  Rng rng(4);
  const World w = random_world(rng, 30);
  for (const auto& o : w.obstacles()) EXPECT_TRUE(w.bounds().contains(bounding_box(o)));
}

TEST(Geometry, RobotSdf) {
  const std::vector<BodySphere> one{{Vec3::Zero(), 0.1}};
  EXPECT_NEAR(robot_sdf(one, Vec3(0.3, 0, 0)), 0.2, 1e-15);
  EXPECT_EQ(robot_sdf(one, Vec3::Zero()), -0.1);
  EXPECT_THROW(robot_sdf(std::vector<BodySphere>{}, Vec3::Zero()), Error);

  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<BodySphere> s;
    for (int i = 0; i < 24; ++i)
      s.push_back({Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)), rng.uniform(0.02, 0.2)});
    const Vec3 p(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
    EXPECT_EQ(robot_sdf(s, p), oracle::min_sphere_distance(s, p));
    bool outside_all = true;
    for (const auto& b : s) outside_all &= (p - b.center).norm() > b.radius;
    EXPECT_EQ(robot_sdf(s, p) > 0.0, outside_all);
  }
}

TEST(Geometry, RaycastAnalytic) {
  const World w({SphereShape{Vec3(2, 0, 0), 0.5}});
  auto t = raycast(w, Vec3::Zero(), Vec3::UnitX(), 10.0);
  ASSERT_TRUE(t);
  EXPECT_NEAR(*t, 1.5, 1e-12);
  EXPECT_FALSE(raycast(w, Vec3::Zero(), Vec3::UnitX(), 1.0));
  EXPECT_FALSE(raycast(w, Vec3::Zero(), -Vec3::UnitX(), 10.0));
  EXPECT_THROW(raycast(w, Vec3::Zero(), Vec3(2, 0, 0), 10.0), Error);

  // From inside, the exit surface counts.
  t = raycast(w, Vec3(2, 0, 0), Vec3::UnitY(), 10.0);
  ASSERT_TRUE(t);
  EXPECT_NEAR(*t, 0.5, 1e-12);

  const World cap({CapsuleShape{Vec3(1, -1, 0), Vec3(1, 1, 0), 0.2}});
  t = raycast(cap, Vec3::Zero(), Vec3::UnitX(), 10.0);
  ASSERT_TRUE(t);
  EXPECT_NEAR(*t, 0.8, 1e-12);
  t = raycast(cap, Vec3(1, 3, 0), -Vec3::UnitY(), 10.0);
  ASSERT_TRUE(t);
  EXPECT_NEAR(*t, 1.8, 1e-12);
}

TEST(Geometry, RaycastAgreesWithSphereMarching) {
  Rng rng(21);
  const World w = random_world(rng, 40, 0.8);
  int hits = 0;
  for (int i = 0; i < 1000; ++i) {
    Vec3 o;
    do {
      o = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    } while (sdf_point_bruteforce(w, o) < 0.01);
    const Vec3 d = rng.unit_vector();
    const auto got = raycast(w, o, d, 4.0);
    const auto ref = march(w, o, d, 4.0);
    ASSERT_EQ(got.has_value(), ref.has_value()) << "ray " << i;
    if (got) {
      ++hits;
      EXPECT_NEAR(*got, *ref, 1e-3);
      EXPECT_LT(std::abs(sdf_point(w, o + *got * d)), 1e-6);
    }
  }
  EXPECT_GT(hits, 200);
}

TEST(Geometry, IndexedQueriesBitIdenticalToBruteForce) {
  Rng rng(33);
  for (int scene = 0; scene < 5; ++scene) {
    const World w = random_world(rng, 5 + 10 * scene);
    for (int i = 0; i < 2000; ++i) {
      const Vec3 p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
      ASSERT_EQ(sdf_point(w, p), sdf_point_bruteforce(w, p));
      const Vec3 d = rng.unit_vector();
      const auto a = raycast(w, p, d, 3.0);
      const auto b = raycast_bruteforce(w, p, d, 3.0);
      ASSERT_EQ(a.has_value(), b.has_value());
      if (a) {
        ASSERT_EQ(*a, *b);
      }
    }
  }
}

TEST(Geometry, SdfIsOneLipschitz) {
  Rng rng(44);
  const World w = random_world(rng, 15);
  for (int i = 0; i < 10000; ++i) {
    const Vec3 p(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    const Vec3 q = p + rng.unit_vector() * rng.uniform(0.0, 0.5);
    EXPECT_LE(std::abs(sdf_point(w, p) - sdf_point(w, q)), (p - q).norm() + 1e-9);
  }
}

TEST(Geometry, TransformedWorldPreservesDistances) {
  Rng rng(45);
  const World w = random_world(rng, 10);
  const Pose t{rng.rotation(), Vec3(0.3, -0.2, 1.0)};
  const World moved = w.transformed(t);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    EXPECT_NEAR(sdf_point(w, p), sdf_point(moved, t.apply(p)), 1e-12);
  }
}

TEST(Geometry, CloudBinaryRoundTrip) {
  PointCloud c;
  c.provenance = Provenance::exocentric;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) c.points.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
  std::stringstream ss;
  write_cloud(ss, c);
  EXPECT_EQ(ss.str().size(), 4u + 4u + 8u + 1u + 100u * 12u);
  EXPECT_EQ(ss.str().substr(0, 4), "EPCL");
  const PointCloud back = read_cloud(ss);
  EXPECT_EQ(back.provenance, Provenance::exocentric);
  ASSERT_EQ(back.size(), 100u);
  for (int i = 0; i < 100; ++i)
    for (int k = 0; k < 3; ++k) EXPECT_EQ(back.points[i][k], double(float(c.points[i][k])));

  std::stringstream bad("XXXXgarbage");
  EXPECT_THROW(read_cloud(bad), Error);
}

// ---------------------------------------------------------------------------

std::vector<Vec3> in_reach_points(const RobotModel& m, const JointVector& q, Rng& rng, std::size_t n) {
  const auto body = oracle::spheres(m, q);
  const Vec3 c = m.shoulder_center();
  std::vector<Vec3> out;
  while (out.size() < n) {
    const Vec3 p = c + Vec3(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8));
    if ((p - c).norm() > 0.8 || oracle::min_sphere_distance(body, p) <= 0.0) continue;
    out.push_back(p);
  }
  return out;
}

TEST(Geometry, PruneDropsUnreachable) {
  const RobotModel m = default_robot_model();
  PointCloud c;
  for (int i = 0; i < 5; ++i) c.points.push_back(m.shoulder_center() + Vec3(2.0 + i, 0, 0));
  PruneStats st;
  EXPECT_TRUE(prune_pointcloud(c, m, JointVector{}, 10000, 1, &st).empty());
  EXPECT_EQ(st.unreachable, 5u);
}

TEST(Geometry, PruneDropsSelfPoints) {
  const RobotModel m = default_robot_model();
  PointCloud c;
  c.points.push_back(forward_kinematics(m, JointVector{}).link(Side::left, kElbowPitch).translation);
  PruneStats st;
  EXPECT_TRUE(prune_pointcloud(c, m, JointVector{}, 10000, 1, &st).empty());
  EXPECT_EQ(st.self_collision, 1u);
}

TEST(Geometry, PruneKeepsSmallReachableClouds) {
  const RobotModel m = default_robot_model();
  Rng rng(6);
  PointCloud c;
  c.points = in_reach_points(m, JointVector{}, rng, 100);
  const PointCloud out = prune_pointcloud(c, m, JointVector{}, 10000, 1);
  ASSERT_EQ(out.size(), 100u);
  EXPECT_EQ(out.points, c.points);
  // Idempotent once within budget and reachable.
  EXPECT_EQ(prune_pointcloud(out, m, JointVector{}, 10000, 2).points, out.points);
}

TEST(Geometry, PruneVoxelBudget) {
  const RobotModel m = default_robot_model();
  Rng rng(7);
  PointCloud c;
  c.points = in_reach_points(m, JointVector{}, rng, 50000);
  PruneStats st;
  const PointCloud out = prune_pointcloud(c, m, JointVector{}, 10000, 99, &st);
  EXPECT_LE(out.size(), 10000u);
  ASSERT_GT(st.voxel_size, 0.0);

  // Voxel-occupancy oracle: every occupied input voxel keeps exactly one point.
  auto key = [](const Vec3& p, double v) {
    return std::make_tuple(std::floor(p.x() / v), std::floor(p.y() / v), std::floor(p.z() / v));
  };
  std::set<std::tuple<double, double, double>> in_keys, out_keys;
  for (const auto& p : c.points) in_keys.insert(key(p, st.voxel_size));
  for (const auto& p : out.points) out_keys.insert(key(p, st.voxel_size));
  EXPECT_EQ(in_keys, out_keys);
  EXPECT_EQ(out_keys.size(), out.size());
  // Smallest admissible size in the doubling sequence.
  if (st.voxel_size > kInitialVoxel) {
    std::set<std::tuple<double, double, double>> finer;
    for (const auto& p : c.points) finer.insert(key(p, st.voxel_size / 2));
    EXPECT_GT(finer.size(), 10000u);
  }
  // Subset of the input.
  std::set<std::tuple<double, double, double>> input;
  for (const auto& p : c.points) input.insert({p.x(), p.y(), p.z()});
  for (const auto& p : out.points) EXPECT_TRUE(input.count({p.x(), p.y(), p.z()}));

  // Deterministic per seed.
  EXPECT_EQ(prune_pointcloud(c, m, JointVector{}, 10000, 99).points, out.points);
}

}  // namespace
}  // namespace egoplan
