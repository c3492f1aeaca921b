#include "egoplan/sensing.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

namespace egoplan {
namespace {

double off_axis(const Vec3& d) { return std::acos(d.z()); }

World wall_at(double z) {
  return World({BoxShape{Vec3(0, 0, z + 0.01), Vec3(50, 50, 0.01), Quat::Identity()}});
}

TEST(Sensing, SpecDefaults) {
  const TofSensorSpec t;
  EXPECT_EQ(t.zones_x, 8);
  EXPECT_EQ(t.zones_y, 8);
  EXPECT_DOUBLE_EQ(t.diagonal_fov, 63.0 * kPi / 180.0);
  EXPECT_DOUBLE_EQ(t.max_range, 4.0);
  EXPECT_DOUBLE_EQ(t.rate_hz, 15.0);
  const CameraSpec c;
  EXPECT_DOUBLE_EQ(c.fov_h, 87.0 * kPi / 180.0);
  EXPECT_DOUBLE_EQ(c.fov_v, 58.0 * kPi / 180.0);
  EXPECT_EQ(d435_full_resolution().width, 1280);
  EXPECT_EQ(d435_full_resolution().height, 720);
  TofSensorSpec bad;
  bad.diagonal_fov = kPi;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Sensing, SingleZoneLooksDownAxis) {
  TofSensorSpec s;
  s.zones_x = s.zones_y = 1;
  const auto rays = zone_ray_directions(s);
  ASSERT_EQ(rays.size(), 1u);
  EXPECT_EQ(rays[0], Vec3::UnitZ());
}

TEST(Sensing, ZoneRayGeometry) {
  const TofSensorSpec s;
  const auto rays = zone_ray_directions(s);
  ASSERT_EQ(rays.size(), 64u);
  std::vector<double> angles;
  for (const auto& r : rays) {
    EXPECT_NEAR(r.norm(), 1.0, 1e-15);
    angles.push_back(off_axis(r));
    EXPECT_LT(angles.back(), deg(31.5));
  }
  std::vector<std::size_t> order(64);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return angles[a] < angles[b]; });
  std::vector<std::size_t> central{27, 28, 35, 36};  // rows/cols 3,4
  std::vector<std::size_t> smallest(order.begin(), order.begin() + 4);
  std::sort(smallest.begin(), smallest.end());
  EXPECT_EQ(smallest, central);
  EXPECT_GT(angles[27], 0.0);

  // Pinhole oracle: horizontal tangents are (2c + 1 - n)/n * tan(side/2),
  // with tan(diag/2) = sqrt(2) tan(side/2).
  const double half_side = std::tan(s.diagonal_fov / 2.0) / std::sqrt(2.0);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      const Vec3& d = rays[static_cast<std::size_t>(r * 8 + c)];
      EXPECT_NEAR(d.x() / d.z(), (2.0 * c + 1.0 - 8.0) / 8.0 * half_side, 1e-14);
      EXPECT_NEAR(d.y() / d.z(), (2.0 * r + 1.0 - 8.0) / 8.0 * half_side, 1e-14);
    }
  // Diagonal of the frustum reaches the stated diagonal field of view.
  EXPECT_NEAR(2.0 * std::atan(std::sqrt(2.0) * half_side), s.diagonal_fov, 1e-14);
}

TEST(Sensing, RenderTofEmptyWorld) {
  const auto f = render_tof(World{}, Pose{}, TofSensorSpec{});
  ASSERT_EQ(f.size(), 64u);
  for (double d : f.depth) EXPECT_EQ(d, 4.0);
}

TEST(Sensing, RenderTofWall) {
  const TofSensorSpec s;
  const auto f = render_tof(wall_at(1.0), Pose{}, s);
  const auto rays = zone_ray_directions(s);
  double corner = 0.0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    // Ray-plane oracle: range = 1 / cos(theta).
    EXPECT_NEAR(f.depth[i], 1.0 / std::cos(off_axis(rays[i])), 1e-9);
    corner = std::max(corner, f.depth[i]);
  }
  for (std::size_t i : {0u, 7u, 56u, 63u}) EXPECT_EQ(f.depth[i], corner);
  for (std::size_t i = 0; i < 64; ++i)
    if (i != 0 && i != 7 && i != 56 && i != 63) {
      EXPECT_LT(f.depth[i], corner);
    }

  const auto far = render_tof(wall_at(4.5), Pose{}, s);
  for (double d : far.depth) EXPECT_EQ(d, s.max_range);
}

TEST(Sensing, RenderTofBitIdenticalToRaycast) {
  Rng rng(12);
  std::vector<Obstacle> obs;
  for (int i = 0; i < 20; ++i)
    obs.push_back(SphereShape{Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.3, 2)), 0.2});
  const World w(std::move(obs));
  const TofSensorSpec s;
  const auto rays = zone_ray_directions(s);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose mount{rng.rotation(), Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 0)};
    const auto f = render_tof(w, mount, s);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      const auto t = raycast(w, mount.translation, mount.rotate(rays[i]), s.max_range);
      EXPECT_EQ(f.depth[i], t ? *t : s.max_range);
    }
  }
}

TEST(Sensing, SupersampleTakesMinimum) {
  TofSensorSpec s;
  s.supersample = true;
  const auto plain = render_tof(wall_at(1.0), Pose{}, TofSensorSpec{});
  const auto sup = render_tof(wall_at(1.0), Pose{}, s);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_LE(sup.depth[i], plain.depth[i] + 1e-12);
  EXPECT_LT(sup.depth[0], plain.depth[0]);
}

TEST(Sensing, RenderCamera) {
  CameraSpec c;
  c.width = 161;
  c.height = 91;
  const auto empty = render_camera(World{}, Pose{}, c);
  for (double d : empty.depth) EXPECT_EQ(d, c.max_range);

  const auto wall = render_camera(wall_at(2.0), Pose{}, c);
  EXPECT_NEAR(wall.depth[45 * 161 + 80], 2.0, 1e-12);

  Rng rng(5);
  std::vector<Obstacle> obs;
  for (int i = 0; i < 10; ++i)
    obs.push_back(BoxShape{Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1, 3)),
                           Vec3::Constant(0.2), rng.rotation()});
  const World w(std::move(obs));
  const Pose pose{rng.rotation(), Vec3(0, 0, 0)};
  const auto f = render_camera(w, pose, c);
  const auto rays = pixel_ray_directions(c);
  for (int k = 0; k < 500; ++k) {
    const std::size_t i = rng.index(rays.size());
    const auto t = raycast(w, pose.translation, pose.rotate(rays[i]), c.max_range);
    EXPECT_EQ(f.depth[i], t ? *t : c.max_range);
  }
}

TEST(Sensing, NoiseIdentityAndDropout) {
  const auto f = render_tof(wall_at(1.0), Pose{}, TofSensorSpec{});
  const auto same = apply_noise(f, {0.0, 0.0}, 3);
  EXPECT_EQ(same.depth, f.depth);
  const auto gone = apply_noise(f, {0.05, 1.0}, 3);
  for (double d : gone.depth) EXPECT_EQ(d, 4.0);
  EXPECT_THROW(apply_noise(f, {-0.1, 0.0}, 3), Error);
  EXPECT_THROW(apply_noise(f, {0.0, 1.5}, 3), Error);
  EXPECT_EQ(apply_noise(f, {0.02, 0.1}, 9).depth, apply_noise(f, {0.02, 0.1}, 9).depth);
  EXPECT_NE(apply_noise(f, {0.02, 0.1}, 9).depth, apply_noise(f, {0.02, 0.1}, 10).depth);
}

TEST(Sensing, NoiseStatistics) {
  CameraSpec c;
  c.width = 1000;
  c.height = 100;
  DepthFrame f = blank_frame(c);
  std::fill(f.depth.begin(), f.depth.end(), 1.0);
  const auto n = apply_noise(f, {0.02, 0.0}, 77);
  double mean = 0.0;
  for (double d : n.depth) mean += d;
  mean /= double(n.size());
  double var = 0.0;
  for (double d : n.depth) var += (d - mean) * (d - mean);
  const double sd = std::sqrt(var / double(n.size() - 1));
  EXPECT_NEAR(mean, 1.0, 0.001);
  EXPECT_NEAR(sd, 0.02, 0.002);
}

TEST(Sensing, RigFrameCounts) {
  const RobotModel m = default_robot_model();
  const auto ego = default_egocentric_rig();
  const auto exo = default_exocentric_rig(m);
  EXPECT_NO_THROW(ego.validate());
  EXPECT_NO_THROW(exo.validate());
  EXPECT_EQ(render_rig(World{}, m, JointVector{}, ego, {}, 1).frames.size(), 40u);
  EXPECT_EQ(render_rig(World{}, m, JointVector{}, exo, {}, 1).frames.size(), 4u);
  int left = 0;
  for (const auto& mt : ego.mounts) left += (*mt.link < kJointsPerArm);
  EXPECT_EQ(left, 20);
}

TEST(Sensing, EmptyWorldYieldsNoPoints) {
  const RobotModel m = default_robot_model();
  const auto obs = render_rig(World{}, m, JointVector{}, default_egocentric_rig(), {}, 1);
  for (const auto& cf : obs.frames)
    for (std::size_t i = 0; i < cf.frame.size(); ++i)
      EXPECT_TRUE(cf.frame.is_sentinel(i) || cf.frame.self_hit[i]);
  EXPECT_TRUE(deproject(obs).empty());
  // Mounts start outside the body proxy.
  const auto fk = forward_kinematics(m, JointVector{});
  const auto body = collision_spheres_at(m, fk);
  for (const auto& mt : default_egocentric_rig().mounts)
    EXPECT_GT(robot_sdf(body, mount_world_pose(fk, mt).translation), 0.0);
}

TEST(Sensing, DeprojectCentreZone) {
  RigObservation obs;
  CapturedFrame cf;
  cf.frame = blank_frame(TofSensorSpec{});
  cf.frame.depth[27] = 1.0;
  obs.frames.push_back(cf);
  const auto cloud = deproject(obs);
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_NEAR(cloud.points[0].z(), 1.0, 0.01);
  EXPECT_LT(cloud.points[0].head<2>().norm(), 0.1);
  EXPECT_EQ(cloud.provenance, Provenance::egocentric);

  RigObservation none;
  none.frames.push_back({0, Pose{}, blank_frame(TofSensorSpec{})});
  EXPECT_TRUE(deproject(none).empty());
}

World cluttered(Rng& rng, const RobotModel& m) {
  // Obstacles within reach but clear of the arms at q = 0.
  const auto body = collision_spheres_at(m, JointVector{});
  std::vector<Obstacle> obs;
  while (obs.size() < 20) {
    const Vec3 c = m.shoulder_center() + Vec3(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.5));
    Obstacle o = BoxShape{c, Vec3(rng.uniform(0.03, 0.1), rng.uniform(0.03, 0.1), rng.uniform(0.03, 0.1)), rng.rotation()};
    if (rng.index(2)) o = SphereShape{c, rng.uniform(0.03, 0.1)};
    bool clear = true;
    for (const auto& b : body) clear &= obstacle_sdf(o, b.center) > b.radius + 0.02;
    if (clear) obs.push_back(o);
  }
  return World(std::move(obs));
}

TEST(Sensing, DeprojectedPointsLieOnSurfaces) {
  const RobotModel m = default_robot_model();
  Rng rng(31);
  const World w = cluttered(rng, m);
  const auto rig = default_egocentric_rig();
  const auto clean = render_rig(w, m, JointVector{}, rig, {}, 4);
  const auto cloud = deproject(clean);
  ASSERT_GT(cloud.size(), 50u);
  for (const auto& p : cloud.points) EXPECT_LT(std::abs(sdf_point(w, p)), 1e-6);

  const double sigma = 0.01;
  const auto noisy = deproject(render_rig(w, m, JointVector{}, rig, {sigma, 0.0}, 4));
  for (const auto& p : noisy.points) EXPECT_LT(std::abs(sdf_point(w, p)), 3.0 * sigma * 4.0);

  // Re-rendering toward each point reproduces its range.
  for (const auto& cf : clean.frames) {
    const auto rays = ray_directions(cf.frame.spec);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      if (cf.frame.is_sentinel(i) || cf.frame.self_hit[i]) continue;
      const Vec3 p = cf.pose.apply(cf.frame.depth[i] * rays[i]);
      const Vec3 d = (p - cf.pose.translation).normalized();
      const auto t = raycast(w, cf.pose.translation, d, 4.0);
      ASSERT_TRUE(t);
      EXPECT_NEAR(*t, (p - cf.pose.translation).norm(), 1e-6);
    }
  }
}

TEST(Sensing, EgocentricRigInvariantUnderRigidMotion) {
  const RobotModel m = default_robot_model();
  Rng rng(32);
  const World w = cluttered(rng, m);
  const auto rig = default_egocentric_rig();
  const JointVector q{};
  const auto a = render_rig(w, m, q, rig, {0.01, 0.05}, 5);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose t{rng.rotation(), Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3))};
    RobotModel moved = m;
    moved.torso_frame = t * m.torso_frame;
    const auto b = render_rig(w.transformed(t), moved, q, rig, {0.01, 0.05}, 5);
    ASSERT_EQ(a.frames.size(), b.frames.size());
    for (std::size_t f = 0; f < a.frames.size(); ++f)
      for (std::size_t i = 0; i < a.frames[f].frame.size(); ++i) {
        EXPECT_NEAR(a.frames[f].frame.depth[i], b.frames[f].frame.depth[i], 1e-9);
        EXPECT_EQ(a.frames[f].frame.self_hit[i], b.frames[f].frame.self_hit[i]);
      }
  }
}

TEST(Sensing, SelfHitsAreExcluded) {
  const RobotModel m = default_robot_model();
  // Inward-facing upper-arm sensors see the torso.
  const JointVector q{};
  const auto obs = render_rig(World{}, m, q, default_egocentric_rig(), {}, 1);
  std::size_t self = 0;
  for (const auto& cf : obs.frames)
    for (auto s : cf.frame.self_hit) self += s;
  EXPECT_GT(self, 0u);
  EXPECT_TRUE(deproject(obs).empty());
}

TEST(Sensing, FrameBatchRoundTrip) {
  const RobotModel m = default_robot_model();
  Rng rng(2);
  const World w = cluttered(rng, m);
  const auto obs = render_rig(w, m, JointVector{}, default_egocentric_rig(), {0.01, 0.0}, 8, 42);
  std::stringstream ss;
  write_observation(ss, obs);
  const auto back = read_observation(ss);
  ASSERT_EQ(back.frames.size(), obs.frames.size());
  for (std::size_t f = 0; f < obs.frames.size(); ++f) {
    EXPECT_EQ(back.frames[f].mount_id, obs.frames[f].mount_id);
    EXPECT_EQ(back.frames[f].frame.timestamp, 42);
    EXPECT_EQ(back.frames[f].pose.translation, obs.frames[f].pose.translation);
    EXPECT_EQ(back.frames[f].frame.self_hit, obs.frames[f].frame.self_hit);
    for (std::size_t i = 0; i < obs.frames[f].frame.size(); ++i)
      EXPECT_EQ(back.frames[f].frame.depth[i], double(float(obs.frames[f].frame.depth[i])));
  }
}

}  // namespace
}  // namespace egoplan
