// Simulated depth sensing: the 40-sensor multizone ToF constellation on the
// arms and the 4-camera exocentric rig. Frames are rendered by ray casting,
// perturbed by a multiplicative noise model and deprojected to world points.
#pragma once

#include "egoplan/core.hpp"
#include "egoplan/geometry.hpp"
#include "egoplan/kinematics.hpp"

#include <algorithm>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace egoplan {

inline constexpr double deg(double d) { return d * kPi / 180.0; }

/// Multizone ToF ranging sensor (VL53L5CX defaults: 8x8 zones, 63 deg
/// diagonal FoV, 4 m range, 15 Hz).
struct TofSensorSpec {
  int zones_x = 8;
  int zones_y = 8;
  double diagonal_fov = deg(63.0);
  double max_range = 4.0;
  double rate_hz = 15.0;
  bool supersample = false;  // 2x2 sub-rays per zone, min depth

  void validate() const {
    require(zones_x >= 1 && zones_y >= 1, "tof spec: zone counts must be >= 1");
    require(diagonal_fov > 0.0 && diagonal_fov < kPi, "tof spec: diagonal fov must be in (0, pi)");
    require(max_range > 0.0, "tof spec: max_range must be positive");
  }

  /// Full side angle of the square frustum: tan(d/2) = sqrt(2) tan(s/2).
  double side_fov() const { return 2.0 * std::atan(std::tan(diagonal_fov / 2.0) / std::sqrt(2.0)); }
};

/// Pinhole depth camera. Defaults: D435 field of view at reduced resolution.
struct CameraSpec {
  int width = 160;
  int height = 90;
  double fov_h = deg(87.0);
  double fov_v = deg(58.0);
  double max_range = 10.0;

  void validate() const {
    require(width >= 1 && height >= 1, "camera spec: resolution must be >= 1");
    require(fov_h > 0.0 && fov_h < kPi && fov_v > 0.0 && fov_v < kPi,
            "camera spec: fov must be in (0, pi)");
    require(max_range > 0.0, "camera spec: max_range must be positive");
  }
};

inline CameraSpec d435_full_resolution() {
  CameraSpec c;
  c.width = 1280;
  c.height = 720;
  return c;
}

using SensorSpec = std::variant<TofSensorSpec, CameraSpec>;

inline double max_range_of(const SensorSpec& s) {
  return std::visit([](const auto& v) { return v.max_range; }, s);
}

namespace detail {
// Rays through the centres of a rows x cols grid spanning +-tan_x, +-tan_y.
inline std::vector<Vec3> grid_rays(int cols, int rows, double tan_x, double tan_y,
                                   double sub_x = 0.0, double sub_y = 0.0) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(rows * cols));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double u = -1.0 + (2.0 * c + 1.0 + sub_x) / cols;
      const double v = -1.0 + (2.0 * r + 1.0 + sub_y) / rows;
      out.push_back(Vec3(u * tan_x, v * tan_y, 1.0).normalized());
    }
  return out;
}
}  // namespace detail

/// Unit ray per zone centre in the sensor frame (+z optical axis, +x right,
/// +y down), row-major.
inline std::vector<Vec3> zone_ray_directions(const TofSensorSpec& spec) {
  spec.validate();
  const double t = std::tan(spec.side_fov() / 2.0);
  return detail::grid_rays(spec.zones_x, spec.zones_y, t, t);
}

inline std::vector<Vec3> pixel_ray_directions(const CameraSpec& spec) {
  spec.validate();
  return detail::grid_rays(spec.width, spec.height, std::tan(spec.fov_h / 2.0),
                           std::tan(spec.fov_v / 2.0));
}

inline std::vector<Vec3> ray_directions(const SensorSpec& spec) {
  return std::visit(
      [](const auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, TofSensorSpec>)
          return zone_ray_directions(s);
        else
          return pixel_ray_directions(s);
      },
      spec);
}

// ---------------------------------------------------------------------------

/// One sensor's depth image. Depth is range along the zone ray; misses carry
/// the max_range sentinel. self_hit marks returns from the robot's own body.
struct DepthFrame {
  SensorSpec spec;
  int rows = 0;
  int cols = 0;
  std::vector<double> depth;
  std::vector<std::uint8_t> self_hit;
  std::int64_t timestamp = 0;

  double max_range() const { return max_range_of(spec); }
  bool is_sentinel(std::size_t i) const { return depth[i] >= max_range(); }
  std::size_t size() const { return depth.size(); }
};

inline DepthFrame blank_frame(const SensorSpec& spec) {
  DepthFrame f;
  f.spec = spec;
  std::visit(
      [&f](const auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, TofSensorSpec>) {
          f.rows = s.zones_y;
          f.cols = s.zones_x;
        } else {
          f.rows = s.height;
          f.cols = s.width;
        }
      },
      spec);
  f.depth.assign(static_cast<std::size_t>(f.rows * f.cols), max_range_of(spec));
  f.self_hit.assign(f.depth.size(), 0);
  return f;
}

/// Renders a frame against the world and, optionally, the robot's own body
/// spheres. Returns that hit the body first are flagged as self hits.
inline DepthFrame render_frame(const World& world, std::span<const BodySphere> body,
                               const Pose& mount_world, const SensorSpec& spec) {
  DepthFrame f = blank_frame(spec);
  const double range = f.max_range();
  const auto rays = ray_directions(spec);

  std::vector<std::vector<Vec3>> sub_rays;
  if (const auto* tof = std::get_if<TofSensorSpec>(&spec); tof && tof->supersample) {
    const double t = std::tan(tof->side_fov() / 2.0);
    for (auto [sx, sy] : {std::pair{-0.5, -0.5}, {0.5, -0.5}, {-0.5, 0.5}, {0.5, 0.5}})
      sub_rays.push_back(detail::grid_rays(tof->zones_x, tof->zones_y, t, t, sx, sy));
  }

  auto cast = [&](const Vec3& local, double& depth, std::uint8_t& self) {
    const Vec3 dir = mount_world.rotate(local);
    const auto hit = raycast(world, mount_world.translation, dir, range);
    double d = hit ? *hit : range;
    bool s = false;
    if (!body.empty()) {
      if (auto b = raycast_spheres(body, mount_world.translation, dir, range); b && *b < d) {
        d = *b;
        s = true;
      }
    }
    if (d < depth) {
      depth = d;
      self = s ? 1 : 0;
    }
  };

  for (std::size_t i = 0; i < rays.size(); ++i) {
    if (sub_rays.empty()) {
      cast(rays[i], f.depth[i], f.self_hit[i]);
    } else {
      for (const auto& sr : sub_rays) cast(sr[i], f.depth[i], f.self_hit[i]);
    }
  }
  return f;
}

inline DepthFrame render_tof(const World& world, const Pose& mount_world, const TofSensorSpec& spec) {
  spec.validate();
  return render_frame(world, {}, mount_world, spec);
}

inline DepthFrame render_camera(const World& world, const Pose& pose, const CameraSpec& spec) {
  spec.validate();
  return render_frame(world, {}, pose, spec);
}

struct NoiseParams {
  double sigma_rel = 0.0;
  double dropout = 0.0;

  void validate() const {
    require(sigma_rel >= 0.0, "noise: sigma_rel must be >= 0");
    require(dropout >= 0.0 && dropout <= 1.0, "noise: dropout must be in [0, 1]");
  }
};

/// Multiplicative Gaussian range error and independent per-zone dropout.
/// One uniform and one normal are drawn per zone whatever the outcome.
inline DepthFrame apply_noise(DepthFrame frame, const NoiseParams& noise, std::uint64_t seed) {
  noise.validate();
  if (noise.sigma_rel == 0.0 && noise.dropout == 0.0) return frame;
  Rng rng(seed);
  const double range = frame.max_range();
  for (std::size_t i = 0; i < frame.depth.size(); ++i) {
    const double drop = rng.uniform();
    const double n = rng.normal();
    if (frame.depth[i] < range) {
      const double d = frame.depth[i] * (1.0 + noise.sigma_rel * n);
      frame.depth[i] = std::clamp(d, 1e-6, range);
    }
    if (drop < noise.dropout) {
      frame.depth[i] = range;
      frame.self_hit[i] = 0;
    }
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Rigs.

enum class RigKind { egocentric, exocentric };

inline std::string_view rig_name(RigKind k) {
  return k == RigKind::egocentric ? "egocentric" : "exocentric";
}

/// Sensor attached to a robot link (global index 0..13) or fixed in the world.
struct SensorMount {
  int id = 0;
  std::optional<int> link;
  Pose local;  // link-relative, or world pose when fixed
  std::string spec_name;  // "tof" or "camera"
};

struct RigLayout {
  RigKind kind = RigKind::egocentric;
  std::vector<SensorMount> mounts;
  TofSensorSpec tof;
  CameraSpec camera;

  SensorSpec spec_for(const SensorMount& m) const {
    if (m.spec_name == "tof") return tof;
    if (m.spec_name == "camera") return camera;
    fail("rig layout: unknown sensor spec '" + m.spec_name + "'");
  }

  void validate() const {
    tof.validate();
    camera.validate();
    for (std::size_t i = 0; i < mounts.size(); ++i) {
      const auto& m = mounts[i];
      require(m.id == static_cast<int>(i), "rig layout: mount ids must be 0..n-1 in order");
      require(!m.link || (*m.link >= 0 && *m.link < kNumJoints), "rig layout: link index invalid");
      require(m.local.is_valid(), "rig layout: mount pose invalid");
      (void)spec_for(m);
    }
  }
};

inline Pose mount_world_pose(const FkResult& fk, const SensorMount& m) {
  if (!m.link) return m.local;
  return fk.links[static_cast<std::size_t>(*m.link)] * m.local;
}

/// Per arm: five stations (two upper arm, two forearm, one hand), each a ring
/// of four sensors facing radially outward at 90 degree spacing; 40 total.
inline RigLayout default_egocentric_rig() {
  RigLayout rig;
  rig.kind = RigKind::egocentric;
  struct Station {
    int link;
    double z;
    double radial;
  };
  const std::array<Station, 5> stations{{{kShoulderYaw, -0.08, 0.075},
                                         {kShoulderYaw, -0.17, 0.075},
                                         {kElbowPitch, -0.07, 0.065},
                                         {kElbowPitch, -0.16, 0.065},
                                         {kWristRoll, -0.05, 0.055}}};
  const std::array<Vec3, 4> ring{Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitX(), -Vec3::UnitY()};
  for (Side s : kSides)
    for (const auto& st : stations)
      for (const auto& dir : ring) {
        SensorMount m;
        m.id = static_cast<int>(rig.mounts.size());
        m.link = side_index(s) * kJointsPerArm + st.link;
        m.local = look_along(Vec3(0.0, 0.0, st.z) + st.radial * dir, dir);
        m.spec_name = "tof";
        rig.mounts.push_back(m);
      }
  return rig;
}

/// Head camera plus three cameras at head height 1 m in front of, left of
/// and right of the torso origin; all tilted 45 degrees down.
inline RigLayout default_exocentric_rig(const RobotModel& model, double standoff = 1.0) {
  RigLayout rig;
  rig.kind = RigKind::exocentric;
  const Pose head = model.torso_frame * model.head_frame;
  const double h = model.head_frame.translation.z();
  const double c45 = std::cos(kPi / 4.0);
  auto tilted = [&](const Vec3& horizontal) {
    return Vec3(horizontal.x() * c45, horizontal.y() * c45, -c45);
  };
  std::vector<Pose> poses;
  poses.push_back(look_along(head.translation, tilted(model.torso_frame.rotate(Vec3::UnitX()))));
  for (const Vec3& where : {Vec3(standoff, 0, h), Vec3(0, standoff, h), Vec3(0, -standoff, h)}) {
    const Vec3 p = model.torso_frame.apply(where);
    Vec3 toward = model.torso_frame.translation - p;
    toward.z() = 0.0;
    poses.push_back(look_along(p, tilted(toward.normalized())));
  }
  for (const auto& p : poses) {
    SensorMount m;
    m.id = static_cast<int>(rig.mounts.size());
    m.local = p;
    m.spec_name = "camera";
    rig.mounts.push_back(m);
  }
  return rig;
}

struct CapturedFrame {
  int mount_id = 0;
  Pose pose;  // world pose at capture time
  DepthFrame frame;
};

struct RigObservation {
  RigKind kind = RigKind::egocentric;
  std::vector<CapturedFrame> frames;
};

/// Renders every mount of the rig at configuration q. The robot's collision
/// spheres are part of the scene; noise is seeded per mount.
inline RigObservation render_rig(const World& world, const RobotModel& model, const JointVector& q,
                                 const RigLayout& rig, const NoiseParams& noise, std::uint64_t seed,
                                 std::int64_t timestamp = 0) {
  const FkResult fk = forward_kinematics(model, q);
  const auto body = collision_spheres_at(model, fk);
  RigObservation obs;
  obs.kind = rig.kind;
  obs.frames.reserve(rig.mounts.size());
  for (const auto& m : rig.mounts) {
    CapturedFrame cf;
    cf.mount_id = m.id;
    cf.pose = mount_world_pose(fk, m);
    cf.frame = render_frame(world, body, cf.pose, rig.spec_for(m));
    cf.frame = apply_noise(std::move(cf.frame), noise,
                           derive_seed(seed, "sensing.noise", static_cast<std::uint64_t>(m.id)));
    cf.frame.timestamp = timestamp;
    obs.frames.push_back(std::move(cf));
  }
  return obs;
}

/// World points M (d r) for every non-sentinel, non-self zone.
inline PointCloud deproject(const RigObservation& obs) {
  PointCloud cloud;
  cloud.provenance = obs.kind == RigKind::egocentric ? Provenance::egocentric : Provenance::exocentric;
  for (const auto& cf : obs.frames) {
    const auto rays = ray_directions(cf.frame.spec);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      if (cf.frame.is_sentinel(i) || cf.frame.self_hit[i]) continue;
      cloud.points.push_back(cf.pose.apply(cf.frame.depth[i] * rays[i]));
    }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Frame batch file. Little endian:
//   char[4] "EDFB" | u32 version (1) | u8 rig kind | u32 frame count
//   per frame: u32 mount id | 7 x f64 pose (qw qx qy qz tx ty tz)
//              u8 spec kind (0 tof, 1 camera) | u32 cols | u32 rows
//              f64 fov_a | f64 fov_b | f64 max_range | i64 timestamp
//              rows*cols x f32 depth | rows*cols x u8 self-hit flags
// For ToF specs fov_a is the diagonal FoV and fov_b the supersample flag.

inline constexpr char kFrameMagic[4] = {'E', 'D', 'F', 'B'};

inline void write_observation(std::ostream& os, const RigObservation& obs) {
  using detail::put_le;
  os.write(kFrameMagic, 4);
  put_le<std::uint32_t>(os, 1);
  put_le<std::uint8_t>(os, obs.kind == RigKind::egocentric ? 0 : 1);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(obs.frames.size()));
  for (const auto& cf : obs.frames) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cf.mount_id));
    const auto& q = cf.pose.rotation;
    for (double v : {q.w(), q.x(), q.y(), q.z()}) put_le<double>(os, v);
    for (int k = 0; k < 3; ++k) put_le<double>(os, cf.pose.translation[k]);
    const auto& f = cf.frame;
    if (const auto* t = std::get_if<TofSensorSpec>(&f.spec)) {
      put_le<std::uint8_t>(os, 0);
      put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t->zones_x));
      put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t->zones_y));
      put_le<double>(os, t->diagonal_fov);
      put_le<double>(os, t->supersample ? 1.0 : 0.0);
      put_le<double>(os, t->max_range);
    } else {
      const auto& c = std::get<CameraSpec>(f.spec);
      put_le<std::uint8_t>(os, 1);
      put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.width));
      put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.height));
      put_le<double>(os, c.fov_h);
      put_le<double>(os, c.fov_v);
      put_le<double>(os, c.max_range);
    }
    put_le<std::int64_t>(os, f.timestamp);
    for (double d : f.depth) put_le<float>(os, static_cast<float>(d));
    for (auto s : f.self_hit) put_le<std::uint8_t>(os, s);
  }
}

inline RigObservation read_observation(std::istream& is) {
  using detail::get_le;
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kFrameMagic, 4) != 0)
    throw Error(ErrorKind::validation, "frame batch: bad magic");
  if (get_le<std::uint32_t>(is) != 1) throw Error(ErrorKind::validation, "frame batch: bad version");
  RigObservation obs;
  obs.kind = get_le<std::uint8_t>(is) == 0 ? RigKind::egocentric : RigKind::exocentric;
  const auto n = get_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    CapturedFrame cf;
    cf.mount_id = static_cast<int>(get_le<std::uint32_t>(is));
    double w = get_le<double>(is), x = get_le<double>(is), y = get_le<double>(is), z = get_le<double>(is);
    cf.pose.rotation = Quat(w, x, y, z);
    if (!cf.pose.is_valid()) throw Error(ErrorKind::validation, "frame batch: bad pose");
    for (int k = 0; k < 3; ++k) cf.pose.translation[k] = get_le<double>(is);
    const auto kind = get_le<std::uint8_t>(is);
    const auto cols = static_cast<int>(get_le<std::uint32_t>(is));
    const auto rows = static_cast<int>(get_le<std::uint32_t>(is));
    if (cols < 1 || rows < 1 || std::int64_t(cols) * rows > (1 << 24))
      throw Error(ErrorKind::validation, "frame batch: bad frame size");
    const double a = get_le<double>(is), b = get_le<double>(is), range = get_le<double>(is);
    SensorSpec spec;
    if (kind == 0) {
      TofSensorSpec t;
      t.zones_x = cols;
      t.zones_y = rows;
      t.diagonal_fov = a;
      t.supersample = b != 0.0;
      t.max_range = range;
      spec = t;
    } else {
      CameraSpec c;
      c.width = cols;
      c.height = rows;
      c.fov_h = a;
      c.fov_v = b;
      c.max_range = range;
      spec = c;
    }
    cf.frame = blank_frame(spec);
    cf.frame.timestamp = get_le<std::int64_t>(is);
    for (auto& d : cf.frame.depth) d = get_le<float>(is);
    for (auto& s : cf.frame.self_hit) s = get_le<std::uint8_t>(is);
    obs.frames.push_back(std::move(cf));
  }
  return obs;
}

}  // namespace egoplan
