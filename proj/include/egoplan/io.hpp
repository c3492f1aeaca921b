// JSON forms of the shared value types plus file helpers that map IO and
// parse failures onto error categories.
#pragma once

#include "egoplan/core.hpp"
#include "egoplan/geometry.hpp"
#include "egoplan/kinematics.hpp"
#include "egoplan/sensing.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace egoplan {

using Json = nlohmann::json;

namespace io {

inline Json vec(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::validation, "expected a 3-vector");
  Vec3 v(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  if (!v.allFinite()) throw Error(ErrorKind::validation, "non-finite vector");
  return v;
}

inline Json quat(const Quat& q) { return Json::array({q.w(), q.x(), q.y(), q.z()}); }

inline Quat quat(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorKind::validation, "expected a quaternion [w,x,y,z]");
  Quat q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
  if (std::abs(q.norm() - 1.0) > 1e-9) throw Error(ErrorKind::validation, "quaternion is not unit length");
  return q;
}

inline Json pose(const Pose& p) { return {{"rotation", quat(p.rotation)}, {"translation", vec(p.translation)}}; }

inline Pose pose(const Json& j) { return {quat(j.at("rotation")), vec(j.at("translation"))}; }

inline Json joints(const JointVector& q) { return Json(q.values()); }

inline JointVector joints(const Json& j) {
  if (!j.is_array() || j.size() != kNumJoints)
    throw Error(ErrorKind::validation, "expected " + std::to_string(kNumJoints) + " joint values");
  JointVector q;
  for (int i = 0; i < kNumJoints; ++i) q[i] = j[static_cast<std::size_t>(i)].get<double>();
  if (!q.all_finite()) throw Error(ErrorKind::validation, "non-finite joint value");
  return q;
}

inline Json trajectory(const Trajectory& t) {
  Json w = Json::array();
  for (const auto& q : t) w.push_back(joints(q));
  return {{"dt", t.dt}, {"waypoints", w}};
}

inline Trajectory trajectory(const Json& j) {
  Trajectory t;
  t.dt = j.value("dt", 1.0 / kControlRateHz);
  for (const auto& w : j.at("waypoints")) t.waypoints.push_back(joints(w));
  return t;
}

inline Json obstacle(const Obstacle& o) {
  return std::visit(
      [](const auto& s) -> Json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SphereShape>)
          return {{"type", "sphere"}, {"center", vec(s.center)}, {"radius", s.radius}};
        else if constexpr (std::is_same_v<T, BoxShape>)
          return {{"type", "box"}, {"center", vec(s.center)}, {"half_extents", vec(s.half_extents)},
                  {"orientation", quat(s.orientation)}};
        else
          return {{"type", "capsule"}, {"a", vec(s.a)}, {"b", vec(s.b)}, {"radius", s.radius}};
      },
      o);
}

inline Obstacle obstacle(const Json& j) {
  const auto type = j.at("type").get<std::string>();
  Obstacle o;
  if (type == "sphere") {
    o = SphereShape{vec(j.at("center")), j.at("radius").get<double>()};
  } else if (type == "box") {
    o = BoxShape{vec(j.at("center")), vec(j.at("half_extents")),
                 j.contains("orientation") ? quat(j["orientation"]) : Quat::Identity()};
  } else if (type == "capsule") {
    o = CapsuleShape{vec(j.at("a")), vec(j.at("b")), j.at("radius").get<double>()};
  } else {
    throw Error(ErrorKind::validation, "unknown obstacle type '" + type + "'");
  }
  try {
    validate_obstacle(o);
  } catch (const Error& e) {
    throw Error(ErrorKind::validation, e.what());
  }
  return o;
}

inline Json world(const World& w) {
  Json a = Json::array();
  for (const auto& o : w.obstacles()) a.push_back(obstacle(o));
  return {{"obstacles", a}};
}

inline World world(const Json& j) {
  std::vector<Obstacle> obs;
  for (const auto& o : j.at("obstacles")) obs.push_back(obstacle(o));
  return World(std::move(obs));
}

inline Json robot_model(const RobotModel& m) {
  Json arms;
  for (Side s : kSides) {
    const ArmModel& a = m.arm(s);
    Json joints_j = Json::array(), spheres_j = Json::array();
    for (const auto& jt : a.joints)
      joints_j.push_back({{"name", jt.name}, {"axis", vec(jt.axis)}, {"offset", pose(jt.offset)},
                          {"lower", jt.lower}, {"upper", jt.upper}});
    for (const auto& sp : a.spheres)
      spheres_j.push_back({{"link", sp.link}, {"center", vec(sp.center)}, {"radius", sp.radius}});
    arms[std::string(side_name(s))] = {{"base", pose(a.base)}, {"tool", pose(a.tool)},
                                       {"joints", joints_j}, {"spheres", spheres_j}};
  }
  Json torso = Json::array();
  for (const auto& sp : m.torso_spheres) torso.push_back({{"center", vec(sp.center)}, {"radius", sp.radius}});
  return {{"torso_frame", pose(m.torso_frame)}, {"head_frame", pose(m.head_frame)},
          {"torso_spheres", torso}, {"nominal", m.nominal}, {"arms", arms}};
}

inline RobotModel robot_model(const Json& j) {
  RobotModel m;
  m.torso_frame = pose(j.at("torso_frame"));
  m.head_frame = pose(j.at("head_frame"));
  m.nominal = j.value("nominal", false);
  for (const auto& sp : j.at("torso_spheres"))
    m.torso_spheres.push_back({vec(sp.at("center")), sp.at("radius").get<double>()});
  for (Side s : kSides) {
    const Json& a = j.at("arms").at(std::string(side_name(s)));
    ArmModel& arm = m.arm(s);
    arm.base = pose(a.at("base"));
    arm.tool = pose(a.at("tool"));
    const Json& js = a.at("joints");
    if (js.size() != kJointsPerArm) throw Error(ErrorKind::validation, "robot model: arm needs 7 joints");
    for (int i = 0; i < kJointsPerArm; ++i) {
      const Json& jt = js[static_cast<std::size_t>(i)];
      arm.joints[i] = {jt.at("name").get<std::string>(), vec(jt.at("axis")), pose(jt.at("offset")),
                       jt.at("lower").get<double>(), jt.at("upper").get<double>()};
    }
    for (const auto& sp : a.at("spheres"))
      arm.spheres.push_back({sp.at("link").get<int>(), vec(sp.at("center")), sp.at("radius").get<double>()});
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::validation, e.what());
  }
  return m;
}

inline Json tof_spec(const TofSensorSpec& s) {
  return {{"zones_x", s.zones_x}, {"zones_y", s.zones_y}, {"diagonal_fov_deg", s.diagonal_fov * 180.0 / kPi},
          {"max_range", s.max_range}, {"rate_hz", s.rate_hz}, {"supersample", s.supersample}};
}

inline TofSensorSpec tof_spec(const Json& j) {
  TofSensorSpec s;
  s.zones_x = j.value("zones_x", s.zones_x);
  s.zones_y = j.value("zones_y", s.zones_y);
  s.diagonal_fov = deg(j.value("diagonal_fov_deg", 63.0));
  s.max_range = j.value("max_range", s.max_range);
  s.rate_hz = j.value("rate_hz", s.rate_hz);
  s.supersample = j.value("supersample", s.supersample);
  return s;
}

inline Json camera_spec(const CameraSpec& c) {
  return {{"width", c.width}, {"height", c.height}, {"fov_h_deg", c.fov_h * 180.0 / kPi},
          {"fov_v_deg", c.fov_v * 180.0 / kPi}, {"max_range", c.max_range}};
}

inline CameraSpec camera_spec(const Json& j) {
  CameraSpec c;
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.fov_h = deg(j.value("fov_h_deg", 87.0));
  c.fov_v = deg(j.value("fov_v_deg", 58.0));
  c.max_range = j.value("max_range", c.max_range);
  return c;
}

inline Json rig(const RigLayout& r) {
  Json mounts = Json::array();
  for (const auto& m : r.mounts) {
    Json e{{"id", m.id}, {"pose", pose(m.local)}, {"spec", m.spec_name}};
    e["link"] = m.link ? Json(*m.link) : Json(nullptr);
    mounts.push_back(e);
  }
  return {{"kind", rig_name(r.kind)}, {"tof", tof_spec(r.tof)}, {"camera", camera_spec(r.camera)},
          {"mounts", mounts}};
}

inline RigLayout rig(const Json& j) {
  RigLayout r;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "egocentric") r.kind = RigKind::egocentric;
  else if (kind == "exocentric") r.kind = RigKind::exocentric;
  else throw Error(ErrorKind::validation, "rig: unknown kind '" + kind + "'");
  if (j.contains("tof")) r.tof = tof_spec(j["tof"]);
  if (j.contains("camera")) r.camera = camera_spec(j["camera"]);
  for (const auto& e : j.at("mounts")) {
    SensorMount m;
    m.id = e.at("id").get<int>();
    m.local = pose(e.at("pose"));
    m.spec_name = e.at("spec").get<std::string>();
    if (e.contains("link") && !e["link"].is_null()) m.link = e["link"].get<int>();
    r.mounts.push_back(m);
  }
  try {
    r.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::validation, e.what());
  }
  return r;
}

inline Json noise(const NoiseParams& n) { return {{"sigma_rel", n.sigma_rel}, {"dropout", n.dropout}}; }

inline NoiseParams noise(const Json& j) {
  NoiseParams n{j.value("sigma_rel", 0.0), j.value("dropout", 0.0)};
  try {
    n.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::validation, e.what());
  }
  return n;
}

// ---------------------------------------------------------------------------
// Files.

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::missing_input, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::invalid_argument, "cannot write " + path.string());
  out << text;
}

/// Parses a JSON file; parse and schema errors become validation errors that
/// name the file.
template <typename F>
auto load_json(const std::filesystem::path& path, F&& convert) {
  const std::string text = read_text(path);
  try {
    return convert(Json::parse(text));
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::validation, path.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::missing_input) throw;
    throw Error(ErrorKind::validation, path.string() + ": " + e.what());
  }
}

inline Json load_json(const std::filesystem::path& path) {
  return load_json(path, [](Json j) { return j; });
}

/// Stable text form: sorted keys, two-space indent, trailing newline.
inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

/// 64-bit FNV-1a of the compact canonical JSON text, as 16 hex digits.
inline std::string fingerprint(const Json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

}  // namespace io
}  // namespace egoplan
