#pragma once

// 2.5D synthetic scenes: flat ground at z=0 bounded by implicit walls,
// vertical sign planes, boxy structures, and occluder wall segments. The
// ray-casting observer emits exact depth, masks, and detections; the oracle
// VLM answers parse and grounding requests from scene ground truth. Both
// are fully deterministic given (scene, seed, trajectory).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "atomnav/errors.hpp"
#include "atomnav/geometry.hpp"
#include "atomnav/grounding.hpp"
#include "atomnav/ports.hpp"
#include "atomnav/prompts.hpp"
#include "atomnav/render.hpp"
#include "atomnav/scene.hpp"
#include "atomnav/sign_understanding.hpp"

namespace atomnav {

constexpr int kSceneVersion = 1;
constexpr const char* kSimSignMarker = "atomnav-sim-sign:";

// ---------------------------------------------------------------------------
// Scene specification
// ---------------------------------------------------------------------------

struct SceneBranch {
  std::string name;
  std::vector<Vec2> polyline;  // entrance first, then into the branch
  Vec2 entrance{0.0, 0.0};
};

struct SceneSign {
  Vec3 position{0.0, 0.0, 1.4};  // face center
  Vec2 normal{0.0, -1.0};        // outward, horizontal, unit
  double width = 1.0, height = 0.8;
  NavCueSet cues;
};

struct SceneStructure {
  std::string class_label;
  Vec2 center{0.0, 0.0};
  Vec2 half{0.5, 0.5};
  double yaw = 0.0;
  double height = 1.0;
};

struct SceneWall {
  Vec2 a{0.0, 0.0}, b{0.0, 0.0};
  double height = 2.5;
};

struct SceneCamera {
  int width = 640, height = 480;
  double hfov_deg = 90.0;
  double camera_height = 1.2;

  CameraIntrinsics intrinsics() const {
    CameraIntrinsics k;
    k.width = width;
    k.height = height;
    k.fx = (width / 2.0) / std::tan(deg2rad(hfov_deg) / 2.0);
    k.fy = k.fx;
    k.cx = (width - 1) / 2.0;
    k.cy = (height - 1) / 2.0;
    return k;
  }
};

struct ScenePose {
  double x = 0.0, y = 0.0, yaw = 0.0;
};

struct SceneSpec {
  std::string name;
  std::vector<std::vector<Vec2>> ground;  // simple polygons, navigable区
  std::vector<SceneBranch> branches;
  std::vector<SceneSign> signs;
  std::vector<SceneStructure> structures;
  std::vector<SceneWall> occluders;
  bool implicit_walls = true;
  double wall_height = 2.5;
  SceneCamera camera;
  ScenePose start;
  std::uint64_t rng_seed = 0;
};

inline bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[j];
    const Vec2& b = poly[i];
    if ((b.y() > p.y()) != (a.y() > p.y())) {
      const double x =
          b.x() + (p.y() - b.y()) * (a.x() - b.x()) / (a.y() - b.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

inline bool point_on_ground(const SceneSpec& scene, const Vec2& p) {
  for (const auto& poly : scene.ground)
    if (point_in_polygon(p, poly)) return true;
  return false;
}

// JSON round-trip -----------------------------------------------------------

inline json scene_to_json(const SceneSpec& s) {
  json j;
  j["atomnav_scene"] = kSceneVersion;
  j["name"] = s.name;
  j["camera"] = {{"width", s.camera.width},
                 {"height", s.camera.height},
                 {"hfov_deg", s.camera.hfov_deg},
                 {"camera_height", s.camera.camera_height}};
  j["implicit_walls"] = s.implicit_walls;
  j["wall_height"] = s.wall_height;
  j["start"] = {{"x", s.start.x}, {"y", s.start.y}, {"yaw", s.start.yaw}};
  j["rng_seed"] = s.rng_seed;
  json ground = json::array();
  for (const auto& poly : s.ground) {
    json jp = json::array();
    for (const auto& v : poly) jp.push_back({v.x(), v.y()});
    ground.push_back(jp);
  }
  j["ground"] = ground;
  json branches = json::array();
  for (const auto& b : s.branches) {
    json pl = json::array();
    for (const auto& v : b.polyline) pl.push_back({v.x(), v.y()});
    branches.push_back({{"name", b.name},
                        {"polyline", pl},
                        {"entrance", {b.entrance.x(), b.entrance.y()}}});
  }
  j["branches"] = branches;
  json signs = json::array();
  for (const auto& sign : s.signs) {
    json cues = json::object();
    for (int t = 0; t < kInstructionCount; ++t) {
      const Instruction instr = Instruction(t);
      json list = json::array();
      if (is_locational(instr)) {
        for (const auto& l : sign.cues.locational) list.push_back(l);
      } else {
        for (const auto& c : sign.cues.cues)
          if (c.instruction == instr) list.push_back(c.location);
      }
      if (!list.empty()) cues[to_token(instr)] = list;
    }
    signs.push_back(
        {{"position", {sign.position.x(), sign.position.y(), sign.position.z()}},
         {"normal", {sign.normal.x(), sign.normal.y()}},
         {"size", {sign.width, sign.height}},
         {"cues", cues}});
  }
  j["signs"] = signs;
  json structures = json::array();
  for (const auto& st : s.structures)
    structures.push_back({{"class", st.class_label},
                          {"center", {st.center.x(), st.center.y()}},
                          {"half", {st.half.x(), st.half.y()}},
                          {"yaw", st.yaw},
                          {"height", st.height}});
  j["structures"] = structures;
  json occluders = json::array();
  for (const auto& w : s.occluders)
    occluders.push_back({{"a", {w.a.x(), w.a.y()}},
                         {"b", {w.b.x(), w.b.y()}},
                         {"height", w.height}});
  j["occluders"] = occluders;
  return j;
}

inline SceneSpec scene_from_json(const json& j) {
  if (!j.contains("atomnav_scene") ||
      j["atomnav_scene"].get<int>() != kSceneVersion)
    throw Error("unsupported scene version");
  SceneSpec s;
  s.name = j.value("name", "");
  if (j.contains("camera")) {
    const auto& c = j["camera"];
    s.camera.width = c.value("width", s.camera.width);
    s.camera.height = c.value("height", s.camera.height);
    s.camera.hfov_deg = c.value("hfov_deg", s.camera.hfov_deg);
    s.camera.camera_height = c.value("camera_height", s.camera.camera_height);
  }
  s.implicit_walls = j.value("implicit_walls", true);
  s.wall_height = j.value("wall_height", 2.5);
  if (j.contains("start")) {
    s.start.x = j["start"].value("x", 0.0);
    s.start.y = j["start"].value("y", 0.0);
    s.start.yaw = j["start"].value("yaw", 0.0);
  }
  s.rng_seed = j.value("rng_seed", std::uint64_t(0));
  for (const auto& jp : j.at("ground")) {
    std::vector<Vec2> poly;
    for (const auto& v : jp) poly.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    s.ground.push_back(std::move(poly));
  }
  for (const auto& jb : j.value("branches", json::array())) {
    SceneBranch b;
    b.name = jb.at("name").get<std::string>();
    for (const auto& v : jb.at("polyline"))
      b.polyline.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    b.entrance = Vec2(jb.at("entrance").at(0).get<double>(),
                      jb.at("entrance").at(1).get<double>());
    s.branches.push_back(std::move(b));
  }
  for (const auto& js : j.value("signs", json::array())) {
    SceneSign sign;
    sign.position = vec3_from_json(js.at("position"));
    sign.normal = Vec2(js.at("normal").at(0).get<double>(),
                       js.at("normal").at(1).get<double>())
                      .normalized();
    sign.width = js.at("size").at(0).get<double>();
    sign.height = js.at("size").at(1).get<double>();
    for (const auto& [key, list] : js.value("cues", json::object()).items()) {
      const auto tok = instruction_from_token(key);
      if (!tok) throw Error("scene sign cue with unknown token: " + key);
      for (const auto& phrase : list) {
        if (is_locational(*tok))
          sign.cues.add_locational(normalize_phrase(phrase.get<std::string>()));
        else
          sign.cues.add_cue(normalize_phrase(phrase.get<std::string>()), *tok);
      }
    }
    s.signs.push_back(std::move(sign));
  }
  for (const auto& js : j.value("structures", json::array())) {
    SceneStructure st;
    st.class_label = js.at("class").get<std::string>();
    st.center = Vec2(js.at("center").at(0).get<double>(),
                     js.at("center").at(1).get<double>());
    st.half = Vec2(js.at("half").at(0).get<double>(),
                   js.at("half").at(1).get<double>());
    st.yaw = js.value("yaw", 0.0);
    st.height = js.value("height", 1.0);
    s.structures.push_back(std::move(st));
  }
  for (const auto& jw : j.value("occluders", json::array())) {
    SceneWall w;
    w.a = Vec2(jw.at("a").at(0).get<double>(), jw.at("a").at(1).get<double>());
    w.b = Vec2(jw.at("b").at(0).get<double>(), jw.at("b").at(1).get<double>());
    w.height = jw.value("height", 2.5);
    s.occluders.push_back(w);
  }
  return s;
}

inline SceneSpec load_scene(const std::filesystem::path& path) {
  try {
    return scene_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scene: ") + e.what(), e.byte);
  }
}

// ---------------------------------------------------------------------------
// Ray casting
// ---------------------------------------------------------------------------

namespace simdetail {

enum class HitKind : std::uint8_t { kNone, kGround, kWall, kSign, kStructure };

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  HitKind kind = HitKind::kNone;
  int index = -1;
  bool front = false;  // signs only
};

struct WallSeg {
  Vec2 a, b;
  double height;
};

// Scene flattened for fast per-ray iteration.
struct CastScene {
  const SceneSpec* spec;
  std::vector<WallSeg> walls;

  explicit CastScene(const SceneSpec& s) : spec(&s) {
    if (s.implicit_walls)
      for (const auto& poly : s.ground)
        for (std::size_t i = 0; i < poly.size(); ++i)
          walls.push_back(
              {poly[i], poly[(i + 1) % poly.size()], s.wall_height});
    for (const auto& w : s.occluders) walls.push_back({w.a, w.b, w.height});
  }

  Hit cast(const Vec3& origin, const Vec3& dir) const {
    constexpr double kMinT = 1e-6;
    Hit best;
    // ground plane
    if (dir.z() < -1e-12) {
      const double t = -origin.z() / dir.z();
      if (t > kMinT && t < best.t) {
        const Vec2 p(origin.x() + t * dir.x(), origin.y() + t * dir.y());
        if (point_on_ground(*spec, p)) {
          best.t = t;
          best.kind = HitKind::kGround;
          best.index = -1;
        }
      }
    }
    // walls
    const Vec2 o2(origin.x(), origin.y());
    const Vec2 d2(dir.x(), dir.y());
    for (const auto& w : walls) {
      const Vec2 e = w.b - w.a;
      const double denom = cross2(d2, e);
      if (std::abs(denom) < 1e-14) continue;
      const double t = cross2(w.a - o2, e) / denom;
      if (t <= kMinT || t >= best.t) continue;
      const double s = cross2(w.a - o2, d2) / denom;
      if (s < 0.0 || s > 1.0) continue;
      const double z = origin.z() + t * dir.z();
      if (z < 0.0 || z > w.height) continue;
      best.t = t;
      best.kind = HitKind::kWall;
      best.index = -1;
    }
    // signs
    for (int i = 0; i < int(spec->signs.size()); ++i) {
      const auto& sign = spec->signs[std::size_t(i)];
      const Vec3 n(sign.normal.x(), sign.normal.y(), 0.0);
      const double denom = dir.dot(n);
      if (std::abs(denom) < 1e-14) continue;
      const double t = (sign.position - origin).dot(n) / denom;
      if (t <= kMinT || t >= best.t) continue;
      const Vec3 hit = origin + t * dir;
      const Vec3 tangent(-sign.normal.y(), sign.normal.x(), 0.0);
      const double u = (hit - sign.position).dot(tangent);
      const double w = hit.z() - sign.position.z();
      if (std::abs(u) > sign.width / 2.0 || std::abs(w) > sign.height / 2.0)
        continue;
      best.t = t;
      best.kind = HitKind::kSign;
      best.index = i;
      best.front = denom < 0.0;
    }
    // structure boxes
    for (int i = 0; i < int(spec->structures.size()); ++i) {
      const auto& st = spec->structures[std::size_t(i)];
      const double c = std::cos(st.yaw), s = std::sin(st.yaw);
      // into box frame (rotate xy by -yaw about the center)
      const double ox = origin.x() - st.center.x();
      const double oy = origin.y() - st.center.y();
      const Vec3 bo(c * ox + s * oy, -s * ox + c * oy, origin.z());
      const Vec3 bd(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(),
                    dir.z());
      const double lo[3] = {-st.half.x(), -st.half.y(), 0.0};
      const double hi[3] = {st.half.x(), st.half.y(), st.height};
      double tmin = kMinT, tmax = best.t;
      bool ok = true;
      for (int a = 0; a < 3 && ok; ++a) {
        if (std::abs(bd[a]) < 1e-14) {
          if (bo[a] < lo[a] || bo[a] > hi[a]) ok = false;
          continue;
        }
        double t0 = (lo[a] - bo[a]) / bd[a];
        double t1 = (hi[a] - bo[a]) / bd[a];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) ok = false;
      }
      if (!ok) continue;
      best.t = tmin;
      best.kind = HitKind::kStructure;
      best.index = i;
    }
    return best;
  }
};

}  // namespace simdetail

inline Pose3 camera_pose(const SceneSpec& scene, const ScenePose& agent) {
  const double c = std::cos(agent.yaw), s = std::sin(agent.yaw);
  Eigen::Matrix3d r;
  // columns: camera +X (right), +Y (down), +Z (forward) in world coords
  r.col(0) = Vec3(s, -c, 0.0);
  r.col(1) = Vec3(0.0, 0.0, -1.0);
  r.col(2) = Vec3(c, s, 0.0);
  Pose3 pose;
  pose.t = Vec3(agent.x, agent.y, scene.camera.camera_height);
  pose.q = Eigen::Quaterniond(r);
  return pose;
}

/// Ray-cast an observation at the given agent pose. Pixel-deterministic.
inline Frame observe(const SceneSpec& scene, const ScenePose& agent,
                     double timestamp = 0.0) {
  if (!point_on_ground(scene, Vec2(agent.x, agent.y)))
    throw InvalidAgentPose("agent at (" + std::to_string(agent.x) + "," +
                           std::to_string(agent.y) + ") is off the ground region");
  const simdetail::CastScene cast(scene);
  const CameraIntrinsics K = scene.camera.intrinsics();
  const Pose3 pose = camera_pose(scene, agent);
  const Eigen::Matrix3d R = pose.q.toRotationMatrix();

  Frame frame;
  frame.timestamp = timestamp;
  frame.pose = pose;
  frame.intrinsics = K;
  frame.depth.width = K.width;
  frame.depth.height = K.height;
  frame.depth.scale = 0.001;
  frame.depth.raw.assign(std::size_t(K.width) * K.height, 0);
  frame.path_mask = Mask(K.width, K.height);

  std::vector<Mask> sign_masks(scene.signs.size(), Mask(K.width, K.height));
  std::vector<std::size_t> sign_front_pixels(scene.signs.size(), 0);
  struct PixBox {
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
    std::size_t count = 0;
    void add(int x, int y) {
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
      ++count;
    }
  };
  std::vector<PixBox> sign_boxes(scene.signs.size());
  std::vector<PixBox> structure_boxes(scene.structures.size());

  for (int v = 0; v < K.height; ++v)
    for (int u = 0; u < K.width; ++u) {
      const Vec3 dir_cam((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
      const Vec3 dir = R * dir_cam;
      const auto hit = cast.cast(pose.t, dir);
      if (hit.kind == simdetail::HitKind::kNone) continue;
      // hit.t is the camera-frame z (dir_cam.z == 1)
      const double mm = hit.t * 1000.0;
      if (mm >= 1.0 && mm <= 65535.0)
        frame.depth.raw[std::size_t(v) * K.width + u] =
            std::uint16_t(std::llround(mm));
      else
        continue;  // out of range depth stays invalid
      switch (hit.kind) {
        case simdetail::HitKind::kGround:
          frame.path_mask.set(u, v, true);
          break;
        case simdetail::HitKind::kSign:
          if (hit.front) {
            sign_masks[std::size_t(hit.index)].set(u, v, true);
            sign_front_pixels[std::size_t(hit.index)] += 1;
            sign_boxes[std::size_t(hit.index)].add(u, v);
          }
          break;
        case simdetail::HitKind::kStructure:
          structure_boxes[std::size_t(hit.index)].add(u, v);
          break;
        default:
          break;
      }
    }

  // sign detections: front side and >=50% of the face unoccluded
  for (int i = 0; i < int(scene.signs.size()); ++i) {
    const auto& sign = scene.signs[std::size_t(i)];
    const Vec3 n(sign.normal.x(), sign.normal.y(), 0.0);
    if ((sign.position - pose.t).dot(n) >= 0.0) continue;  // back side
    if (sign_front_pixels[std::size_t(i)] == 0) continue;
    const Vec3 tangent(-sign.normal.y(), sign.normal.x(), 0.0);
    int visible = 0, samples = 0;
    for (int a = -4; a <= 4; ++a)
      for (int b = -4; b <= 4; ++b) {
        const Vec3 w = sign.position +
                       tangent * (a / 4.0 * 0.45 * sign.width) +
                       Vec3(0, 0, 1) * (b / 4.0 * 0.45 * sign.height);
        ++samples;
        const auto pd = project(w, K, pose);
        if (!pd || pd->u < 0 || pd->v < 0 || pd->u >= K.width ||
            pd->v >= K.height)
          continue;
        const auto hit = cast.cast(pose.t, w - pose.t);
        if (hit.kind == simdetail::HitKind::kSign && hit.index == i &&
            hit.t > 1.0 - 1e-6 && hit.t < 1.0 + 1e-6)
          ++visible;
      }
    if (visible * 2 < samples) continue;
    const auto& bb = sign_boxes[std::size_t(i)];
    Detection det;
    det.class_label = "sign";
    det.x0 = bb.x0;
    det.y0 = bb.y0;
    det.x1 = bb.x1 + 1;
    det.y1 = bb.y1 + 1;
    det.score = 1.0;
    frame.detections.push_back(det);
    frame.sign_masks.push_back(sign_masks[std::size_t(i)]);
    frame.sign_images.push_back(kSimSignMarker + std::to_string(i));
  }

  for (int i = 0; i < int(scene.structures.size()); ++i) {
    const auto& bb = structure_boxes[std::size_t(i)];
    if (bb.count < 30) continue;
    Detection det;
    det.class_label = scene.structures[std::size_t(i)].class_label;
    det.x0 = bb.x0;
    det.y0 = bb.y0;
    det.x1 = bb.x1 + 1;
    det.y1 = bb.y1 + 1;
    det.score = 1.0;
    frame.detections.push_back(det);
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Oracle VLM
// ---------------------------------------------------------------------------

/// Serialize a cue set in the reply format the parse prompt requests: all 17
/// keys in vocabulary order, single quotes, empty lists for absent keys.
inline std::string cues_to_reply_dict(const NavCueSet& cues) {
  std::string out = "{";
  for (int t = 0; t < kInstructionCount; ++t) {
    const Instruction instr = Instruction(t);
    if (t > 0) out += ", ";
    out += std::string("'") + to_token(instr) + "': [";
    bool first = true;
    auto append = [&](const std::string& phrase) {
      if (!first) out += ", ";
      out += "'" + phrase + "'";
      first = false;
    };
    if (is_locational(instr)) {
      for (const auto& l : cues.locational) append(l);
    } else {
      for (const auto& c : cues.cues)
        if (c.instruction == instr) append(c.location);
    }
    out += "]";
  }
  out += "}";
  return out;
}

class OracleVlm : public VlmClient {
 public:
  explicit OracleVlm(SceneSpec scene, double corrupt_p = 0.0,
                     std::uint64_t seed = 0)
      : scene_(std::move(scene)),
        corrupt_p_(corrupt_p),
        rng_(seed ? seed : (scene_.rng_seed ? scene_.rng_seed : 1)) {}

  VlmResponse chat(const VlmRequest& request) override {
    const std::string* last_text = nullptr;
    for (const auto& part : request.parts)
      if (part.kind == VlmPart::kText) last_text = &part.data;
    if (!last_text) throw OracleMismatch("request has no text part");
    if (last_text->rfind(kParsePromptPrefix, 0) == 0) return parse_reply(request);
    if (last_text->rfind(kGroundPromptPrefix, 0) == 0)
      return ground_reply(request, *last_text);
    throw OracleMismatch("unrecognized prompt: " + last_text->substr(0, 60));
  }

 private:
  VlmResponse parse_reply(const VlmRequest& request) {
    int sign_index = -1;
    for (const auto& part : request.parts) {
      if (part.kind != VlmPart::kImage) continue;
      if (part.data.rfind(kSimSignMarker, 0) == 0)
        sign_index = std::stoi(part.data.substr(std::string(kSimSignMarker).size()));
    }
    if (sign_index < 0 || sign_index >= int(scene_.signs.size()))
      throw OracleMismatch("parse request carries no simulator sign marker");
    NavCueSet cues = scene_.signs[std::size_t(sign_index)].cues;
    if (corrupt_p_ > 0.0) {
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      for (auto& cue : cues.cues)
        if (coin(rng_) < corrupt_p_) cue.instruction = random_other(cue.instruction);
    }
    return {cues_to_reply_dict(cues)};
  }

  Instruction random_other(Instruction current) {
    // uniform over the 16 non-locational tokens excluding the current one
    std::vector<Instruction> pool;
    for (int t = 0; t < kInstructionCount; ++t) {
      const Instruction instr = Instruction(t);
      if (!is_locational(instr) && instr != current) pool.push_back(instr);
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(rng_)];
  }

  VlmResponse ground_reply(const VlmRequest& request,
                           const std::string& prompt) {
    const std::string* image = nullptr;
    for (const auto& part : request.parts)
      if (part.kind == VlmPart::kImage) image = &part.data;
    if (!image) throw OracleMismatch("ground request has no image");
    json sidecar;
    try {
      sidecar = json::parse(png_text_chunk(*image, kSidecarTextKey));
    } catch (const Error&) {
      throw OracleMismatch("ground request image carries no sidecar");
    }
    SignFrame2 frame;
    frame.origin = Vec2(sidecar.at("frame").at("origin").at(0).get<double>(),
                        sidecar.at("frame").at("origin").at(1).get<double>());
    frame.y_axis = Vec2(sidecar.at("frame").at("y_axis").at(0).get<double>(),
                        sidecar.at("frame").at("y_axis").at(1).get<double>());
    frame.x_axis = Vec2(frame.y_axis.y(), -frame.y_axis.x());

    const auto instruction = extract_instruction(prompt);

    // candidates from ground truth, expressed in the render frame
    std::vector<GroundCandidate> truth;
    for (const auto& b : scene_.branches)
      truth.push_back({SelectedElement::kFrontier, b.name, "",
                       frame.to_frame(b.entrance)});
    for (int i = 0; i < int(scene_.structures.size()); ++i) {
      const auto& st = scene_.structures[std::size_t(i)];
      truth.push_back({SelectedElement::kStructure,
                       st.class_label + " #" + std::to_string(i),
                       st.class_label, frame.to_frame(st.center)});
    }
    SelectedElement chosen;
    try {
      chosen = apply_grounding_rule(truth, instruction);
    } catch (const Error& e) {
      throw OracleMismatch(std::string("truth grounding failed: ") + e.what());
    }

    // map the truth element onto the rendered annotation
    if (chosen.kind == SelectedElement::kStructure) {
      const std::string cls = label_class(chosen.id);
      std::string best;
      double best_d = 0.0;
      for (const auto& b : sidecar.at("boxes")) {
        const std::string label = b.at("label").get<std::string>();
        if (label_class(label) != cls) continue;
        const Vec2 c(b.at("center").at(0).get<double>(),
                     b.at("center").at(1).get<double>());
        const double d = (c - chosen.point).norm();
        if (best.empty() || d < best_d) {
          best = label;
          best_d = d;
        }
      }
      if (best.empty())
        throw OracleMismatch("render shows no structure of class " + cls);
      return {"[" + best + "]"};
    }
    std::string best;
    double best_d = 0.0;
    for (const auto& f : sidecar.at("frontiers")) {
      const Vec2 p(f.at("point").at(0).get<double>(),
                   f.at("point").at(1).get<double>());
      const double d = (p - chosen.point).norm();
      if (best.empty() || d < best_d) {
        best = f.at("letter").get<std::string>();
        best_d = d;
      }
    }
    if (best.empty()) throw OracleMismatch("render shows no frontiers");
    return {"[" + best + "]"};
  }

  Instruction extract_instruction(const std::string& prompt) const {
    const std::string anchor = "direction and places: ";
    const auto start = prompt.find(anchor);
    const auto end = prompt.find(". Remember that", start);
    if (start == std::string::npos || end == std::string::npos)
      throw OracleMismatch("ground prompt missing parsing dict");
    const std::string dict =
        prompt.substr(start + anchor.size(), end - start - anchor.size());
    std::vector<std::string> warnings;
    const NavCueSet cues = parse_vlm_reply(dict, &warnings);
    if (!cues.cues.empty()) return cues.cues.front().instruction;
    if (!cues.locational.empty()) return Instruction::kLocational;
    throw OracleMismatch("ground prompt parsing dict is empty");
  }

  SceneSpec scene_;
  double corrupt_p_;
  std::mt19937_64 rng_;
};

inline std::unique_ptr<VlmClient> make_oracle_vlm(const SceneSpec& scene,
                                                  double corrupt_p = 0.0,
                                                  std::uint64_t seed = 0) {
  return std::make_unique<OracleVlm>(scene, corrupt_p, seed);
}

// ---------------------------------------------------------------------------
// Trajectories and sequence emission
// ---------------------------------------------------------------------------

struct TimedPose {
  double t = 0.0;
  ScenePose pose;
};

inline std::vector<TimedPose> load_trajectory(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  std::vector<TimedPose> out;
  for (const auto& p : j.at("poses"))
    out.push_back({p.at("t").get<double>(),
                   {p.at("x").get<double>(), p.at("y").get<double>(),
                    p.at("yaw").get<double>()}});
  return out;
}

inline void save_trajectory(const std::vector<TimedPose>& traj,
                            const std::filesystem::path& path) {
  json poses = json::array();
  for (const auto& p : traj)
    poses.push_back({{"t", p.t}, {"x", p.pose.x}, {"y", p.pose.y},
                     {"yaw", p.pose.yaw}});
  write_file(path, json{{"atomnav_trajectory", 1}, {"poses", poses}}.dump(2));
}

inline std::vector<Frame> observe_trajectory(const SceneSpec& scene,
                                             const std::vector<TimedPose>& traj) {
  std::vector<Frame> frames;
  frames.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    try {
      frames.push_back(observe(scene, traj[i].pose, traj[i].t));
    } catch (const InvalidAgentPose& e) {
      throw InvalidAgentPose("pose " + std::to_string(i) + ": " + e.what());
    }
  }
  return frames;
}

inline void emit_sequence(const SceneSpec& scene,
                          const std::vector<TimedPose>& traj,
                          const std::filesystem::path& out_dir) {
  write_sequence(out_dir, observe_trajectory(scene, traj));
  write_file(out_dir / "scene.json", scene_to_json(scene).dump(2));
}

/// In-place scan at the start pose followed by a standoff visit to every
/// branch entrance, looking into and out of the branch. This is the stock
/// mapping trajectory for benchmarks.
inline std::vector<TimedPose> coverage_trajectory(const SceneSpec& scene,
                                                  int scan_steps = 12,
                                                  double dt = 0.25) {
  std::vector<TimedPose> traj;
  double t = 0.0;
  for (int k = 0; k < scan_steps; ++k) {
    traj.push_back({t, {scene.start.x, scene.start.y,
                        scene.start.yaw + 2.0 * kPi * k / scan_steps}});
    t += dt;
  }
  const Vec2 start_xy(scene.start.x, scene.start.y);
  for (const auto& b : scene.branches) {
    Vec2 inward = start_xy - b.entrance;
    if (inward.norm() < 1e-9) inward = Vec2(1.0, 0.0);
    inward.normalize();
    Vec2 visit(0.0, 0.0);
    bool found = false;
    for (double pull : {0.5, 0.75, 1.0, 1.5}) {
      visit = b.entrance + pull * inward;
      if (point_on_ground(scene, visit)) {
        found = true;
        break;
      }
    }
    if (!found) continue;
    Vec2 branch_dir = -inward;
    if (b.polyline.size() >= 2) {
      const Vec2 d = b.polyline[1] - b.polyline[0];
      if (d.norm() > 1e-9) branch_dir = d.normalized();
    }
    const double yaw_in = std::atan2(branch_dir.y(), branch_dir.x());
    traj.push_back({t, {visit.x(), visit.y(), yaw_in}});
    t += dt;
    traj.push_back({t, {visit.x(), visit.y(), yaw_in + kPi}});
    t += dt;
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Benchmark generation
// ---------------------------------------------------------------------------

namespace simdetail {

struct TruthElement {
  SelectedElement::Kind kind;
  std::string id;          // branch name or "class #i"
  std::string class_label; // structures only
  Vec2 world;              // reference point for annotation
  Vec2 nudged;             // visibility-probe point (branches pulled inside)
};

inline std::vector<TruthElement> truth_elements(const SceneSpec& scene) {
  std::vector<TruthElement> out;
  const Vec2 start_xy(scene.start.x, scene.start.y);
  for (const auto& b : scene.branches) {
    Vec2 inward = start_xy - b.entrance;
    if (inward.norm() < 1e-9) inward = Vec2(1.0, 0.0);
    inward.normalize();
    out.push_back({SelectedElement::kFrontier, b.name, "", b.entrance,
                   b.entrance + 0.3 * inward});
  }
  for (int i = 0; i < int(scene.structures.size()); ++i) {
    const auto& st = scene.structures[std::size_t(i)];
    out.push_back({SelectedElement::kStructure,
                   st.class_label + " #" + std::to_string(i), st.class_label,
                   st.center, st.center});
  }
  return out;
}

/// A pixel annotating the element in this frame, or nullopt when the
/// element is not visible with valid depth.
inline std::optional<Vec2> element_pixel(const SceneSpec& scene,
                                         const CastScene& cast,
                                         const Frame& frame,
                                         const TruthElement& el) {
  const CameraIntrinsics& K = frame.intrinsics;
  if (el.kind == SelectedElement::kFrontier) {
    const Vec3 w(el.nudged.x(), el.nudged.y(), 0.0);
    const auto pd = project(w, K, frame.pose);
    if (!pd || pd->u < 0.5 || pd->v < 0.5 || pd->u >= K.width - 0.5 ||
        pd->v >= K.height - 0.5)
      return std::nullopt;
    const int u = int(std::lround(pd->u)), v = int(std::lround(pd->v));
    if (!frame.depth.valid_at(u, v)) return std::nullopt;
    if (std::abs(frame.depth.meters_at(u, v) - pd->depth) > 0.05)
      return std::nullopt;  // occluded
    return Vec2(pd->u, pd->v);
  }
  // structures: aim at the box center column at half height and accept the
  // pixel if the nearest hit along it is this structure
  int index = -1;
  for (int i = 0; i < int(scene.structures.size()); ++i)
    if (scene.structures[std::size_t(i)].class_label == el.class_label &&
        (scene.structures[std::size_t(i)].center - el.world).norm() < 1e-9)
      index = i;
  const auto& st = scene.structures[std::size_t(index)];
  const Vec3 w(st.center.x(), st.center.y(), st.height / 2.0);
  const auto pd = project(w, K, frame.pose);
  if (!pd || pd->u < 0.5 || pd->v < 0.5 || pd->u >= K.width - 0.5 ||
      pd->v >= K.height - 0.5)
    return std::nullopt;
  const auto hit = cast.cast(frame.pose.t, w - frame.pose.t);
  if (hit.kind != HitKind::kStructure || hit.index != index || hit.t > 1.0)
    return std::nullopt;
  const int u = int(std::lround(pd->u)), v = int(std::lround(pd->v));
  if (!frame.depth.valid_at(u, v)) return std::nullopt;
  return Vec2(pd->u, pd->v);
}

}  // namespace simdetail

struct BenchmarkFiles {
  std::vector<TimedPose> trajectory;
  json queries;
};

/// Generate a multiple-choice benchmark: a coverage sequence plus one query
/// per groundable cue, each annotated with the truth pixel and three
/// distractors in a frame where at least four elements are visible.
inline BenchmarkFiles make_benchmark(const SceneSpec& scene,
                                     std::uint64_t seed,
                                     const std::filesystem::path& out_dir) {
  std::mt19937_64 rng(seed ? seed : 7);
  const auto elements = simdetail::truth_elements(scene);
  if (elements.size() < 4)
    throw SceneTooSimple("scene has " + std::to_string(elements.size()) +
                         " groundable elements, need 4");

  const auto traj = coverage_trajectory(scene);
  const auto frames = observe_trajectory(scene, traj);
  const simdetail::CastScene cast(scene);

  // per frame, which elements are visible and where
  struct FrameVis {
    std::vector<std::optional<Vec2>> px;
    int count = 0;
  };
  std::vector<FrameVis> vis(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    vis[f].px.resize(elements.size());
    for (std::size_t e = 0; e < elements.size(); ++e) {
      vis[f].px[e] = simdetail::element_pixel(scene, cast, frames[f], elements[e]);
      if (vis[f].px[e]) vis[f].count += 1;
    }
  }

  json queries = json::array();
  for (int s = 0; s < int(scene.signs.size()); ++s) {
    const auto& sign = scene.signs[std::size_t(s)];
    // exact sign frame from ground truth
    SignFrame2 frame;
    frame.origin = Vec2(sign.position.x(), sign.position.y());
    frame.y_axis = (-sign.normal).normalized();
    frame.x_axis = Vec2(frame.y_axis.y(), -frame.y_axis.x());
    std::vector<GroundCandidate> truth;
    for (const auto& el : elements)
      truth.push_back({el.kind, el.id, el.class_label, frame.to_frame(el.world)});

    for (const auto& cue : sign.cues.cues) {
      SelectedElement chosen;
      try {
        chosen = apply_grounding_rule(truth, cue.instruction);
      } catch (const Error&) {
        continue;  // cue not groundable in this scene
      }
      std::size_t truth_idx = elements.size();
      for (std::size_t e = 0; e < elements.size(); ++e)
        if (elements[e].id == chosen.id) truth_idx = e;
      if (truth_idx == elements.size()) continue;

      // pick the frame: truth visible, maximal total visibility, earliest
      std::size_t best_f = frames.size();
      for (std::size_t f = 0; f < frames.size(); ++f) {
        if (!vis[f].px[truth_idx] || vis[f].count < 4) continue;
        if (best_f == frames.size() || vis[f].count > vis[best_f].count)
          best_f = f;
      }
      if (best_f == frames.size()) continue;

      std::vector<std::size_t> others;
      for (std::size_t e = 0; e < elements.size(); ++e)
        if (e != truth_idx && vis[best_f].px[e]) others.push_back(e);
      if (others.size() < 3) continue;
      std::shuffle(others.begin(), others.end(), rng);
      others.resize(3);
      std::vector<std::size_t> picks = {truth_idx, others[0], others[1],
                                        others[2]};
      std::shuffle(picks.begin(), picks.end(), rng);

      json choices = json::array();
      std::string truth_id;
      static const char* kIds[4] = {"A", "B", "C", "D"};
      for (int k = 0; k < 4; ++k) {
        const Vec2 px = *vis[best_f].px[picks[std::size_t(k)]];
        choices.push_back({{"id", kIds[k]}, {"px", {px.x(), px.y()}}});
        if (picks[std::size_t(k)] == truth_idx) truth_id = kIds[k];
      }
      queries.push_back(
          {{"query", cue.location},
           {"frame_t", frames[best_f].timestamp},
           {"choices", choices},
           {"truth", truth_id},
           {"truth_cue",
            {{"location", cue.location},
             {"instruction", to_token(cue.instruction)}}}});
    }
  }
  if (queries.empty()) throw SceneTooSimple("no groundable query could be annotated");

  write_sequence(out_dir, frames);
  write_file(out_dir / "scene.json", scene_to_json(scene).dump(2));
  write_file(out_dir / "queries.json",
             json{{"atomnav_queries", 1}, {"queries", queries}}.dump(2));
  BenchmarkFiles files;
  files.trajectory = traj;
  files.queries = json{{"atomnav_queries", 1}, {"queries", queries}};
  return files;
}

}  // namespace atomnav
