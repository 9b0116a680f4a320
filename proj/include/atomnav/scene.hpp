#pragma once

// Domain model: the closed instruction vocabulary, navigational cues, fused
// sign/structure instances, and the serializable 3D map.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "atomnav/errors.hpp"
#include "atomnav/geometry.hpp"
#include "atomnav/serde.hpp"

namespace atomnav {

using json = nlohmann::json;

constexpr int kAtomVersion = 1;

// ---------------------------------------------------------------------------
// Instruction vocabulary (closed set of 17 tokens)
// ---------------------------------------------------------------------------

enum class Instruction : std::uint8_t {
  kForward,
  kBackwards,
  kLeft,
  kRight,
  kForwardLeft,
  kForwardRight,
  kBackwardRight,
  kBackwardLeft,
  kForwardThenLeft,
  kForwardThenRight,
  kLeftThenForward,
  kRightThenForward,
  kUpStairs,
  kDownStairs,
  kDownEscalator,
  kUpEscalator,
  kLocational,
};

constexpr int kInstructionCount = 17;

inline const std::array<const char*, kInstructionCount>& instruction_tokens() {
  static const std::array<const char*, kInstructionCount> tokens = {
      "forward",           "backwards",
      "left",              "right",
      "forward-left",      "forward-right",
      "backward-right",    "backward-left",
      "forward-then-left", "forward-then-right",
      "left-then-forward", "right-then-forward",
      "up-stairs",         "down-stairs",
      "down-escalator",    "up-escalator",
      "locational",
  };
  return tokens;
}

inline const char* to_token(Instruction i) {
  return instruction_tokens()[std::size_t(i)];
}

inline std::optional<Instruction> instruction_from_token(std::string_view s) {
  const auto& tokens = instruction_tokens();
  for (int i = 0; i < kInstructionCount; ++i)
    if (s == tokens[std::size_t(i)]) return Instruction(i);
  return std::nullopt;
}

inline bool is_locational(Instruction i) {
  return i == Instruction::kLocational;
}

inline bool is_structure(Instruction i) {
  return i == Instruction::kUpStairs || i == Instruction::kDownStairs ||
         i == Instruction::kDownEscalator || i == Instruction::kUpEscalator;
}

inline bool is_compound(Instruction i) {
  return i == Instruction::kForwardThenLeft ||
         i == Instruction::kForwardThenRight ||
         i == Instruction::kLeftThenForward ||
         i == Instruction::kRightThenForward;
}

inline bool is_primitive_direction(Instruction i) {
  return !is_locational(i) && !is_structure(i) && !is_compound(i);
}

/// Canonical unit vector of a primitive direction in the sign frame
/// (+Y = reader's forward past the sign, +X = reader's right).
inline Vec2 direction_vector(Instruction i) {
  const double d = 1.0 / std::sqrt(2.0);
  switch (i) {
    case Instruction::kForward: return Vec2(0.0, 1.0);
    case Instruction::kBackwards: return Vec2(0.0, -1.0);
    case Instruction::kLeft: return Vec2(-1.0, 0.0);
    case Instruction::kRight: return Vec2(1.0, 0.0);
    case Instruction::kForwardLeft: return Vec2(-d, d);
    case Instruction::kForwardRight: return Vec2(d, d);
    case Instruction::kBackwardRight: return Vec2(d, -d);
    case Instruction::kBackwardLeft: return Vec2(-d, -d);
    default:
      throw Error(std::string("not a primitive direction: ") + to_token(i));
  }
}

/// Ordered parts of a compound "X-then-Y" instruction.
inline std::pair<Instruction, Instruction> compound_parts(Instruction i) {
  switch (i) {
    case Instruction::kForwardThenLeft:
      return {Instruction::kForward, Instruction::kLeft};
    case Instruction::kForwardThenRight:
      return {Instruction::kForward, Instruction::kRight};
    case Instruction::kLeftThenForward:
      return {Instruction::kLeft, Instruction::kForward};
    case Instruction::kRightThenForward:
      return {Instruction::kRight, Instruction::kForward};
    default:
      throw Error(std::string("not a compound instruction: ") + to_token(i));
  }
}

struct StructureSense {
  std::string class_label;
  bool up = false;
};

inline StructureSense structure_sense(Instruction i) {
  switch (i) {
    case Instruction::kUpStairs: return {"stairs", true};
    case Instruction::kDownStairs: return {"stairs", false};
    case Instruction::kUpEscalator: return {"escalator", true};
    case Instruction::kDownEscalator: return {"escalator", false};
    default:
      throw Error(std::string("not a structure instruction: ") + to_token(i));
  }
}

// ---------------------------------------------------------------------------
// Phrase normalization
// ---------------------------------------------------------------------------

/// Lowercase (ASCII), trim, and collapse internal whitespace runs. Non-ASCII
/// bytes pass through unchanged.
inline std::string normalize_phrase(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
        c == '\v') {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(char(std::tolower(c)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cues
// ---------------------------------------------------------------------------

struct NavCue {
  std::string location;  // normalized phrase
  Instruction instruction = Instruction::kForward;

  bool operator==(const NavCue& o) const {
    return location == o.location && instruction == o.instruction;
  }
};

struct NavCueSet {
  std::vector<NavCue> cues;
  std::vector<std::string> locational;

  void add_cue(const std::string& location, Instruction instruction) {
    NavCue c{location, instruction};
    if (std::find(cues.begin(), cues.end(), c) == cues.end())
      cues.push_back(std::move(c));
  }

  void add_locational(const std::string& location) {
    if (std::find(locational.begin(), locational.end(), location) ==
        locational.end())
      locational.push_back(location);
  }

  bool empty() const { return cues.empty() && locational.empty(); }

  bool operator==(const NavCueSet& o) const {
    return cues == o.cues && locational == o.locational;
  }
};

// ---------------------------------------------------------------------------
// Map instances
// ---------------------------------------------------------------------------

struct SignInstance {
  int id = 0;
  Vec3 centroid{0.0, 0.0, 0.0};
  Vec3 normal{0.0, -1.0, 0.0};  // outward from the sign face, unit norm
  std::vector<std::pair<double, NavCueSet>> parse_history;
  NavCueSet merged_cues;
  int observation_count = 0;
  std::vector<std::string> warnings;
};

struct StructureInstance {
  int id = 0;
  std::string class_label;
  OrientedBox3 box;
  double confidence = 0.0;  // running mean of detection scores
  int detection_count = 0;
  PointCloud3 fused_cloud;
};

struct AtomMap {
  std::vector<SignInstance> signs;
  std::vector<StructureInstance> structures;
  PointCloud3 path_cloud;
  std::vector<std::pair<double, Pose3>> frame_log;
};

/// Apply a rigid transform to every piece of 3D content in the map.
inline AtomMap transform_map(const AtomMap& map, const Pose3& g) {
  AtomMap out = map;
  for (auto& s : out.signs) {
    s.centroid = g.apply(s.centroid);
    s.normal = g.q * s.normal;
  }
  for (auto& st : out.structures) {
    st.box.center = g.apply(st.box.center);
    const Vec3 x_axis = g.q * Vec3(std::cos(st.box.yaw), std::sin(st.box.yaw), 0.0);
    st.box.yaw = std::atan2(x_axis.y(), x_axis.x());
    PointCloud3 cloud;
    cloud.points.reserve(st.fused_cloud.size());
    for (const auto& p : st.fused_cloud.points)
      cloud.add(g.apply(p.cast<double>()));
    st.fused_cloud = std::move(cloud);
  }
  PointCloud3 path;
  path.points.reserve(out.path_cloud.size());
  for (const auto& p : out.path_cloud.points) path.add(g.apply(p.cast<double>()));
  out.path_cloud = std::move(path);
  for (auto& [t, pose] : out.frame_log) pose = compose(g, pose);
  return out;
}

// ---------------------------------------------------------------------------
// JSON conversions
// ---------------------------------------------------------------------------

inline json pose_to_json(const Pose3& p) {
  return json{{"t", {p.t.x(), p.t.y(), p.t.z()}},
              {"q", {p.q.w(), p.q.x(), p.q.y(), p.q.z()}}};
}

inline Pose3 pose_from_json(const json& j) {
  Pose3 p;
  const auto& t = j.at("t");
  const auto& q = j.at("q");
  p.t = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  p.q = Eigen::Quaterniond(q.at(0).get<double>(), q.at(1).get<double>(),
                           q.at(2).get<double>(), q.at(3).get<double>());
  return p;
}

inline json cueset_to_json(const NavCueSet& s) {
  json cues = json::array();
  for (const auto& c : s.cues)
    cues.push_back({{"location", c.location},
                    {"instruction", to_token(c.instruction)}});
  return json{{"cues", cues}, {"locational", s.locational}};
}

inline NavCueSet cueset_from_json(const json& j) {
  NavCueSet s;
  for (const auto& c : j.at("cues")) {
    const auto tok = instruction_from_token(c.at("instruction").get<std::string>());
    if (!tok) throw Error("unknown instruction token in cue set");
    s.cues.push_back({c.at("location").get<std::string>(), *tok});
  }
  for (const auto& l : j.at("locational"))
    s.locational.push_back(l.get<std::string>());
  return s;
}

inline json vec3_to_json(const Vec3& v) { return json{v.x(), v.y(), v.z()}; }

inline Vec3 vec3_from_json(const json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

// ---------------------------------------------------------------------------
// AToM serialization (atom_version 1)
// ---------------------------------------------------------------------------

inline std::string serialize_atom(const AtomMap& map) {
  json j;
  j["atom_version"] = kAtomVersion;
  json signs = json::array();
  for (const auto& s : map.signs) {
    json history = json::array();
    for (const auto& [t, cues] : s.parse_history)
      history.push_back({{"t", t}, {"cues", cueset_to_json(cues)}});
    signs.push_back({{"id", s.id},
                     {"centroid", vec3_to_json(s.centroid)},
                     {"normal", vec3_to_json(s.normal)},
                     {"parse_history", history},
                     {"merged_cues", cueset_to_json(s.merged_cues)},
                     {"observation_count", s.observation_count},
                     {"warnings", s.warnings}});
  }
  j["signs"] = signs;
  json structures = json::array();
  for (const auto& st : map.structures) {
    structures.push_back(
        {{"id", st.id},
         {"class", st.class_label},
         {"box",
          {{"center", vec3_to_json(st.box.center)},
           {"half_extents", vec3_to_json(st.box.half_extents)},
           {"yaw", st.box.yaw}}},
         {"confidence", st.confidence},
         {"detection_count", st.detection_count},
         {"cloud_b64", base64_encode(cloud_to_blob(st.fused_cloud))}});
  }
  j["structures"] = structures;
  j["path_cloud_b64"] = base64_encode(cloud_to_blob(map.path_cloud));
  json frames = json::array();
  for (const auto& [t, pose] : map.frame_log)
    frames.push_back({{"t", t}, {"pose", pose_to_json(pose)}});
  j["frame_log"] = frames;
  return j.dump();
}

inline AtomMap deserialize_atom(std::string_view bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  try {
    if (j.at("atom_version").get<int>() != kAtomVersion)
      throw Error("unsupported atom_version");
    AtomMap map;
    for (const auto& s : j.at("signs")) {
      SignInstance sign;
      sign.id = s.at("id").get<int>();
      sign.centroid = vec3_from_json(s.at("centroid"));
      sign.normal = vec3_from_json(s.at("normal"));
      for (const auto& h : s.at("parse_history"))
        sign.parse_history.emplace_back(h.at("t").get<double>(),
                                        cueset_from_json(h.at("cues")));
      sign.merged_cues = cueset_from_json(s.at("merged_cues"));
      sign.observation_count = s.at("observation_count").get<int>();
      for (const auto& w : s.at("warnings"))
        sign.warnings.push_back(w.get<std::string>());
      map.signs.push_back(std::move(sign));
    }
    for (const auto& s : j.at("structures")) {
      StructureInstance st;
      st.id = s.at("id").get<int>();
      st.class_label = s.at("class").get<std::string>();
      st.box.center = vec3_from_json(s.at("box").at("center"));
      st.box.half_extents = vec3_from_json(s.at("box").at("half_extents"));
      st.box.yaw = s.at("box").at("yaw").get<double>();
      st.confidence = s.at("confidence").get<double>();
      st.detection_count = s.at("detection_count").get<int>();
      st.fused_cloud =
          cloud_from_blob(base64_decode(s.at("cloud_b64").get<std::string>()));
      map.structures.push_back(std::move(st));
    }
    map.path_cloud =
        cloud_from_blob(base64_decode(j.at("path_cloud_b64").get<std::string>()));
    for (const auto& f : j.at("frame_log"))
      map.frame_log.emplace_back(f.at("t").get<double>(),
                                 pose_from_json(f.at("pose")));
    return map;
  } catch (const json::exception& e) {
    throw ParseError(e.what(), 0);
  }
}

// ---------------------------------------------------------------------------
// Equality (used by round-trip tests and determinism checks)
// ---------------------------------------------------------------------------

inline bool operator==(const SignInstance& a, const SignInstance& b) {
  return a.id == b.id && a.centroid == b.centroid && a.normal == b.normal &&
         a.parse_history == b.parse_history && a.merged_cues == b.merged_cues &&
         a.observation_count == b.observation_count && a.warnings == b.warnings;
}

inline bool operator==(const StructureInstance& a, const StructureInstance& b) {
  return a.id == b.id && a.class_label == b.class_label &&
         a.box.center == b.box.center &&
         a.box.half_extents == b.box.half_extents && a.box.yaw == b.box.yaw &&
         a.confidence == b.confidence &&
         a.detection_count == b.detection_count &&
         a.fused_cloud == b.fused_cloud;
}

inline bool operator==(const AtomMap& a, const AtomMap& b) {
  if (!(a.signs == b.signs && a.structures == b.structures &&
        a.path_cloud == b.path_cloud))
    return false;
  if (a.frame_log.size() != b.frame_log.size()) return false;
  for (std::size_t i = 0; i < a.frame_log.size(); ++i) {
    if (a.frame_log[i].first != b.frame_log[i].first) return false;
    const Pose3& p = a.frame_log[i].second;
    const Pose3& q = b.frame_log[i].second;
    if (p.t != q.t || p.q.coeffs() != q.q.coeffs()) return false;
  }
  return true;
}

}  // namespace atomnav
