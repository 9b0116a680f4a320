#pragma once

// Incremental map construction: per-frame sign geometry estimation and
// clustering, viewpoint-gated VLM parsing, Hungarian structure association,
// and ground-band path accumulation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "atomnav/errors.hpp"
#include "atomnav/geometry.hpp"
#include "atomnav/hungarian.hpp"
#include "atomnav/ports.hpp"
#include "atomnav/scene.hpp"
#include "atomnav/sign_understanding.hpp"

namespace atomnav {

struct BuilderConfig {
  double tau_dist = 3.5;               // viewpoint distance gate, meters
  double tau_angle_deg = 30.0;         // viewpoint alignment gate
  double sign_cluster_dist = 0.5;      // meters
  double sign_cluster_angle_deg = 20.0;
  double assoc_gate = 1.0;             // structure association gate, meters
  double ground_band = 0.5;            // |z| band for path points, meters
  double voxel = 0.05;                 // path/structure cloud downsample
  std::vector<std::string> structure_vocab = {"stairs", "escalator", "lift",
                                              "door"};
  double detection_threshold = 0.35;   // default per-class score gate
  std::map<std::string, double> class_thresholds;
  double structure_ground_clearance = 0.05;  // drop near-floor bbox points
  int min_sign_depth_pixels = 50;
  int min_structure_points = 30;

  double threshold_for(const std::string& cls) const {
    const auto it = class_thresholds.find(cls);
    return it == class_thresholds.end() ? detection_threshold : it->second;
  }
};

inline void merge_config_json(BuilderConfig& cfg, const json& j) {
  cfg.tau_dist = j.value("tau_dist", cfg.tau_dist);
  cfg.tau_angle_deg = j.value("tau_angle", cfg.tau_angle_deg);
  cfg.sign_cluster_dist = j.value("sign_cluster_dist", cfg.sign_cluster_dist);
  cfg.sign_cluster_angle_deg =
      j.value("sign_cluster_angle", cfg.sign_cluster_angle_deg);
  cfg.assoc_gate = j.value("assoc_gate", cfg.assoc_gate);
  cfg.ground_band = j.value("ground_band", cfg.ground_band);
  cfg.voxel = j.value("voxel", cfg.voxel);
  if (j.contains("structure_vocab"))
    cfg.structure_vocab = j["structure_vocab"].get<std::vector<std::string>>();
  cfg.detection_threshold =
      j.value("detection_threshold", cfg.detection_threshold);
  if (j.contains("class_thresholds"))
    for (const auto& [k, v] : j["class_thresholds"].items())
      cfg.class_thresholds[k] = v.get<double>();
}

// ---------------------------------------------------------------------------
// Per-frame operations
// ---------------------------------------------------------------------------

struct SignGeometry {
  Vec3 centroid;
  Vec3 normal;  // unit, faces the camera
  std::size_t pixels = 0;
};

inline SignGeometry estimate_sign_geometry(const Frame& frame, int mask_index,
                                           int min_pixels = 50) {
  const Mask& mask = frame.sign_masks.at(std::size_t(mask_index));
  std::vector<Vec3> pts;
  for (int v = 0; v < mask.height; ++v)
    for (int u = 0; u < mask.width; ++u) {
      if (!mask.at(u, v) || !frame.depth.valid_at(u, v)) continue;
      pts.push_back(unproject(u, v, frame.depth.meters_at(u, v),
                              frame.intrinsics, frame.pose));
    }
  if (int(pts.size()) < min_pixels)
    throw InsufficientDepth("sign mask has " + std::to_string(pts.size()) +
                            " valid-depth pixels");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= double(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Vec3 normal = es.eigenvectors().col(0);  // least-variance direction
  // orient outward: the normal must face the camera
  const Vec3 cam_to_centroid = mean - frame.pose.t;
  if (normal.dot(cam_to_centroid) > 0.0) normal = -normal;
  return SignGeometry{mean, normal.normalized(), pts.size()};
}

/// Match an observation into the sign list (nearest centroid among
/// qualifiers, running-mean update) or start a new instance. Returns the id.
inline int cluster_sign(AtomMap& map, const Vec3& centroid, const Vec3& normal,
                        const BuilderConfig& cfg) {
  const double cos_gate = std::cos(deg2rad(cfg.sign_cluster_angle_deg));
  SignInstance* best = nullptr;
  double best_dist = 0.0;
  for (auto& s : map.signs) {
    const double d = (s.centroid - centroid).norm();
    if (d > cfg.sign_cluster_dist) continue;
    if (s.normal.dot(normal) < cos_gate) continue;
    if (!best || d < best_dist) {
      best = &s;
      best_dist = d;
    }
  }
  if (best) {
    const double n = best->observation_count;
    best->centroid = (best->centroid * n + centroid) / (n + 1.0);
    best->normal = (best->normal * n + normal).normalized();
    best->observation_count += 1;
    return best->id;
  }
  SignInstance s;
  s.id = map.signs.empty() ? 0 : map.signs.back().id + 1;
  s.centroid = centroid;
  s.normal = normal;
  s.observation_count = 1;
  map.signs.push_back(std::move(s));
  return map.signs.back().id;
}

/// Both gates closed (<=): distance in the ground plane, camera forward
/// against the flipped sign normal.
inline bool viewpoint_suitable(const Pose3& frame_pose,
                               const SignInstance& sign,
                               const BuilderConfig& cfg) {
  const Vec2 robot_xy(frame_pose.t.x(), frame_pose.t.y());
  const Vec2 sign_xy(sign.centroid.x(), sign.centroid.y());
  if ((robot_xy - sign_xy).norm() > cfg.tau_dist) return false;
  const Vec3 forward = frame_pose.q * Vec3(0.0, 0.0, 1.0);
  const double cos_angle = forward.normalized().dot(-sign.normal);
  return cos_angle >= std::cos(deg2rad(cfg.tau_angle_deg));
}

struct StructureDetection3 {
  std::string class_label;
  PointCloud3 cloud;
  double score = 0.0;
  Vec3 centroid{0.0, 0.0, 0.0};
};

/// Hungarian association of per-frame detections against map structures.
/// Cost is centroid distance; pairs with differing class or beyond the gate
/// are forbidden. Matched structures merge clouds, refit, and update the
/// confidence running mean; unmatched detections become new instances.
inline void associate_structures(AtomMap& map,
                                 std::vector<StructureDetection3> detections,
                                 const BuilderConfig& cfg,
                                 std::vector<std::string>* warnings = nullptr) {
  if (detections.empty()) return;
  const int rows = int(map.structures.size());
  const int cols = int(detections.size());
  std::vector<std::vector<double>> cost(
      std::size_t(rows), std::vector<double>(std::size_t(cols), kAssignForbidden));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const auto& st = map.structures[std::size_t(r)];
      const auto& det = detections[std::size_t(c)];
      if (st.class_label != det.class_label) continue;
      const double d = (st.box.center - det.centroid).norm();
      if (d > cfg.assoc_gate) continue;
      cost[std::size_t(r)][std::size_t(c)] = d;
    }
  std::vector<char> det_matched(std::size_t(cols), 0);
  for (const auto& [r, c] : solve_assignment(cost, rows, cols)) {
    auto& st = map.structures[std::size_t(r)];
    auto& det = detections[std::size_t(c)];
    det_matched[std::size_t(c)] = 1;
    PointCloud3 merged = st.fused_cloud;
    merged.points.insert(merged.points.end(), det.cloud.points.begin(),
                         det.cloud.points.end());
    merged = voxel_downsample(merged, cfg.voxel);
    try {
      st.box = fit_oriented_box(merged);
      st.fused_cloud = std::move(merged);
    } catch (const DegenerateCloud& e) {
      if (warnings) warnings->push_back(std::string("structure refit: ") + e.what());
    }
    const double n = st.detection_count;
    st.confidence = (st.confidence * n + det.score) / (n + 1.0);
    st.detection_count += 1;
  }
  for (int c = 0; c < cols; ++c) {
    if (det_matched[std::size_t(c)]) continue;
    auto& det = detections[std::size_t(c)];
    StructureInstance st;
    st.id = map.structures.empty() ? 0 : map.structures.back().id + 1;
    st.class_label = det.class_label;
    st.fused_cloud = voxel_downsample(det.cloud, cfg.voxel);
    try {
      st.box = fit_oriented_box(st.fused_cloud);
    } catch (const DegenerateCloud& e) {
      if (warnings)
        warnings->push_back(std::string("structure skipped: ") + e.what());
      continue;
    }
    st.confidence = det.score;
    st.detection_count = 1;
    map.structures.push_back(std::move(st));
  }
}

/// Literal per-frame path update: unproject masked pixels, keep points in
/// the ground band, append, voxel-downsample. MapBuilder uses a persistent
/// accumulator with the same contract.
inline void accumulate_path(AtomMap& map, const Frame& frame,
                            const BuilderConfig& cfg) {
  for (int v = 0; v < frame.path_mask.height; ++v)
    for (int u = 0; u < frame.path_mask.width; ++u) {
      if (!frame.path_mask.at(u, v) || !frame.depth.valid_at(u, v)) continue;
      const Vec3 p = unproject(u, v, frame.depth.meters_at(u, v),
                               frame.intrinsics, frame.pose);
      if (std::abs(p.z()) <= cfg.ground_band) map.path_cloud.add(p);
    }
  map.path_cloud = voxel_downsample(map.path_cloud, cfg.voxel);
}

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

class MapBuilder {
 public:
  MapBuilder(BuilderConfig cfg, SymbolDictionary dict, VlmClient* vlm)
      : cfg_(std::move(cfg)), dict_(std::move(dict)), vlm_(vlm) {}

  const BuilderConfig& config() const { return cfg_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  void fold(const Frame& frame) {
    map_.frame_log.emplace_back(frame.timestamp, frame.pose);
    fold_signs(frame);
    fold_structures(frame);
    fold_path(frame);
    path_dirty_ = true;
  }

  /// Current map with the path cloud materialized. Merged cues are only
  /// valid after finalize().
  const AtomMap& map() {
    if (path_dirty_) {
      materialize_path();
      path_dirty_ = false;
    }
    return map_;
  }

  AtomMap finalize() {
    for (auto& s : map_.signs) {
      std::vector<NavCueSet> history;
      history.reserve(s.parse_history.size());
      for (const auto& [t, cues] : s.parse_history) history.push_back(cues);
      s.merged_cues = merge_cues(history);
    }
    materialize_path();
    path_dirty_ = false;
    return map_;
  }

 private:
  void fold_signs(const Frame& frame) {
    for (int i = 0; i < int(frame.sign_masks.size()); ++i) {
      SignGeometry geom;
      try {
        geom = estimate_sign_geometry(frame, i, cfg_.min_sign_depth_pixels);
      } catch (const InsufficientDepth& e) {
        warnings_.push_back(std::string("t=") +
                            std::to_string(frame.timestamp) + ": " + e.what());
        continue;
      }
      const int id = cluster_sign(map_, geom.centroid, geom.normal, cfg_);
      SignInstance& sign = *find_sign(id);
      if (!viewpoint_suitable(frame.pose, sign, cfg_)) continue;
      try {
        const VlmRequest req =
            build_parse_request(frame.sign_images.at(std::size_t(i)), dict_);
        const VlmResponse resp = vlm_->chat(req);
        NavCueSet cues = parse_vlm_reply(resp.text, &sign.warnings);
        sign.parse_history.emplace_back(frame.timestamp, std::move(cues));
      } catch (const UnparseableReply& e) {
        sign.warnings.push_back(std::string("unparseable reply at t=") +
                                std::to_string(frame.timestamp) + ": " +
                                e.raw.substr(0, 120));
      }
    }
  }

  void fold_structures(const Frame& frame) {
    std::vector<StructureDetection3> dets;
    for (const auto& det : frame.detections) {
      if (std::find(cfg_.structure_vocab.begin(), cfg_.structure_vocab.end(),
                    det.class_label) == cfg_.structure_vocab.end())
        continue;
      if (det.score < cfg_.threshold_for(det.class_label)) continue;
      StructureDetection3 d3;
      d3.class_label = det.class_label;
      d3.score = det.score;
      const int u0 = std::max(0, int(std::floor(det.x0)));
      const int v0 = std::max(0, int(std::floor(det.y0)));
      const int u1 = std::min(frame.intrinsics.width - 1, int(std::ceil(det.x1)));
      const int v1 = std::min(frame.intrinsics.height - 1, int(std::ceil(det.y1)));
      Vec3 sum = Vec3::Zero();
      for (int v = v0; v <= v1; ++v)
        for (int u = u0; u <= u1; ++u) {
          if (!frame.depth.valid_at(u, v)) continue;
          const Vec3 p = unproject(u, v, frame.depth.meters_at(u, v),
                                   frame.intrinsics, frame.pose);
          if (p.z() < cfg_.structure_ground_clearance) continue;
          d3.cloud.add(p);
          sum += p;
        }
      if (int(d3.cloud.size()) < cfg_.min_structure_points) continue;
      d3.centroid = sum / double(d3.cloud.size());
      dets.push_back(std::move(d3));
    }
    associate_structures(map_, std::move(dets), cfg_, &warnings_);
  }

  void fold_path(const Frame& frame) {
    for (int v = 0; v < frame.path_mask.height; ++v)
      for (int u = 0; u < frame.path_mask.width; ++u) {
        if (!frame.path_mask.at(u, v) || !frame.depth.valid_at(u, v)) continue;
        const Vec3 p = unproject(u, v, frame.depth.meters_at(u, v),
                                 frame.intrinsics, frame.pose);
        if (std::abs(p.z()) > cfg_.ground_band) continue;
        const VoxelKey key{std::int64_t(std::floor(p.x() / cfg_.voxel)),
                           std::int64_t(std::floor(p.y() / cfg_.voxel)),
                           std::int64_t(std::floor(p.z() / cfg_.voxel))};
        auto& acc = path_acc_[key];
        acc.sum += p;
        acc.n += 1;
      }
  }

  void materialize_path() {
    std::vector<std::pair<VoxelKey, Vec3>> cells;
    cells.reserve(path_acc_.size());
    for (const auto& [key, acc] : path_acc_)
      cells.emplace_back(key, acc.sum / double(acc.n));
    std::sort(cells.begin(), cells.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    map_.path_cloud.points.clear();
    map_.path_cloud.points.reserve(cells.size());
    for (const auto& [key, centroid] : cells) map_.path_cloud.add(centroid);
  }

  SignInstance* find_sign(int id) {
    for (auto& s : map_.signs)
      if (s.id == id) return &s;
    return nullptr;
  }

  struct VoxelKey {
    std::int64_t x, y, z;
    bool operator==(const VoxelKey& o) const {
      return x == o.x && y == o.y && z == o.z;
    }
    bool operator<(const VoxelKey& o) const {
      if (x != o.x) return x < o.x;
      if (y != o.y) return y < o.y;
      return z < o.z;
    }
  };
  struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const {
      std::uint64_t h = 1469598103934665603ull;
      for (std::int64_t v : {k.x, k.y, k.z}) {
        h ^= std::uint64_t(v);
        h *= 1099511628211ull;
      }
      return std::size_t(h);
    }
  };
  struct VoxelAcc {
    Vec3 sum{0.0, 0.0, 0.0};
    std::size_t n = 0;
  };

  BuilderConfig cfg_;
  SymbolDictionary dict_;
  VlmClient* vlm_;
  AtomMap map_;
  std::unordered_map<VoxelKey, VoxelAcc, VoxelKeyHash> path_acc_;
  bool path_dirty_ = false;
  std::vector<std::string> warnings_;
};

/// Fold an ordered frame stream into a finalized map. Deterministic given
/// the frames and a deterministic VLM backend.
inline AtomMap build_map(const std::vector<Frame>& frames,
                         const BuilderConfig& cfg, const SymbolDictionary& dict,
                         VlmClient& vlm,
                         std::vector<std::string>* warnings = nullptr) {
  MapBuilder builder(cfg, dict, &vlm);
  for (const auto& f : frames) builder.fold(f);
  AtomMap map = builder.finalize();
  if (warnings) *warnings = builder.warnings();
  return map;
}

}  // namespace atomnav
