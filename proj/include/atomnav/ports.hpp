#pragma once

// Perception ports: the recorded-sequence format feeding the pipeline from
// disk, plus VLM chat backends (replay store, HTTP endpoint). Detections,
// masks, and depth are precomputed inputs; no in-process model inference.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "atomnav/errors.hpp"
#include "atomnav/geometry.hpp"
#include "atomnav/png_io.hpp"
#include "atomnav/scene.hpp"
#include "atomnav/serde.hpp"

namespace atomnav {

constexpr int kSequenceVersion = 1;

// ---------------------------------------------------------------------------
// Per-frame data
// ---------------------------------------------------------------------------

// Depth stored as 16-bit values scaled by `scale` meters; 0 = invalid.
struct DepthImage {
  int width = 0, height = 0;
  double scale = 0.001;
  std::vector<std::uint16_t> raw;

  std::uint16_t at(int u, int v) const {
    return raw[std::size_t(v) * width + u];
  }
  double meters_at(int u, int v) const { return at(u, v) * scale; }
  bool valid_at(int u, int v) const { return at(u, v) != 0; }
};

struct Mask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> on;  // 0 or 1

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), on(std::size_t(w) * h, 0) {}
  bool at(int u, int v) const { return on[std::size_t(v) * width + u] != 0; }
  void set(int u, int v, bool value) {
    on[std::size_t(v) * width + u] = value ? 1 : 0;
  }
  std::size_t count() const {
    std::size_t c = 0;
    for (auto b : on) c += b;
    return c;
  }
  bool operator==(const Mask& o) const {
    return width == o.width && height == o.height && on == o.on;
  }
};

// Row-major run-length encoding, first run counts zeros.
inline json mask_to_rle(const Mask& m) {
  json counts = json::array();
  std::size_t run = 0;
  std::uint8_t cur = 0;
  for (auto b : m.on) {
    if (b == cur) {
      ++run;
    } else {
      counts.push_back(run);
      cur = b;
      run = 1;
    }
  }
  counts.push_back(run);
  return json{{"w", m.width}, {"h", m.height}, {"counts", counts}};
}

inline Mask mask_from_rle(const json& j) {
  Mask m(j.at("w").get<int>(), j.at("h").get<int>());
  std::size_t pos = 0;
  std::uint8_t cur = 0;
  for (const auto& c : j.at("counts")) {
    const std::size_t run = c.get<std::size_t>();
    if (pos + run > m.on.size()) throw ParseError("rle overruns mask", pos);
    std::fill_n(m.on.begin() + long(pos), run, cur);
    pos += run;
    cur = cur ? 0 : 1;
  }
  if (pos != m.on.size()) throw ParseError("rle underruns mask", pos);
  return m;
}

struct Detection {
  std::string class_label;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // pixels, x0<x1, y0<y1
  double score = 0.0;

  bool operator==(const Detection& o) const {
    return class_label == o.class_label && x0 == o.x0 && y0 == o.y0 &&
           x1 == o.x1 && y1 == o.y1 && score == o.score;
  }
};

struct Frame {
  double timestamp = 0.0;
  Pose3 pose;  // camera-to-world, +Z forward, +X right, +Y down
  CameraIntrinsics intrinsics;
  std::optional<std::string> rgb_ref;
  DepthImage depth;
  std::vector<Detection> detections;
  Mask path_mask;
  std::vector<Mask> sign_masks;
  std::vector<std::string> sign_images;  // raw bytes, parallel to sign_masks
};

// ---------------------------------------------------------------------------
// Sequence writer
// ---------------------------------------------------------------------------

inline void write_sequence(const std::filesystem::path& dir,
                           const std::vector<Frame>& frames) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  json manifest;
  manifest["atomnav_sequence"] = kSequenceVersion;
  if (!frames.empty()) {
    const auto& K = frames.front().intrinsics;
    manifest["intrinsics"] = {{"fx", K.fx},       {"fy", K.fy},
                              {"cx", K.cx},       {"cy", K.cy},
                              {"width", K.width}, {"height", K.height}};
    manifest["depth_scale"] = frames.front().depth.scale;
  } else {
    manifest["intrinsics"] = json::object();
    manifest["depth_scale"] = 0.001;
  }
  json jframes = json::array();
  char name[32];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    std::snprintf(name, sizeof(name), "%06zu", i);
    const std::string stem = std::string("frames/") + name;
    json assets;
    assets["depth"] = stem + "_depth.png";
    write_file(dir / (stem + "_depth.png"),
               encode_png_gray16(f.depth.width, f.depth.height,
                                 f.depth.raw.data()));
    assets["path_mask"] = stem + "_path.png";
    std::vector<std::uint8_t> mask_px(f.path_mask.on.size());
    for (std::size_t k = 0; k < mask_px.size(); ++k)
      mask_px[k] = f.path_mask.on[k] ? 255 : 0;
    write_file(dir / (stem + "_path.png"),
               encode_png_gray8(f.path_mask.width, f.path_mask.height,
                                mask_px.data()));
    json sign_image_paths = json::array();
    for (std::size_t s = 0; s < f.sign_images.size(); ++s) {
      const std::string p = stem + "_sign" + std::to_string(s) + ".bin";
      write_file(dir / p, f.sign_images[s]);
      sign_image_paths.push_back(p);
    }
    assets["sign_images"] = sign_image_paths;
    json dets = json::array();
    for (const auto& d : f.detections)
      dets.push_back({{"class", d.class_label},
                      {"bbox", {d.x0, d.y0, d.x1, d.y1}},
                      {"score", d.score}});
    json sign_masks = json::array();
    for (const auto& m : f.sign_masks) sign_masks.push_back(mask_to_rle(m));
    json jf = {{"t", f.timestamp},
               {"pose", pose_to_json(f.pose)},
               {"assets", assets},
               {"detections", dets},
               {"sign_masks", sign_masks}};
    if (f.rgb_ref) jf["rgb"] = *f.rgb_ref;
    jframes.push_back(jf);
  }
  manifest["frames"] = jframes;
  write_file(dir / "sequence.json", manifest.dump(2));
}

// ---------------------------------------------------------------------------
// Sequence reader (lazy, single consumer)
// ---------------------------------------------------------------------------

class SequenceReader {
 public:
  explicit SequenceReader(const std::filesystem::path& dir) : dir_(dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = dir / "sequence.json";
    if (!fs::exists(manifest_path))
      throw NotASequence("no sequence.json in " + dir.string());
    try {
      manifest_ = json::parse(read_file(manifest_path));
    } catch (const json::parse_error& e) {
      throw NotASequence("unreadable sequence.json: " + std::string(e.what()));
    }
    if (!manifest_.contains("atomnav_sequence") ||
        manifest_["atomnav_sequence"].get<int>() != kSequenceVersion)
      throw NotASequence("unsupported sequence version in " + dir.string());
    if (manifest_.contains("intrinsics") &&
        manifest_["intrinsics"].contains("fx")) {
      const auto& k = manifest_["intrinsics"];
      intrinsics_.fx = k.at("fx").get<double>();
      intrinsics_.fy = k.at("fy").get<double>();
      intrinsics_.cx = k.at("cx").get<double>();
      intrinsics_.cy = k.at("cy").get<double>();
      intrinsics_.width = k.at("width").get<int>();
      intrinsics_.height = k.at("height").get<int>();
    }
    depth_scale_ = manifest_.value("depth_scale", 0.001);
  }

  std::size_t size() const { return manifest_.at("frames").size(); }
  const CameraIntrinsics& intrinsics() const { return intrinsics_; }

  std::optional<Frame> next() {
    const auto& jframes = manifest_.at("frames");
    if (index_ >= jframes.size()) return std::nullopt;
    const json& jf = jframes.at(index_);
    ++index_;
    Frame f = load_frame(jf);
    if (f.timestamp <= last_t_ && index_ > 1)
      throw OrderingError("timestamps not strictly increasing at t=" +
                          std::to_string(f.timestamp));
    last_t_ = f.timestamp;
    return f;
  }

  std::vector<Frame> read_all() {
    std::vector<Frame> out;
    while (auto f = next()) out.push_back(std::move(*f));
    return out;
  }

 private:
  Frame load_frame(const json& jf) const {
    Frame f;
    f.timestamp = jf.at("t").get<double>();
    f.pose = pose_from_json(jf.at("pose"));
    f.intrinsics = intrinsics_;
    if (jf.contains("rgb")) f.rgb_ref = jf["rgb"].get<std::string>();
    const auto& assets = jf.at("assets");

    f.depth = load_depth(assets.at("depth").get<std::string>(), f.timestamp);
    f.path_mask =
        load_mask_png(assets.at("path_mask").get<std::string>(), f.timestamp);
    if (assets.contains("sign_images"))
      for (const auto& p : assets["sign_images"])
        f.sign_images.push_back(load_asset(p.get<std::string>(), f.timestamp));

    for (const auto& d : jf.at("detections")) {
      Detection det;
      det.class_label = d.at("class").get<std::string>();
      const auto& bb = d.at("bbox");
      det.x0 = bb.at(0).get<double>();
      det.y0 = bb.at(1).get<double>();
      det.x1 = bb.at(2).get<double>();
      det.y1 = bb.at(3).get<double>();
      det.score = d.at("score").get<double>();
      if (!(det.x0 < det.x1 && det.y0 < det.y1) || det.score < 0.0 ||
          det.score > 1.0)
        throw FrameError("detections", f.timestamp);
      f.detections.push_back(std::move(det));
    }
    for (const auto& m : jf.at("sign_masks"))
      f.sign_masks.push_back(mask_from_rle(m));

    // shared-shape invariant
    const int w = intrinsics_.width, h = intrinsics_.height;
    if (f.depth.width != w || f.depth.height != h)
      throw FrameError("depth", f.timestamp);
    if (f.path_mask.width != w || f.path_mask.height != h)
      throw FrameError("path_mask", f.timestamp);
    for (const auto& m : f.sign_masks)
      if (m.width != w || m.height != h)
        throw FrameError("sign_masks", f.timestamp);
    if (f.sign_images.size() != f.sign_masks.size())
      throw FrameError("sign_images", f.timestamp);
    return f;
  }

  std::string load_asset(const std::string& rel, double t) const {
    const auto path = dir_ / rel;
    if (!std::filesystem::exists(path)) throw FrameError(rel, t);
    return read_file(path);
  }

  DepthImage load_depth(const std::string& rel, double t) const {
    const std::string bytes = load_asset(rel, t);
    PngImage img;
    try {
      img = decode_png(bytes);
    } catch (const Error&) {
      throw FrameError(rel, t);
    }
    if (img.bit_depth != 16 || img.channels != 1) throw FrameError(rel, t);
    DepthImage d;
    d.width = img.width;
    d.height = img.height;
    d.scale = depth_scale_;
    d.raw = std::move(img.data16);
    return d;
  }

  Mask load_mask_png(const std::string& rel, double t) const {
    const std::string bytes = load_asset(rel, t);
    PngImage img;
    try {
      img = decode_png(bytes);
    } catch (const Error&) {
      throw FrameError(rel, t);
    }
    if (img.bit_depth != 8 || img.channels != 1) throw FrameError(rel, t);
    Mask m(img.width, img.height);
    for (std::size_t i = 0; i < m.on.size(); ++i)
      m.on[i] = img.data8[i] >= 128 ? 1 : 0;
    return m;
  }

  std::filesystem::path dir_;
  json manifest_;
  CameraIntrinsics intrinsics_;
  double depth_scale_ = 0.001;
  std::size_t index_ = 0;
  double last_t_ = -1e300;
};

inline std::vector<Frame> read_sequence(const std::filesystem::path& dir) {
  return SequenceReader(dir).read_all();
}

// ---------------------------------------------------------------------------
// VLM chat port
// ---------------------------------------------------------------------------

struct VlmPart {
  enum Kind { kText, kImage } kind = kText;
  std::string data;

  bool operator==(const VlmPart& o) const {
    return kind == o.kind && data == o.data;
  }
};

struct VlmRequest {
  std::vector<VlmPart> parts;

  void add_text(std::string text) {
    parts.push_back({VlmPart::kText, std::move(text)});
  }
  void add_image(std::string bytes) {
    parts.push_back({VlmPart::kImage, std::move(bytes)});
  }

  bool operator==(const VlmRequest& o) const { return parts == o.parts; }
};

struct VlmResponse {
  std::string text;
};

class VlmClient {
 public:
  virtual ~VlmClient() = default;
  virtual VlmResponse chat(const VlmRequest& request) = 0;
};

/// FNV-1a over kind tags, length prefixes, and part bytes; keys the replay
/// store.
inline std::uint64_t request_fingerprint(const VlmRequest& request) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& part : request.parts) {
    const std::uint8_t kind = std::uint8_t(part.kind);
    mix(&kind, 1);
    const std::uint64_t len = part.data.size();
    mix(&len, 8);
    mix(part.data.data(), part.data.size());
  }
  return h;
}

inline std::string fingerprint_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

class ReplayStore {
 public:
  void add(const VlmRequest& request, const std::string& response) {
    responses_[fingerprint_hex(request_fingerprint(request))] = response;
  }

  std::optional<std::string> lookup(const VlmRequest& request) const {
    const auto it =
        responses_.find(fingerprint_hex(request_fingerprint(request)));
    if (it == responses_.end()) return std::nullopt;
    return it->second;
  }

  void save(const std::filesystem::path& dir) const {
    json j;
    j["atomnav_replay"] = 1;
    j["responses"] = responses_;
    write_file(dir / "replay.json", j.dump(2));
  }

  static ReplayStore load(const std::filesystem::path& dir) {
    ReplayStore store;
    const auto path = dir / "replay.json";
    if (!std::filesystem::exists(path))
      throw Error("no replay.json in " + dir.string());
    const json j = json::parse(read_file(path));
    for (const auto& [k, v] : j.at("responses").items())
      store.responses_[k] = v.get<std::string>();
    return store;
  }

  std::size_t size() const { return responses_.size(); }

 private:
  std::map<std::string, std::string> responses_;
};

class ReplayVlm : public VlmClient {
 public:
  explicit ReplayVlm(ReplayStore store) : store_(std::move(store)) {}

  VlmResponse chat(const VlmRequest& request) override {
    const auto r = store_.lookup(request);
    if (!r)
      throw ReplayMiss("request " +
                       fingerprint_hex(request_fingerprint(request)) +
                       " not in replay store");
    return {*r};
  }

 private:
  ReplayStore store_;
};

/// Records every exchange of an inner client into a store, for building
/// replay fixtures.
class RecordingVlm : public VlmClient {
 public:
  RecordingVlm(std::unique_ptr<VlmClient> inner, ReplayStore* store)
      : inner_(std::move(inner)), store_(store) {}

  VlmResponse chat(const VlmRequest& request) override {
    VlmResponse r = inner_->chat(request);
    store_->add(request, r.text);
    return r;
  }

 private:
  std::unique_ptr<VlmClient> inner_;
  ReplayStore* store_;
};

}  // namespace atomnav
