#pragma once

// Rigid-body math, pinhole camera model, point-cloud container, and
// oriented-box fitting. World frame is Z-up; camera convention is
// +Z forward, +X right, +Y down.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "atomnav/errors.hpp"
#include "atomnav/serde.hpp"

namespace atomnav {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// ---------------------------------------------------------------------------
// Pose3
// ---------------------------------------------------------------------------

struct Pose3 {
  Vec3 t{0.0, 0.0, 0.0};
  Eigen::Quaterniond q{1.0, 0.0, 0.0, 0.0};  // (w,x,y,z)

  static Pose3 identity() { return Pose3{}; }

  Vec3 apply(const Vec3& p) const { return q * p + t; }

  Pose3 inverse() const {
    Pose3 inv;
    inv.q = q.conjugate();
    inv.t = -(inv.q * t);
    return inv;
  }

  bool normalized(double tol = 1e-9) const {
    return std::abs(q.norm() - 1.0) <= tol;
  }
};

inline Pose3 compose(const Pose3& a, const Pose3& b) {
  Pose3 c;
  c.t = a.q * b.t + a.t;
  c.q = a.q * b.q;
  c.q.normalize();
  return c;
}

inline bool approx_equal(const Pose3& a, const Pose3& b, double tol = 1e-9) {
  // q and -q are the same rotation
  const double qd = std::min((a.q.coeffs() - b.q.coeffs()).norm(),
                             (a.q.coeffs() + b.q.coeffs()).norm());
  return (a.t - b.t).norm() <= tol && qd <= tol;
}

inline Pose3 yaw_pose(double x, double y, double z, double yaw) {
  Pose3 p;
  p.t = Vec3(x, y, z);
  p.q = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
  return p;
}

// ---------------------------------------------------------------------------
// CameraIntrinsics
// ---------------------------------------------------------------------------

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && cx >= 0.0 && cx < width && cy >= 0.0 &&
           cy < height && width > 0 && height > 0;
  }
};

/// Lift pixel (u,v) at metric depth into the world frame. `pose` maps
/// camera coordinates to world coordinates.
inline Vec3 unproject(double u, double v, double depth_m,
                      const CameraIntrinsics& K, const Pose3& pose) {
  if (!(depth_m > 0.0))
    throw NoDepth("non-positive depth at pixel (" + std::to_string(u) + "," +
                  std::to_string(v) + ")");
  const Vec3 cam((u - K.cx) / K.fx * depth_m, (v - K.cy) / K.fy * depth_m,
                 depth_m);
  return pose.apply(cam);
}

struct PixelDepth {
  double u = 0.0, v = 0.0;
  double depth = 0.0;
};

/// Inverse of unproject. Empty when the point is behind the camera plane.
inline std::optional<PixelDepth> project(const Vec3& world,
                                         const CameraIntrinsics& K,
                                         const Pose3& pose) {
  const Vec3 cam = pose.inverse().apply(world);
  if (cam.z() <= 1e-9) return std::nullopt;
  PixelDepth pd;
  pd.u = K.fx * cam.x() / cam.z() + K.cx;
  pd.v = K.fy * cam.y() / cam.z() + K.cy;
  pd.depth = cam.z();
  return pd;
}

// ---------------------------------------------------------------------------
// PointCloud3
// ---------------------------------------------------------------------------

// Points are stored single-precision: the on-disk blob format is float32 and
// keeping storage identical to the wire format makes round-trips exact.
struct PointCloud3 {
  std::vector<Eigen::Vector3f> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void add(const Vec3& p) { points.emplace_back(p.cast<float>()); }
  void add(const Eigen::Vector3f& p) { points.push_back(p); }

  bool operator==(const PointCloud3& o) const {
    if (points.size() != o.points.size()) return false;
    for (std::size_t i = 0; i < points.size(); ++i)
      if (points[i] != o.points[i]) return false;
    return true;
  }
};

// Binary blob: u64-le count, then count * 3 float32-le (x,y,z meters).
inline std::string cloud_to_blob(const PointCloud3& cloud) {
  std::string out;
  out.reserve(8 + cloud.size() * 12);
  put_u64_le(out, cloud.size());
  for (const auto& p : cloud.points) {
    put_f32_le(out, p.x());
    put_f32_le(out, p.y());
    put_f32_le(out, p.z());
  }
  return out;
}

inline PointCloud3 cloud_from_blob(std::string_view blob) {
  if (blob.size() < 8) throw ParseError("point cloud blob truncated", blob.size());
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  const std::uint64_t n = get_u64_le(p);
  if (blob.size() != 8 + n * 12)
    throw ParseError("point cloud blob size mismatch", blob.size());
  PointCloud3 cloud;
  cloud.points.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const unsigned char* q = p + 8 + i * 12;
    cloud.points.emplace_back(get_f32_le(q), get_f32_le(q + 4),
                              get_f32_le(q + 8));
  }
  return cloud;
}

/// Downsample keeping the centroid of each voxel. Output is ordered by voxel
/// index, so the result is a canonical representation of the occupied space.
inline PointCloud3 voxel_downsample(const PointCloud3& cloud, double voxel) {
  struct Acc {
    Eigen::Vector3d sum{0.0, 0.0, 0.0};
    std::size_t n = 0;
  };
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, Acc> cells;
  for (const auto& p : cloud.points) {
    const auto key = std::make_tuple(
        std::int64_t(std::floor(double(p.x()) / voxel)),
        std::int64_t(std::floor(double(p.y()) / voxel)),
        std::int64_t(std::floor(double(p.z()) / voxel)));
    auto& acc = cells[key];
    acc.sum += p.cast<double>();
    acc.n += 1;
  }
  PointCloud3 out;
  out.points.reserve(cells.size());
  for (const auto& [key, acc] : cells)
    out.points.emplace_back((acc.sum / double(acc.n)).cast<float>());
  return out;
}

// ---------------------------------------------------------------------------
// OrientedBox3
// ---------------------------------------------------------------------------

// Z-aligned oriented box: yaw rotates the footprint about +Z.
struct OrientedBox3 {
  Vec3 center{0.0, 0.0, 0.0};
  Vec3 half_extents{0.0, 0.0, 0.0};
  double yaw = 0.0;

  bool contains(const Vec3& p, double tol = 1e-9) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const Vec3 d = p - center;
    const double lx = c * d.x() + s * d.y();
    const double ly = -s * d.x() + c * d.y();
    return std::abs(lx) <= half_extents.x() + tol &&
           std::abs(ly) <= half_extents.y() + tol &&
           std::abs(d.z()) <= half_extents.z() + tol;
  }

  double footprint_area() const {
    return 4.0 * half_extents.x() * half_extents.y();
  }
};

// ---------------------------------------------------------------------------
// 2D hull and minimum-area rectangle
// ---------------------------------------------------------------------------

inline double cross2(const Vec2& a, const Vec2& b) {
  return a.x() * b.y() - a.y() * b.x();
}

/// Andrew's monotone chain; returns the hull CCW without collinear points.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Vec2& a, const Vec2& b) { return a == b; }),
            pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  std::vector<Vec2> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 &&
           cross2(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0)
      --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = n - 1, lo = k + 1; i-- > 0;) {
    while (k >= lo &&
           cross2(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0)
      --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

struct Rect2 {
  Vec2 center{0.0, 0.0};
  Vec2 half{0.0, 0.0};
  double yaw = 0.0;
};

/// Fold yaw into [0, pi/2), swapping extents when crossing a quarter turn.
inline Rect2 canonicalize_rect(Rect2 r) {
  const double quarter = kPi / 2.0;
  double k = std::floor(r.yaw / quarter);
  r.yaw -= k * quarter;
  if (r.yaw >= quarter) {  // guard fp edge
    r.yaw -= quarter;
    k += 1;
  }
  if (std::llround(k) % 2 != 0) std::swap(r.half.x(), r.half.y());
  return r;
}

/// Minimum-area enclosing rectangle of a convex hull. The optimal rectangle
/// has a side collinear with a hull edge, so all edge directions are scanned.
/// Area ties break toward the smaller canonical yaw.
inline Rect2 min_area_rect(const std::vector<Vec2>& hull) {
  if (hull.size() == 1)
    return Rect2{hull[0], Vec2(0.0, 0.0), 0.0};
  Rect2 best;
  double best_area = std::numeric_limits<double>::infinity();
  double best_yaw = std::numeric_limits<double>::infinity();
  const std::size_t n = hull.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e = hull[(i + 1) % n] - hull[i];
    const double len = e.norm();
    if (len < 1e-12) continue;
    const Vec2 ux = e / len;
    const Vec2 uy(-ux.y(), ux.x());
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : hull) {
      const double px = ux.dot(p), py = uy.dot(p);
      xmin = std::min(xmin, px);
      xmax = std::max(xmax, px);
      ymin = std::min(ymin, py);
      ymax = std::max(ymax, py);
    }
    const double area = (xmax - xmin) * (ymax - ymin);
    Rect2 cand;
    cand.half = Vec2((xmax - xmin) / 2.0, (ymax - ymin) / 2.0);
    const double mx = (xmin + xmax) / 2.0, my = (ymin + ymax) / 2.0;
    cand.center = ux * mx + uy * my;
    cand.yaw = std::atan2(ux.y(), ux.x());
    cand = canonicalize_rect(cand);
    const double eps = 1e-9 * std::max(1.0, best_area);
    if (area < best_area - eps ||
        (area <= best_area + eps && cand.yaw < best_yaw - 1e-12)) {
      best_area = area;
      best_yaw = cand.yaw;
      best = cand;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Oriented-box fitting
// ---------------------------------------------------------------------------

namespace detail {

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double rank = q * double(v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double f = rank - double(lo);
  return v[lo] * (1.0 - f) + v[hi] * f;
}

}  // namespace detail

/// Fit a Z-aligned oriented box: robust per-axis trim, XY convex hull,
/// rotating-calipers minimum-area rectangle. The trim window is the 1st-99th
/// percentile range widened by the offset those percentiles sit inside a
/// clean distribution, so outliers are dropped without shaving real extent.
inline OrientedBox3 fit_oriented_box(const PointCloud3& cloud) {
  const std::size_t n = cloud.size();
  if (n < 4) throw DegenerateCloud("need at least 4 points");

  std::vector<Vec3> pts;
  pts.reserve(n);
  for (const auto& p : cloud.points) pts.push_back(p.cast<double>());

  // collinearity check: max distance from the principal axis
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= double(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Vec3 axis = es.eigenvectors().col(2);
  double max_line_dist = 0.0;
  for (const auto& p : pts) {
    const Vec3 d = p - mean;
    max_line_dist = std::max(max_line_dist, (d - axis * axis.dot(d)).norm());
  }
  if (max_line_dist < 1e-3)
    throw DegenerateCloud("all points within 1 mm of a line");

  // robust trim window per axis
  Vec3 lo, hi;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = pts[i][a];
    const double p1 = detail::percentile(vals, 0.01);
    const double p99 = detail::percentile(vals, 0.99);
    const double margin = (p99 - p1) / 98.0;
    lo[a] = p1 - margin;
    hi[a] = p99 + margin;
  }
  std::vector<Vec3> kept;
  kept.reserve(n);
  for (const auto& p : pts) {
    bool in = true;
    for (int a = 0; a < 3; ++a) in = in && p[a] >= lo[a] && p[a] <= hi[a];
    if (in) kept.push_back(p);
  }
  if (kept.size() < 4) kept = pts;

  std::vector<Vec2> xy;
  xy.reserve(kept.size());
  double zmin = 1e300, zmax = -1e300;
  for (const auto& p : kept) {
    xy.emplace_back(p.x(), p.y());
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  const auto hull = convex_hull(xy);
  if (hull.size() < 3) throw DegenerateCloud("XY projection is degenerate");
  const Rect2 rect = min_area_rect(hull);

  OrientedBox3 box;
  box.center = Vec3(rect.center.x(), rect.center.y(), (zmin + zmax) / 2.0);
  box.half_extents =
      Vec3(std::max(rect.half.x(), 1e-6), std::max(rect.half.y(), 1e-6),
           std::max((zmax - zmin) / 2.0, 1e-6));
  box.yaw = rect.yaw;
  return box;
}

// ---------------------------------------------------------------------------
// JSON helpers for poses live with the scene model; the blob format above is
// the only wire format owned by this header.
// ---------------------------------------------------------------------------

}  // namespace atomnav
