#pragma once

// Project the 3D map into the sign-centric 2D abstraction: occupancy-grid
// rasterization of the path cloud, outer-border tracing, Douglas-Peucker
// simplification, convex-protrusion frontier sampling, labeled boxes, and a
// deterministic raster with a machine-readable sidecar embedded as a PNG
// tEXt chunk.

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include <json.hpp>

#include "atomnav/errors.hpp"
#include "atomnav/geometry.hpp"
#include "atomnav/png_io.hpp"
#include "atomnav/raster.hpp"
#include "atomnav/scene.hpp"

namespace atomnav {

constexpr int kRenderVersion = 1;
constexpr const char* kSidecarTextKey = "atomnav_sidecar";

struct RenderConfig {
  double cell = 0.10;              // meters per grid cell
  double simplify_eps = 0.30;      // Douglas-Peucker tolerance, meters
  double reflex_eps = 0.087;       // ~5 deg convexity dead-band, radians
  double min_protrusion_len = 0.6; // meters of boundary arc
  double radius = 12.0;            // map half-extent, meters
  int image_px = 1024;
  double structure_min_confidence = 0.0;
  bool align_to_sign = true;       // false = ablation: keep world axes
  int min_path_points = 100;
};

inline void merge_render_config_json(RenderConfig& cfg, const json& j) {
  cfg.cell = j.value("cell", cfg.cell);
  cfg.simplify_eps = j.value("simplify_eps", cfg.simplify_eps);
  cfg.reflex_eps = j.value("reflex_eps", cfg.reflex_eps);
  cfg.min_protrusion_len = j.value("min_protrusion_len", cfg.min_protrusion_len);
  cfg.radius = j.value("radius", cfg.radius);
  cfg.image_px = j.value("image_px", cfg.image_px);
  cfg.structure_min_confidence =
      j.value("structure_min_confidence", cfg.structure_min_confidence);
  cfg.align_to_sign = j.value("align_to_sign", cfg.align_to_sign);
}

// ---------------------------------------------------------------------------
// Sign-centric frame
// ---------------------------------------------------------------------------

// 2D rigid frame with origin at the sign and +Y along the reader's head-on
// viewing direction (looking through the sign).
struct SignFrame2 {
  Vec2 origin{0.0, 0.0};
  Vec2 y_axis{0.0, 1.0};  // unit, world coordinates
  Vec2 x_axis{1.0, 0.0};  // right-handed complement

  Vec2 to_frame(const Vec2& world) const {
    const Vec2 d = world - origin;
    return Vec2(x_axis.dot(d), y_axis.dot(d));
  }
  Vec2 to_world(const Vec2& frame) const {
    return origin + x_axis * frame.x() + y_axis * frame.y();
  }
  double x_axis_angle() const { return std::atan2(x_axis.y(), x_axis.x()); }
};

inline SignFrame2 sign_frame(const SignInstance& sign) {
  if (std::abs(sign.normal.z()) >= 0.95)
    throw AmbiguousFrame("sign normal is near vertical, no head-on frame");
  const Vec2 n_xy(sign.normal.x(), sign.normal.y());
  SignFrame2 f;
  f.origin = Vec2(sign.centroid.x(), sign.centroid.y());
  f.y_axis = (-n_xy).normalized();
  f.x_axis = Vec2(f.y_axis.y(), -f.y_axis.x());
  return f;
}

// ---------------------------------------------------------------------------
// Polygon extraction
// ---------------------------------------------------------------------------

namespace renderdetail {

struct Grid {
  int n = 0;
  std::vector<std::uint8_t> on;
  bool at(int x, int y) const {
    if (x < 0 || y < 0 || x >= n || y >= n) return false;
    return on[std::size_t(y) * n + x] != 0;
  }
  void set(int x, int y, bool v) { on[std::size_t(y) * n + x] = v ? 1 : 0; }
};

inline Grid close_1cell(const Grid& g) {
  Grid dil{g.n, std::vector<std::uint8_t>(g.on.size(), 0)};
  for (int y = 0; y < g.n; ++y)
    for (int x = 0; x < g.n; ++x) {
      bool v = false;
      for (int dy = -1; dy <= 1 && !v; ++dy)
        for (int dx = -1; dx <= 1 && !v; ++dx) v = g.at(x + dx, y + dy);
      dil.set(x, y, v);
    }
  Grid out{g.n, std::vector<std::uint8_t>(g.on.size(), 0)};
  for (int y = 0; y < g.n; ++y)
    for (int x = 0; x < g.n; ++x) {
      bool v = true;
      for (int dy = -1; dy <= 1 && v; ++dy)
        for (int dx = -1; dx <= 1 && v; ++dx) v = dil.at(x + dx, y + dy);
      out.set(x, y, v);
    }
  return out;
}

// Moore-neighbor outer border trace with Jacob's stopping criterion.
// Returns boundary cells in visit order (cells may repeat at pinch points).
inline std::vector<std::pair<int, int>> moore_trace(const Grid& g,
                                                    int start_x, int start_y) {
  // clockwise in array space (y grows downward in the direction table)
  static const int dx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
  static const int dy[8] = {0, -1, -1, -1, 0, 1, 1, 1};
  auto dir_index = [](int ddx, int ddy) {
    for (int k = 0; k < 8; ++k)
      if (dx[k] == ddx && dy[k] == ddy) return k;
    return -1;
  };
  std::vector<std::pair<int, int>> boundary;
  int px = start_x, py = start_y;
  int back = 0;  // start was found scanning left-to-right: west is background
  const int start_back = back;
  boundary.emplace_back(px, py);
  const std::size_t max_steps = g.on.size() * 4 + 16;
  for (std::size_t step = 0; step < max_steps; ++step) {
    int found = -1;
    for (int k = 1; k <= 8; ++k) {
      const int idx = (back + k) % 8;
      if (g.at(px + dx[idx], py + dy[idx])) {
        found = idx;
        break;
      }
    }
    if (found < 0) break;  // isolated cell
    const int prev_idx = (found + 7) % 8;
    const int bg_x = px + dx[prev_idx], bg_y = py + dy[prev_idx];
    px += dx[found];
    py += dy[found];
    back = dir_index(bg_x - px, bg_y - py);
    if (px == start_x && py == start_y && back == start_back) break;
    boundary.emplace_back(px, py);
  }
  return boundary;
}

inline double point_segment_dist(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 < 1e-18) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

inline void douglas_peucker(const std::vector<Vec2>& pts, std::size_t lo,
                            std::size_t hi, double eps,
                            std::vector<char>& keep) {
  if (hi <= lo + 1) return;
  double max_d = -1.0;
  std::size_t max_i = lo;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    const double d = point_segment_dist(pts[i], pts[lo], pts[hi]);
    if (d > max_d) {
      max_d = d;
      max_i = i;
    }
  }
  if (max_d > eps) {
    keep[max_i] = 1;
    douglas_peucker(pts, lo, max_i, eps, keep);
    douglas_peucker(pts, max_i, hi, eps, keep);
  }
}

/// Closed-loop simplification: anchor at vertex 0 and the vertex farthest
/// from it, simplify both halves.
inline std::vector<Vec2> simplify_loop(const std::vector<Vec2>& loop,
                                       double eps) {
  const std::size_t n = loop.size();
  if (n < 4) return loop;
  std::size_t far_i = 1;
  double far_d = -1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double d = (loop[i] - loop[0]).squaredNorm();
    if (d > far_d) {
      far_d = d;
      far_i = i;
    }
  }
  std::vector<Vec2> closed = loop;
  closed.push_back(loop[0]);
  std::vector<char> keep(closed.size(), 0);
  keep[0] = keep[far_i] = keep[closed.size() - 1] = 1;
  douglas_peucker(closed, 0, far_i, eps, keep);
  douglas_peucker(closed, far_i, closed.size() - 1, eps, keep);
  std::vector<Vec2> out;
  for (std::size_t i = 0; i + 1 < closed.size(); ++i)
    if (keep[i]) out.push_back(closed[i]);
  return out;
}

inline double signed_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += cross2(p, q);
  }
  return a / 2.0;
}

}  // namespace renderdetail

/// Rasterize path points into an occupancy grid at cfg.cell, close one
/// cell, keep the component nearest the sign (largest if none nearby),
/// trace the outer border, simplify, output CCW starting at the
/// lexicographically smallest vertex.
inline std::vector<Vec2> extract_polygon(const PointCloud3& path_cloud,
                                         const SignFrame2& frame,
                                         const RenderConfig& cfg) {
  using renderdetail::Grid;
  const int n = std::max(2, int(std::llround(2.0 * cfg.radius / cfg.cell)));
  Grid grid{n, std::vector<std::uint8_t>(std::size_t(n) * n, 0)};
  std::size_t in_radius = 0;
  for (const auto& p : path_cloud.points) {
    const Vec2 f = frame.to_frame(Vec2(p.x(), p.y()));
    if (std::abs(f.x()) > cfg.radius || std::abs(f.y()) > cfg.radius) continue;
    ++in_radius;
    const int gx = std::clamp(int(std::floor((f.x() + cfg.radius) / cfg.cell)), 0, n - 1);
    const int gy = std::clamp(int(std::floor((f.y() + cfg.radius) / cfg.cell)), 0, n - 1);
    grid.set(gx, gy, true);
  }
  if (in_radius < std::size_t(cfg.min_path_points))
    throw EmptyScene("only " + std::to_string(in_radius) +
                     " path points within radius");

  grid = renderdetail::close_1cell(grid);

  // connected components (8-connectivity)
  std::vector<int> label(grid.on.size(), -1);
  struct Comp {
    int id;
    std::size_t area = 0;
    double min_center_d2 = 1e300;
    int seed_x = 0, seed_y = 0;
  };
  std::vector<Comp> comps;
  const double cx = n / 2.0, cy = n / 2.0;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (!grid.at(x, y) || label[std::size_t(y) * n + x] >= 0) continue;
      Comp comp{int(comps.size())};
      comp.seed_x = x;
      comp.seed_y = y;
      queue.emplace_back(x, y);
      label[std::size_t(y) * n + x] = comp.id;
      while (!queue.empty()) {
        const auto [qx, qy] = queue.front();
        queue.pop_front();
        comp.area += 1;
        const double dx = qx + 0.5 - cx, dy = qy + 0.5 - cy;
        comp.min_center_d2 = std::min(comp.min_center_d2, dx * dx + dy * dy);
        for (int oy = -1; oy <= 1; ++oy)
          for (int ox = -1; ox <= 1; ++ox) {
            const int nx = qx + ox, ny = qy + oy;
            if (!grid.at(nx, ny) || label[std::size_t(ny) * n + nx] >= 0)
              continue;
            label[std::size_t(ny) * n + nx] = comp.id;
            queue.emplace_back(nx, ny);
          }
      }
      comps.push_back(comp);
    }
  if (comps.empty()) throw EmptyScene("empty occupancy grid");

  const double adjacency_cells = 1.0 / cfg.cell;  // within 1 m of the sign
  int chosen = -1;
  double chosen_d2 = 1e300;
  for (const auto& c : comps)
    if (c.min_center_d2 < chosen_d2) {
      chosen_d2 = c.min_center_d2;
      chosen = c.id;
    }
  if (chosen_d2 > adjacency_cells * adjacency_cells) {
    std::size_t best_area = 0;
    for (const auto& c : comps)
      if (c.area > best_area) {
        best_area = c.area;
        chosen = c.id;
      }
  }

  // isolate the chosen component and find its scan-order start cell
  Grid comp_grid{n, std::vector<std::uint8_t>(grid.on.size(), 0)};
  int start_x = -1, start_y = -1;
  for (int y = 0; y < n && start_y < 0; ++y)
    for (int x = 0; x < n; ++x)
      if (label[std::size_t(y) * n + x] == chosen) {
        start_x = x;
        start_y = y;
        break;
      }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      comp_grid.set(x, y, label[std::size_t(y) * n + x] == chosen);

  const auto cells = renderdetail::moore_trace(comp_grid, start_x, start_y);
  std::vector<Vec2> loop;
  loop.reserve(cells.size());
  for (const auto& [gx, gy] : cells)
    loop.emplace_back((gx + 0.5) * cfg.cell - cfg.radius,
                      (gy + 0.5) * cfg.cell - cfg.radius);
  // drop consecutive duplicates (pinch revisits)
  std::vector<Vec2> dedup;
  for (const auto& p : loop)
    if (dedup.empty() || (dedup.back() - p).squaredNorm() > 1e-18)
      dedup.push_back(p);
  while (dedup.size() > 1 &&
         (dedup.front() - dedup.back()).squaredNorm() < 1e-18)
    dedup.pop_back();
  if (dedup.size() < 3) throw EmptyScene("degenerate traced boundary");

  std::vector<Vec2> poly = renderdetail::simplify_loop(dedup, cfg.simplify_eps);
  if (poly.size() < 3) throw EmptyScene("polygon collapsed by simplification");
  if (renderdetail::signed_area(poly) < 0.0)
    std::reverse(poly.begin(), poly.end());

  // canonical start: lexicographically smallest (y, then x)
  std::size_t min_i = 0;
  for (std::size_t i = 1; i < poly.size(); ++i)
    if (poly[i].y() < poly[min_i].y() ||
        (poly[i].y() == poly[min_i].y() && poly[i].x() < poly[min_i].x()))
      min_i = i;
  std::rotate(poly.begin(), poly.begin() + long(min_i), poly.end());
  return poly;
}

// ---------------------------------------------------------------------------
// Frontier sampling on convex protrusions
// ---------------------------------------------------------------------------

enum class VertexKind { kConvex, kReflex, kNeutral };

/// Classify each vertex by the turn angle between its incident edges, with
/// the dead-band treating near-collinear vertices as neutral.
inline std::vector<VertexKind> classify_vertices(const std::vector<Vec2>& poly,
                                                 double reflex_eps) {
  const std::size_t n = poly.size();
  std::vector<VertexKind> kinds(n, VertexKind::kNeutral);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i] - poly[(i + n - 1) % n];
    const Vec2 b = poly[(i + 1) % n] - poly[i];
    const double turn = std::atan2(cross2(a, b), a.dot(b));
    if (turn > reflex_eps)
      kinds[i] = VertexKind::kConvex;
    else if (turn < -reflex_eps)
      kinds[i] = VertexKind::kReflex;
  }
  return kinds;
}

struct Frontier {
  std::string letter;
  Vec2 point{0.0, 0.0};      // sign-frame meters, on the polygon boundary
  double arc_begin = 0.0;    // boundary-run interval, arc length from vertex 0
  double arc_end = 0.0;
};

namespace renderdetail {

inline Vec2 perimeter_point(const std::vector<Vec2>& poly,
                            const std::vector<double>& cum, double s) {
  const double total = cum.back();
  s = std::fmod(s, total);
  if (s < 0.0) s += total;
  const auto it = std::upper_bound(cum.begin(), cum.end(), s);
  const std::size_t i = std::size_t(std::max<long>(0, (it - cum.begin()) - 1));
  const Vec2& a = poly[i % poly.size()];
  const Vec2& b = poly[(i + 1) % poly.size()];
  const double seg = cum[i + 1] - cum[i];
  const double t = seg > 1e-18 ? (s - cum[i]) / seg : 0.0;
  return a + t * (b - a);
}

inline std::string letter_for(std::size_t i) {
  std::string s;
  if (i >= 26) s.push_back(char('A' + (i / 26) - 1));
  s.push_back(char('A' + i % 26));
  return s;
}

}  // namespace renderdetail

/// One frontier per maximal run of non-reflex vertices (containing at least
/// one convex vertex) bounded by reflex vertices; the sample point is the
/// run's arc-length midpoint. Runs shorter than min_protrusion_len are
/// dropped. Letters go by polar angle, clockwise from +Y, so reading order
/// matches a sign: leftmost-forward first.
inline std::vector<Frontier> find_frontiers(const std::vector<Vec2>& poly,
                                            const RenderConfig& cfg) {
  const std::size_t n = poly.size();
  if (n < 3) return {};
  const auto kinds = classify_vertices(poly, cfg.reflex_eps);

  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    cum[i + 1] = cum[i] + (poly[(i + 1) % n] - poly[i]).norm();
  const double total = cum.back();

  struct Run {
    double s0, s1;
  };
  std::vector<Run> runs;
  std::vector<std::size_t> reflex;
  for (std::size_t i = 0; i < n; ++i)
    if (kinds[i] == VertexKind::kReflex) reflex.push_back(i);

  if (reflex.empty()) {
    const bool any_convex =
        std::any_of(kinds.begin(), kinds.end(),
                    [](VertexKind k) { return k == VertexKind::kConvex; });
    if (any_convex) runs.push_back({0.0, total});
  } else {
    for (std::size_t j = 0; j < reflex.size(); ++j) {
      const std::size_t r0 = reflex[j];
      const std::size_t r1 = reflex[(j + 1) % reflex.size()];
      bool any_convex = false;
      for (std::size_t i = (r0 + 1) % n; i != r1; i = (i + 1) % n)
        if (kinds[i] == VertexKind::kConvex) any_convex = true;
      if (!any_convex) continue;
      const double s0 = cum[r0];
      double s1 = cum[r1];
      if (s1 <= s0) s1 += total;
      runs.push_back({s0, s1});
    }
  }

  std::vector<Frontier> frontiers;
  for (const auto& run : runs) {
    if (run.s1 - run.s0 < cfg.min_protrusion_len) continue;
    Frontier f;
    f.arc_begin = run.s0;
    f.arc_end = run.s1;
    f.point = renderdetail::perimeter_point(poly, cum, (run.s0 + run.s1) / 2.0);
    frontiers.push_back(f);
  }

  std::sort(frontiers.begin(), frontiers.end(),
            [](const Frontier& a, const Frontier& b) {
              const double pa = std::atan2(a.point.x(), a.point.y());
              const double pb = std::atan2(b.point.x(), b.point.y());
              if (pa != pb) return pa < pb;
              const double na = a.point.norm(), nb = b.point.norm();
              if (na != nb) return na < nb;
              return a.arc_begin < b.arc_begin;
            });
  for (std::size_t i = 0; i < frontiers.size(); ++i)
    frontiers[i].letter = renderdetail::letter_for(i);
  return frontiers;
}

// ---------------------------------------------------------------------------
// Full render
// ---------------------------------------------------------------------------

struct LabeledRect {
  std::string label;
  Rect2 rect;  // sign-frame coordinates, canonicalized
};

struct AtomRender {
  int center_sign_id = 0;
  SignFrame2 frame;
  std::vector<Vec2> polygon;
  std::vector<Frontier> frontiers;
  std::vector<LabeledRect> boxes;
  std::string image_png;
  json sidecar;
};

namespace renderdetail {

inline json sidecar_json(const AtomRender& r, const RenderConfig& cfg) {
  json j;
  j["render_version"] = kRenderVersion;
  j["sign_id"] = r.center_sign_id;
  j["cell"] = cfg.cell;
  j["radius"] = cfg.radius;
  j["image_px"] = cfg.image_px;
  j["frame"] = {{"origin", {r.frame.origin.x(), r.frame.origin.y()}},
                {"y_axis", {r.frame.y_axis.x(), r.frame.y_axis.y()}}};
  json poly = json::array();
  for (const auto& p : r.polygon) poly.push_back({p.x(), p.y()});
  j["polygon"] = poly;
  json fr = json::array();
  for (const auto& f : r.frontiers)
    fr.push_back({{"letter", f.letter},
                  {"point", {f.point.x(), f.point.y()}},
                  {"arc", {f.arc_begin, f.arc_end}}});
  j["frontiers"] = fr;
  json boxes = json::array();
  for (const auto& b : r.boxes)
    boxes.push_back({{"label", b.label},
                     {"center", {b.rect.center.x(), b.rect.center.y()}},
                     {"half_extents", {b.rect.half.x(), b.rect.half.y()}},
                     {"yaw", b.rect.yaw}});
  j["boxes"] = boxes;
  return j;
}

inline void draw(AtomRender& r, const RenderConfig& cfg) {
  const int px = cfg.image_px;
  ImageRgb8 img(px, px, {255, 255, 255});
  auto to_px = [&](const Vec2& p) {
    return Vec2((p.x() + cfg.radius) / (2.0 * cfg.radius) * px,
                (cfg.radius - p.y()) / (2.0 * cfg.radius) * px);
  };
  const Rgb black{0, 0, 0};
  const Rgb gray{211, 211, 211};

  std::vector<Vec2> poly_px;
  poly_px.reserve(r.polygon.size());
  for (const auto& p : r.polygon) poly_px.push_back(to_px(p));
  fill_polygon(img, poly_px, gray);
  for (std::size_t i = 0; i < poly_px.size(); ++i) {
    const Vec2& a = poly_px[i];
    const Vec2& b = poly_px[(i + 1) % poly_px.size()];
    draw_line(img, int(std::lround(a.x())), int(std::lround(a.y())),
              int(std::lround(b.x())), int(std::lround(b.y())), black, 2);
  }

  for (const auto& box : r.boxes) {
    const double c = std::cos(box.rect.yaw), s = std::sin(box.rect.yaw);
    const Vec2 ex(c * box.rect.half.x(), s * box.rect.half.x());
    const Vec2 ey(-s * box.rect.half.y(), c * box.rect.half.y());
    const Vec2 corners[4] = {box.rect.center + ex + ey,
                             box.rect.center - ex + ey,
                             box.rect.center - ex - ey,
                             box.rect.center + ex - ey};
    for (int i = 0; i < 4; ++i) {
      const Vec2 a = to_px(corners[i]);
      const Vec2 b = to_px(corners[(i + 1) % 4]);
      draw_line(img, int(std::lround(a.x())), int(std::lround(a.y())),
                int(std::lround(b.x())), int(std::lround(b.y())), black, 2);
    }
    const Vec2 cpx = to_px(box.rect.center);
    const int scale = std::max(1, px / 512);
    const int tw = text_width(box.label, scale);
    draw_text(img, int(std::lround(cpx.x())) - tw / 2,
              int(std::lround(cpx.y())) - text_height(scale) / 2, box.label,
              black, scale);
  }

  const int circle_r = std::max(8, px / 64);
  for (const auto& f : r.frontiers) {
    const Vec2 cpx = to_px(f.point);
    const int x = int(std::lround(cpx.x())), y = int(std::lround(cpx.y()));
    fill_circle(img, x, y, circle_r, {255, 255, 255});
    draw_circle(img, x, y, circle_r, black);
    draw_circle(img, x, y, circle_r - 1, black);
    const int scale = std::max(1, px / 512);
    const int tw = text_width(f.letter, scale);
    draw_text(img, x - tw / 2, y - text_height(scale) / 2, f.letter, black,
              scale);
  }

  r.image_png = encode_png_rgb8(px, px, img.px.data(),
                                {{kSidecarTextKey, r.sidecar.dump()}});
}

}  // namespace renderdetail

inline AtomRender render(const AtomMap& map, int sign_id,
                         const RenderConfig& cfg) {
  const SignInstance* sign = nullptr;
  for (const auto& s : map.signs)
    if (s.id == sign_id) sign = &s;
  if (!sign) throw Error("no sign with id " + std::to_string(sign_id));

  AtomRender r;
  r.center_sign_id = sign_id;
  if (cfg.align_to_sign) {
    r.frame = sign_frame(*sign);
  } else {
    r.frame.origin = Vec2(sign->centroid.x(), sign->centroid.y());
    r.frame.y_axis = Vec2(0.0, 1.0);
    r.frame.x_axis = Vec2(1.0, 0.0);
  }
  r.polygon = extract_polygon(map.path_cloud, r.frame, cfg);
  r.frontiers = find_frontiers(r.polygon, cfg);

  for (const auto& st : map.structures) {
    if (st.confidence < cfg.structure_min_confidence) continue;
    const Vec2 center_f =
        r.frame.to_frame(Vec2(st.box.center.x(), st.box.center.y()));
    if (std::abs(center_f.x()) > cfg.radius ||
        std::abs(center_f.y()) > cfg.radius)
      continue;
    Rect2 rect;
    rect.center = center_f;
    rect.half = Vec2(st.box.half_extents.x(), st.box.half_extents.y());
    rect.yaw = st.box.yaw - r.frame.x_axis_angle();
    rect = canonicalize_rect(rect);
    r.boxes.push_back(
        {st.class_label + " #" + std::to_string(st.id), rect});
  }

  r.sidecar = renderdetail::sidecar_json(r, cfg);
  renderdetail::draw(r, cfg);
  return r;
}

}  // namespace atomnav
