#pragma once

// Minimal deterministic software rasterizer for the top-down renders:
// scanline polygon fill, Bresenham lines, midpoint circles, and a 5x7
// bitmap font. Everything is integer math, so output bytes are stable
// across platforms.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "atomnav/geometry.hpp"

namespace atomnav {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

struct ImageRgb8 {
  int width = 0, height = 0;
  std::vector<std::uint8_t> px;  // 3 * width * height

  ImageRgb8() = default;
  ImageRgb8(int w, int h, Rgb fill_color = {255, 255, 255})
      : width(w), height(h), px(std::size_t(w) * h * 3) {
    fill(fill_color);
  }

  void fill(Rgb c) {
    for (std::size_t i = 0; i + 2 < px.size(); i += 3) {
      px[i] = c.r;
      px[i + 1] = c.g;
      px[i + 2] = c.b;
    }
  }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t i = (std::size_t(y) * width + x) * 3;
    px[i] = c.r;
    px[i + 1] = c.g;
    px[i + 2] = c.b;
  }

  Rgb get(int x, int y) const {
    const std::size_t i = (std::size_t(y) * width + x) * 3;
    return {px[i], px[i + 1], px[i + 2]};
  }
};

inline void draw_line(ImageRgb8& img, int x0, int y0, int x1, int y1, Rgb c,
                      int thickness = 1) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  const int t0 = -(thickness - 1) / 2, t1 = thickness / 2;
  for (;;) {
    for (int ox = t0; ox <= t1; ++ox)
      for (int oy = t0; oy <= t1; ++oy) img.set(x0 + ox, y0 + oy, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

inline void draw_circle(ImageRgb8& img, int cx, int cy, int radius, Rgb c) {
  int x = radius, y = 0, err = 1 - radius;
  while (x >= y) {
    img.set(cx + x, cy + y, c);
    img.set(cx + y, cy + x, c);
    img.set(cx - y, cy + x, c);
    img.set(cx - x, cy + y, c);
    img.set(cx - x, cy - y, c);
    img.set(cx - y, cy - x, c);
    img.set(cx + y, cy - x, c);
    img.set(cx + x, cy - y, c);
    ++y;
    if (err < 0) {
      err += 2 * y + 1;
    } else {
      --x;
      err += 2 * (y - x) + 1;
    }
  }
}

inline void fill_circle(ImageRgb8& img, int cx, int cy, int radius, Rgb c) {
  for (int dy = -radius; dy <= radius; ++dy) {
    const int dx = int(std::floor(std::sqrt(double(radius) * radius - double(dy) * dy)));
    for (int x = cx - dx; x <= cx + dx; ++x) img.set(x, cy + dy, c);
  }
}

/// Even-odd scanline fill of a closed polygon given in pixel coordinates.
inline void fill_polygon(ImageRgb8& img, const std::vector<Vec2>& poly, Rgb c) {
  if (poly.size() < 3) return;
  double ymin = 1e300, ymax = -1e300;
  for (const auto& p : poly) {
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  const int y0 = std::max(0, int(std::floor(ymin)));
  const int y1 = std::min(img.height - 1, int(std::ceil(ymax)));
  std::vector<double> xs;
  for (int y = y0; y <= y1; ++y) {
    const double fy = y + 0.5;
    xs.clear();
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& a = poly[i];
      const Vec2& b = poly[(i + 1) % n];
      if ((a.y() <= fy && b.y() > fy) || (b.y() <= fy && a.y() > fy)) {
        const double t = (fy - a.y()) / (b.y() - a.y());
        xs.push_back(a.x() + t * (b.x() - a.x()));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      const int xa = std::max(0, int(std::ceil(xs[i] - 0.5)));
      const int xb = std::min(img.width - 1, int(std::floor(xs[i + 1] - 0.5)));
      for (int x = xa; x <= xb; ++x) img.set(x, y, c);
    }
  }
}

// ---------------------------------------------------------------------------
// 5x7 bitmap font (column bitmaps, LSB = top row)
// ---------------------------------------------------------------------------

namespace fontdata {

struct Glyph {
  char ch;
  std::array<std::uint8_t, 5> cols;
};

inline const Glyph* find(char ch) {
  static const Glyph glyphs[] = {
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00}},
      {'#', {0x14, 0x7f, 0x14, 0x7f, 0x14}},
      {'-', {0x08, 0x08, 0x08, 0x08, 0x08}},
      {'.', {0x00, 0x60, 0x60, 0x00, 0x00}},
      {'/', {0x20, 0x10, 0x08, 0x04, 0x02}},
      {':', {0x00, 0x36, 0x36, 0x00, 0x00}},
      {'0', {0x3e, 0x51, 0x49, 0x45, 0x3e}},
      {'1', {0x00, 0x42, 0x7f, 0x40, 0x00}},
      {'2', {0x42, 0x61, 0x51, 0x49, 0x46}},
      {'3', {0x21, 0x41, 0x45, 0x4b, 0x31}},
      {'4', {0x18, 0x14, 0x12, 0x7f, 0x10}},
      {'5', {0x27, 0x45, 0x45, 0x45, 0x39}},
      {'6', {0x3c, 0x4a, 0x49, 0x49, 0x30}},
      {'7', {0x01, 0x71, 0x09, 0x05, 0x03}},
      {'8', {0x36, 0x49, 0x49, 0x49, 0x36}},
      {'9', {0x06, 0x49, 0x49, 0x29, 0x1e}},
      {'A', {0x7e, 0x11, 0x11, 0x11, 0x7e}},
      {'B', {0x7f, 0x49, 0x49, 0x49, 0x36}},
      {'C', {0x3e, 0x41, 0x41, 0x41, 0x22}},
      {'D', {0x7f, 0x41, 0x41, 0x22, 0x1c}},
      {'E', {0x7f, 0x49, 0x49, 0x49, 0x41}},
      {'F', {0x7f, 0x09, 0x09, 0x09, 0x01}},
      {'G', {0x3e, 0x41, 0x49, 0x49, 0x7a}},
      {'H', {0x7f, 0x08, 0x08, 0x08, 0x7f}},
      {'I', {0x00, 0x41, 0x7f, 0x41, 0x00}},
      {'J', {0x20, 0x40, 0x41, 0x3f, 0x01}},
      {'K', {0x7f, 0x08, 0x14, 0x22, 0x41}},
      {'L', {0x7f, 0x40, 0x40, 0x40, 0x40}},
      {'M', {0x7f, 0x02, 0x0c, 0x02, 0x7f}},
      {'N', {0x7f, 0x04, 0x08, 0x10, 0x7f}},
      {'O', {0x3e, 0x41, 0x41, 0x41, 0x3e}},
      {'P', {0x7f, 0x09, 0x09, 0x09, 0x06}},
      {'Q', {0x3e, 0x41, 0x51, 0x21, 0x5e}},
      {'R', {0x7f, 0x09, 0x19, 0x29, 0x46}},
      {'S', {0x46, 0x49, 0x49, 0x49, 0x31}},
      {'T', {0x01, 0x01, 0x7f, 0x01, 0x01}},
      {'U', {0x3f, 0x40, 0x40, 0x40, 0x3f}},
      {'V', {0x1f, 0x20, 0x40, 0x20, 0x1f}},
      {'W', {0x3f, 0x40, 0x38, 0x40, 0x3f}},
      {'X', {0x63, 0x14, 0x08, 0x14, 0x63}},
      {'Y', {0x07, 0x08, 0x70, 0x08, 0x07}},
      {'Z', {0x61, 0x51, 0x49, 0x45, 0x43}},
      {'a', {0x20, 0x54, 0x54, 0x54, 0x78}},
      {'b', {0x7f, 0x48, 0x44, 0x44, 0x38}},
      {'c', {0x38, 0x44, 0x44, 0x44, 0x20}},
      {'d', {0x38, 0x44, 0x44, 0x48, 0x7f}},
      {'e', {0x38, 0x54, 0x54, 0x54, 0x18}},
      {'f', {0x08, 0x7e, 0x09, 0x01, 0x02}},
      {'g', {0x0c, 0x52, 0x52, 0x52, 0x3e}},
      {'h', {0x7f, 0x08, 0x04, 0x04, 0x78}},
      {'i', {0x00, 0x44, 0x7d, 0x40, 0x00}},
      {'j', {0x20, 0x40, 0x44, 0x3d, 0x00}},
      {'k', {0x7f, 0x10, 0x28, 0x44, 0x00}},
      {'l', {0x00, 0x41, 0x7f, 0x40, 0x00}},
      {'m', {0x7c, 0x04, 0x18, 0x04, 0x78}},
      {'n', {0x7c, 0x08, 0x04, 0x04, 0x78}},
      {'o', {0x38, 0x44, 0x44, 0x44, 0x38}},
      {'p', {0x7c, 0x14, 0x14, 0x14, 0x08}},
      {'q', {0x08, 0x14, 0x14, 0x18, 0x7c}},
      {'r', {0x7c, 0x08, 0x04, 0x04, 0x08}},
      {'s', {0x48, 0x54, 0x54, 0x54, 0x20}},
      {'t', {0x04, 0x3f, 0x44, 0x40, 0x20}},
      {'u', {0x3c, 0x40, 0x40, 0x20, 0x7c}},
      {'v', {0x1c, 0x20, 0x40, 0x20, 0x1c}},
      {'w', {0x3c, 0x40, 0x30, 0x40, 0x3c}},
      {'x', {0x44, 0x28, 0x10, 0x28, 0x44}},
      {'y', {0x0c, 0x50, 0x50, 0x50, 0x3c}},
      {'z', {0x44, 0x64, 0x54, 0x4c, 0x44}},
  };
  for (const auto& g : glyphs)
    if (g.ch == ch) return &g;
  return nullptr;
}

}  // namespace fontdata

inline int text_width(std::string_view text, int scale = 1) {
  if (text.empty()) return 0;
  return int(text.size()) * 6 * scale - scale;
}

inline int text_height(int scale = 1) { return 7 * scale; }

/// Draw `text` with its top-left corner at (x, y). Unknown glyphs render as
/// a filled block.
inline void draw_text(ImageRgb8& img, int x, int y, std::string_view text,
                      Rgb c, int scale = 1) {
  int pen = x;
  for (char ch : text) {
    const auto* g = fontdata::find(ch);
    for (int col = 0; col < 5; ++col) {
      const std::uint8_t bits = g ? g->cols[std::size_t(col)] : 0x7f;
      for (int row = 0; row < 7; ++row) {
        if (!(bits & (1u << row))) continue;
        for (int sx = 0; sx < scale; ++sx)
          for (int sy = 0; sy < scale; ++sy)
            img.set(pen + col * scale + sx, y + row * scale + sy, c);
      }
    }
    pen += 6 * scale;
  }
}

}  // namespace atomnav
