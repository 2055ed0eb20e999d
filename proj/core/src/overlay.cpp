#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>

#include "muranet/errors.hpp"
#include "muranet/overlay.hpp"

namespace mura {

namespace {

struct Rgb {
  double r, g, b;
};

constexpr Rgb kWallTint{0.85, 0.15, 0.15};
constexpr double kWallAlpha = 0.45;
// Box/label palette indexed by class id (door, window, then fallbacks).
constexpr std::array<Rgb, 4> kPalette{{{0.05, 0.55, 0.10},
                                       {0.10, 0.25, 0.90},
                                       {0.85, 0.55, 0.05},
                                       {0.60, 0.10, 0.60}}};

// 5x7 bitmap glyphs; one byte per row, low 5 bits used, MSB-left.
struct Glyph {
  char ch;
  std::array<uint8_t, 7> rows;
};

constexpr std::array<Glyph, 18> kFont{{
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'d', {0x01, 0x01, 0x0D, 0x13, 0x11, 0x13, 0x0D}},
    {'o', {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
    {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
    {'w', {0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0A}},
    {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
    {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
}};

const Glyph* find_glyph(char ch) {
  for (const Glyph& g : kFont)
    if (g.ch == ch) return &g;
  return nullptr;
}

void put_pixel(Tensor& img, int x, int y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= img.dim(2) || y >= img.dim(1)) return;
  img.at3(0, y, x) = c.r;
  img.at3(1, y, x) = c.g;
  img.at3(2, y, x) = c.b;
}

void draw_rect(Tensor& img, const Box& b, const Rgb& c) {
  const int x0 = static_cast<int>(std::lround(b.x1));
  const int y0 = static_cast<int>(std::lround(b.y1));
  const int x1 = static_cast<int>(std::lround(b.x2)) - 1;
  const int y1 = static_cast<int>(std::lround(b.y2)) - 1;
  for (int x = x0; x <= x1; ++x) {
    put_pixel(img, x, y0, c);
    put_pixel(img, x, y1, c);
  }
  for (int y = y0; y <= y1; ++y) {
    put_pixel(img, x0, y, c);
    put_pixel(img, x1, y, c);
  }
}

void draw_text(Tensor& img, int x, int y, const std::string& text, const Rgb& c) {
  for (const char ch : text) {
    if (const Glyph* g = find_glyph(ch)) {
      for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col)
          if (g->rows[static_cast<size_t>(row)] & (0x10 >> col))
            put_pixel(img, x + col, y + row, c);
    }
    x += 6;  // 5px glyph + 1px spacing
  }
}

std::string label_for(const Detection& d) {
  std::string name;
  switch (d.class_id) {
    case 0: name = "door"; break;
    case 1: name = "window"; break;
    default: name = std::to_string(d.class_id); break;
  }
  char score[16];
  std::snprintf(score, sizeof(score), "%.2f", d.score);
  return name + " " + score;
}

}  // namespace

Tensor render_overlay(const Tensor& image, const MaskImage& mask,
                      const std::vector<Detection>& dets) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw ShapeError("render_overlay expects a (3,H,W) image");
  const int h = image.dim(1), w = image.dim(2);
  if (mask.h != h || mask.w != w) throw ShapeError("render_overlay: mask size mismatch");

  Tensor out = image;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.at(y, x) == 1) {
        out.at3(0, y, x) = (1.0 - kWallAlpha) * out.at3(0, y, x) + kWallAlpha * kWallTint.r;
        out.at3(1, y, x) = (1.0 - kWallAlpha) * out.at3(1, y, x) + kWallAlpha * kWallTint.g;
        out.at3(2, y, x) = (1.0 - kWallAlpha) * out.at3(2, y, x) + kWallAlpha * kWallTint.b;
      }

  for (const Detection& d : dets) {
    const Rgb& color = kPalette[static_cast<size_t>(std::max(0, d.class_id)) % kPalette.size()];
    draw_rect(out, d.box, color);
    const int tx = std::max(0, static_cast<int>(std::lround(d.box.x1)));
    int ty = static_cast<int>(std::lround(d.box.y1)) - 9;
    if (ty < 0) ty = std::min(h - 8, static_cast<int>(std::lround(d.box.y1)) + 2);
    draw_text(out, tx, ty, label_for(d), color);
  }
  return out;
}

}  // namespace mura
