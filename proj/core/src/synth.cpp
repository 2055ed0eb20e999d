#include <algorithm>
#include <cmath>
#include <optional>

#include "muranet/dataset.hpp"
#include "muranet/errors.hpp"

namespace mura {

namespace {

// 8-bit ink values; the image tensor is k/255 so PNG round trips are exact.
constexpr int kBackground = 240;
constexpr int kWallInk = 40;
constexpr int kDoorInk = 70;
constexpr int kWindowInk = 90;

struct Rect {  // half-open [x0,x1) x [y0,y1)
  int x0, y0, x1, y1;
  int w() const { return x1 - x0; }
  int h() const { return y1 - y0; }
  int64_t area() const { return static_cast<int64_t>(w()) * h(); }
};

struct WallBand {
  Rect r;
  bool horizontal;  // band runs along x
  bool outer;
};

struct Canvas {
  int h, w;
  std::vector<uint8_t> ink;   // grayscale image being drawn
  std::vector<uint8_t> wall;  // 1 where wall
  std::vector<uint8_t> used;  // glyph exclusion zones

  Canvas(int h_, int w_) : h(h_), w(w_), ink(static_cast<size_t>(h_) * w_, kBackground),
                           wall(static_cast<size_t>(h_) * w_, 0), used(static_cast<size_t>(h_) * w_, 0) {}
  bool inside(int x, int y) const { return x >= 0 && x < w && y >= 0 && y < h; }
  void fill_rect(const Rect& r, int value, bool is_wall) {
    for (int y = std::max(0, r.y0); y < std::min(h, r.y1); ++y)
      for (int x = std::max(0, r.x0); x < std::min(w, r.x1); ++x) {
        ink[static_cast<size_t>(y) * w + x] = static_cast<uint8_t>(value);
        wall[static_cast<size_t>(y) * w + x] = is_wall ? 1 : 0;
      }
  }
  bool all_wall(const Rect& r) const {
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > w || r.y1 > h) return false;
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x)
        if (!wall[static_cast<size_t>(y) * w + x]) return false;
    return true;
  }
  bool any_wall_or_used(const Rect& r) const {
    for (int y = std::max(0, r.y0); y < std::min(h, r.y1); ++y)
      for (int x = std::max(0, r.x0); x < std::min(w, r.x1); ++x)
        if (wall[static_cast<size_t>(y) * w + x] || used[static_cast<size_t>(y) * w + x]) return true;
    return false;
  }
  void mark_used(const Rect& r) {
    for (int y = std::max(0, r.y0); y < std::min(h, r.y1); ++y)
      for (int x = std::max(0, r.x0); x < std::min(w, r.x1); ++x)
        used[static_cast<size_t>(y) * w + x] = 1;
  }
  void plot(int x, int y, int value) {
    if (inside(x, y)) ink[static_cast<size_t>(y) * w + x] = static_cast<uint8_t>(value);
  }
};

// Recursive axis-aligned partition. Splits the largest splittable cell until
// the target room count is reached (or nothing can split).
void partition_rooms(Canvas& cv, Rng& rng, Rect interior, int target, int t,
                     std::vector<WallBand>& bands) {
  constexpr int kMinSide = 14;  // smallest room side, keeps glyphs placeable
  std::vector<Rect> cells{interior};
  while (static_cast<int>(cells.size()) < target) {
    int best = -1;
    int64_t best_area = -1;
    for (size_t i = 0; i < cells.size(); ++i) {
      const Rect& c = cells[i];
      if (std::max(c.w(), c.h()) >= 2 * kMinSide + t && c.area() > best_area) {
        best = static_cast<int>(i);
        best_area = c.area();
      }
    }
    if (best < 0) break;
    Rect c = cells[best];
    cells.erase(cells.begin() + best);
    const bool split_x = c.w() >= c.h();  // cut the longer extent
    if (split_x) {
      const int lo = c.x0 + kMinSide, hi = c.x1 - kMinSide - t;
      const int pos = rng.uniform_int(lo, hi);
      bands.push_back({Rect{pos, c.y0, pos + t, c.y1}, false, false});
      cells.push_back(Rect{c.x0, c.y0, pos, c.y1});
      cells.push_back(Rect{pos + t, c.y0, c.x1, c.y1});
    } else {
      const int lo = c.y0 + kMinSide, hi = c.y1 - kMinSide - t;
      const int pos = rng.uniform_int(lo, hi);
      bands.push_back({Rect{c.x0, pos, c.x1, pos + t}, true, false});
      cells.push_back(Rect{c.x0, c.y0, c.x1, pos});
      cells.push_back(Rect{c.x0, pos + t, c.x1, c.y1});
    }
  }
  for (const WallBand& b : bands)
    if (!b.outer) cv.fill_rect(b.r, kWallInk, true);
}

struct Glyph {
  Box box;
  int class_id;
};

// A door: gap carved through the wall, quarter-circle swing arc plus the leaf
// segment on one side. Returns the glyph box or nothing if it does not fit.
std::optional<Glyph> try_door(Canvas& cv, Rng& /*rng*/, const WallBand& band, int along, int size) {
  const Rect& r = band.r;
  Rect gap = band.horizontal ? Rect{along, r.y0, along + size, r.y1}
                             : Rect{r.x0, along, r.x1, along + size};
  // The gap must sit on solid wall with wall continuing on both ends.
  Rect before = band.horizontal ? Rect{along - 3, r.y0, along, r.y1} : Rect{r.x0, along - 3, r.x1, along};
  Rect after = band.horizontal ? Rect{along + size, r.y0, along + size + 3, r.y1}
                               : Rect{r.x0, along + size, r.x1, along + size + 3};
  if (!cv.all_wall(gap) || !cv.all_wall(before) || !cv.all_wall(after)) return std::nullopt;
  // Swing side: rooms on either side of the band; pick the first that fits.
  for (int side = 0; side < 2; ++side) {
    const int dir = side == 0 ? 1 : -1;
    Rect swing;
    int hx, hy;  // hinge
    if (band.horizontal) {
      hx = along;
      hy = dir > 0 ? r.y1 : r.y0 - 1;
      swing = dir > 0 ? Rect{along, r.y1, along + size + 1, r.y1 + size + 1}
                      : Rect{along, r.y0 - size - 1, along + size + 1, r.y0};
    } else {
      hy = along;
      hx = dir > 0 ? r.x1 : r.x0 - 1;
      swing = dir > 0 ? Rect{r.x1, along, r.x1 + size + 1, along + size + 1}
                      : Rect{r.x0 - size - 1, along, r.x0, along + size + 1};
    }
    if (swing.x0 < 1 || swing.y0 < 1 || swing.x1 > cv.w - 1 || swing.y1 > cv.h - 1) continue;
    if (cv.any_wall_or_used(swing)) continue;
    // Carve the opening, draw the swing arc around the hinge and the leaf.
    cv.fill_rect(gap, kBackground, false);
    const double r_arc = size;
    for (int k = 0; k <= 90; ++k) {
      const double a = k * (M_PI / 180.0);  // sweep 0..pi/2 in 1-degree steps
      double dx, dy;
      if (band.horizontal) {
        dx = r_arc * std::sin(a);
        dy = dir * r_arc * std::cos(a);
      } else {
        dx = dir * r_arc * std::cos(a);
        dy = r_arc * std::sin(a);
      }
      cv.plot(hx + static_cast<int>(std::lround(dx)), hy + static_cast<int>(std::lround(dy)), kDoorInk);
    }
    // Leaf: straight stroke from the hinge into the room.
    for (int k = 0; k <= size; ++k) {
      if (band.horizontal)
        cv.plot(hx, hy + dir * k, kDoorInk);
      else
        cv.plot(hx + dir * k, hy, kDoorInk);
    }
    Glyph g;
    g.class_id = 0;
    const double x0 = std::min({static_cast<double>(gap.x0), static_cast<double>(swing.x0)});
    const double y0 = std::min({static_cast<double>(gap.y0), static_cast<double>(swing.y0)});
    const double x1 = std::max({static_cast<double>(gap.x1), static_cast<double>(swing.x1)});
    const double y1 = std::max({static_cast<double>(gap.y1), static_cast<double>(swing.y1)});
    g.box = Box{x0, y0, x1, y1};
    cv.mark_used(Rect{static_cast<int>(x0) - 2, static_cast<int>(y0) - 2, static_cast<int>(x1) + 2,
                      static_cast<int>(y1) + 2});
    return g;
  }
  return std::nullopt;
}

// A window: wall section replaced by two thin parallel lines.
std::optional<Glyph> try_window(Canvas& cv, Rng& /*rng*/, const WallBand& band, int along, int size) {
  const Rect& r = band.r;
  Rect sect = band.horizontal ? Rect{along, r.y0, along + size, r.y1}
                              : Rect{r.x0, along, r.x1, along + size};
  Rect before = band.horizontal ? Rect{along - 3, r.y0, along, r.y1} : Rect{r.x0, along - 3, r.x1, along};
  Rect after = band.horizontal ? Rect{along + size, r.y0, along + size + 3, r.y1}
                               : Rect{r.x0, along + size, r.x1, along + size + 3};
  if (!cv.all_wall(sect) || !cv.all_wall(before) || !cv.all_wall(after)) return std::nullopt;
  Rect guard{sect.x0 - 2, sect.y0 - 2, sect.x1 + 2, sect.y1 + 2};
  for (int y = std::max(0, guard.y0); y < std::min(cv.h, guard.y1); ++y)
    for (int x = std::max(0, guard.x0); x < std::min(cv.w, guard.x1); ++x)
      if (cv.used[static_cast<size_t>(y) * cv.w + x]) return std::nullopt;
  cv.fill_rect(sect, kBackground, false);
  const int t = band.horizontal ? sect.h() : sect.w();
  const int o1 = std::max(0, (t - 1) / 3), o2 = std::min(t - 1, (2 * t) / 3);
  if (band.horizontal) {
    for (int x = sect.x0; x < sect.x1; ++x) {
      cv.plot(x, sect.y0 + o1, kWindowInk);
      cv.plot(x, sect.y0 + o2, kWindowInk);
    }
  } else {
    for (int y = sect.y0; y < sect.y1; ++y) {
      cv.plot(sect.x0 + o1, y, kWindowInk);
      cv.plot(sect.x0 + o2, y, kWindowInk);
    }
  }
  Glyph g;
  g.class_id = 1;
  g.box = Box{static_cast<double>(sect.x0), static_cast<double>(sect.y0),
              static_cast<double>(sect.x1), static_cast<double>(sect.y1)};
  cv.mark_used(guard);
  return g;
}

// Deterministically picks placements: shuffled candidate sweep, first fit.
template <typename TryFn>
int place_glyphs(Canvas& cv, Rng& rng, const std::vector<WallBand>& bands, int count, int min_size,
                 int max_size, bool internal_only, std::vector<Glyph>& out, TryFn&& fn) {
  int placed = 0;
  for (int k = 0; k < count; ++k) {
    const int size = rng.uniform_int(min_size, max_size);
    struct Cand {
      size_t band;
      int along;
    };
    std::vector<Cand> cands;
    for (size_t bi = 0; bi < bands.size(); ++bi) {
      if (internal_only && bands[bi].outer) continue;
      const Rect& r = bands[bi].r;
      const int lo = (bands[bi].horizontal ? r.x0 : r.y0) + 4;
      const int hi = (bands[bi].horizontal ? r.x1 : r.y1) - size - 4;
      for (int a = lo; a <= hi; a += 2) cands.push_back({bi, a});
    }
    rng.shuffle(cands.begin(), cands.end());
    bool done = false;
    for (const Cand& c : cands) {
      if (auto g = fn(cv, rng, bands[c.band], c.along, size)) {
        out.push_back(*g);
        ++placed;
        done = true;
        break;
      }
    }
    if (!done) break;  // no remaining space; later attempts use the same pool
  }
  return placed;
}

}  // namespace

Sample generate_floorplan(const SynthConfig& spec, int index) {
  spec.validate();
  const int h = spec.canvas_h, w = spec.canvas_w;
  if (h < 4 * spec.wall_max + 8 || w < 4 * spec.wall_max + 8)
    throw GenError("walls would overlap completely on this canvas");
  Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(index)));
  Canvas cv(h, w);

  const int t = rng.uniform_int(spec.wall_min, spec.wall_max);
  std::vector<WallBand> bands;
  // Outer walls.
  bands.push_back({Rect{0, 0, w, t}, true, true});
  bands.push_back({Rect{0, h - t, w, h}, true, true});
  bands.push_back({Rect{0, t, t, h - t}, false, true});
  bands.push_back({Rect{w - t, t, w, h - t}, false, true});
  for (const WallBand& b : bands) cv.fill_rect(b.r, kWallInk, true);

  const int rooms = rng.uniform_int(spec.rooms_min, spec.rooms_max);
  partition_rooms(cv, rng, Rect{t, t, w - t, h - t}, rooms, t, bands);

  std::vector<Glyph> glyphs;
  const int doors = rng.uniform_int(spec.doors_min, spec.doors_max);
  place_glyphs(cv, rng, bands, doors, 9, 13, true, glyphs, try_door);
  const int windows = rng.uniform_int(spec.windows_min, spec.windows_max);
  place_glyphs(cv, rng, bands, windows, 10, 16, false, glyphs, try_window);

  Sample s;
  s.id = "fp_" + std::to_string(spec.seed) + "_" + std::to_string(index);
  s.mask = MaskImage(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) s.mask.at(y, x) = cv.wall[static_cast<size_t>(y) * w + x];
  s.image = Tensor({3, h, w});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = cv.ink[static_cast<size_t>(y) * w + x] / 255.0;
        if (spec.line_noise > 0) v += rng.normal() * spec.line_noise;
        v = std::clamp(v, 0.0, 1.0);
        // Re-quantize so the stored 8-bit form reproduces this tensor exactly.
        s.image.at3(c, y, x) = std::lround(v * 255.0) / 255.0;
      }
    }
  }
  for (const Glyph& g : glyphs) s.boxes.push_back(GtBox{g.class_id, g.box});
  return s;
}

bool Sample::operator==(const Sample& o) const {
  if (id != o.id || !(mask == o.mask) || boxes != o.boxes) return false;
  if (image.shape() != o.image.shape()) return false;
  for (int64_t i = 0; i < image.numel(); ++i)
    if (image[i] != o.image[i]) return false;
  return true;
}

}  // namespace mura
