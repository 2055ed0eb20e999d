#include <algorithm>
#include <cmath>
#include <vector>

#include "muranet/dataset.hpp"
#include "muranet/errors.hpp"

namespace mura {

namespace {

// One-axis resample plan: each output index maps to a weighted run of input
// indices. Shrinking uses exact-coverage area averaging; enlarging uses the
// Catmull-Rom cubic (a = -0.5) at half-pixel sample positions.
struct AxisTap {
  int first = 0;                // first contributing input index
  std::vector<double> weights;  // contiguous run starting at `first`
};

std::vector<AxisTap> area_plan(int in, int out) {
  const double scale = static_cast<double>(in) / out;  // > 1
  std::vector<AxisTap> plan(static_cast<size_t>(out));
  for (int d = 0; d < out; ++d) {
    const double lo = d * scale;
    const double hi = (d + 1) * scale;
    const int i0 = static_cast<int>(std::floor(lo));
    const int i1 = std::min(in - 1, static_cast<int>(std::ceil(hi)) - 1);
    AxisTap& t = plan[static_cast<size_t>(d)];
    t.first = i0;
    t.weights.resize(static_cast<size_t>(i1 - i0 + 1));
    for (int i = i0; i <= i1; ++i) {
      const double cover = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      t.weights[static_cast<size_t>(i - i0)] = std::max(0.0, cover) / scale;
    }
  }
  return plan;
}

double catmull_rom(double t) {
  constexpr double a = -0.5;
  const double x = std::abs(t);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

std::vector<AxisTap> cubic_plan(int in, int out) {
  const double scale = static_cast<double>(in) / out;  // < 1
  std::vector<AxisTap> plan(static_cast<size_t>(out));
  for (int d = 0; d < out; ++d) {
    const double src = (d + 0.5) * scale - 0.5;
    const int base = static_cast<int>(std::floor(src)) - 1;
    AxisTap& t = plan[static_cast<size_t>(d)];
    // Clamp the 4-tap window to the image; fold out-of-range taps onto the
    // nearest edge pixel so the weights still sum to 1.
    const int lo = std::clamp(base, 0, in - 1);
    const int hi = std::clamp(base + 3, 0, in - 1);
    t.first = lo;
    t.weights.assign(static_cast<size_t>(hi - lo + 1), 0.0);
    for (int k = 0; k < 4; ++k) {
      const double w = catmull_rom(src - (base + k));
      const int i = std::clamp(base + k, 0, in - 1);
      t.weights[static_cast<size_t>(i - lo)] += w;
    }
  }
  return plan;
}

std::vector<AxisTap> axis_plan(int in, int out) {
  if (out < in) return area_plan(in, out);
  return cubic_plan(in, out);  // out > in (equal handled by caller)
}

// Identity plan so an unchanged axis costs one trivial pass.
std::vector<AxisTap> copy_plan(int n) {
  std::vector<AxisTap> plan(static_cast<size_t>(n));
  for (int d = 0; d < n; ++d) {
    plan[static_cast<size_t>(d)].first = d;
    plan[static_cast<size_t>(d)].weights = {1.0};
  }
  return plan;
}

}  // namespace

Tensor resize_image(const Tensor& img, int target_h, int target_w) {
  if (img.ndim() != 3) throw ShapeError("resize_image expects a (C,H,W) tensor");
  if (target_h <= 0 || target_w <= 0) throw ConfigError("resize target must be positive");
  const int c = img.dim(0), ih = img.dim(1), iw = img.dim(2);
  if (ih == target_h && iw == target_w) return img;

  const auto rows = ih == target_h ? copy_plan(ih) : axis_plan(ih, target_h);
  const auto cols = iw == target_w ? copy_plan(iw) : axis_plan(iw, target_w);

  // Pass 1: resample rows into (C, target_h, iw).
  Tensor mid({c, target_h, iw});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < target_h; ++y) {
      const AxisTap& t = rows[static_cast<size_t>(y)];
      for (int x = 0; x < iw; ++x) {
        double acc = 0.0;
        for (size_t k = 0; k < t.weights.size(); ++k)
          acc += t.weights[k] * img.at3(ch, t.first + static_cast<int>(k), x);
        mid.at3(ch, y, x) = acc;
      }
    }
  }
  // Pass 2: resample columns into (C, target_h, target_w), then snap every
  // value back onto the k/255 grid so the stored 8-bit form is lossless.
  Tensor out({c, target_h, target_w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < target_h; ++y) {
      for (int x = 0; x < target_w; ++x) {
        const AxisTap& t = cols[static_cast<size_t>(x)];
        double acc = 0.0;
        for (size_t k = 0; k < t.weights.size(); ++k)
          acc += t.weights[k] * mid.at3(ch, y, t.first + static_cast<int>(k));
        acc = std::clamp(acc, 0.0, 1.0);
        out.at3(ch, y, x) = std::lround(acc * 255.0) / 255.0;
      }
    }
  }
  return out;
}

MaskImage resize_mask_nearest(const MaskImage& m, int target_h, int target_w) {
  if (m.h <= 0 || m.w <= 0) throw ShapeError("resize_mask_nearest: empty mask");
  if (target_h <= 0 || target_w <= 0) throw ConfigError("resize target must be positive");
  if (m.h == target_h && m.w == target_w) return m;
  MaskImage out(target_h, target_w);
  for (int y = 0; y < target_h; ++y) {
    const int sy = std::min(m.h - 1, static_cast<int>((y + 0.5) * m.h / target_h));
    for (int x = 0; x < target_w; ++x) {
      const int sx = std::min(m.w - 1, static_cast<int>((x + 0.5) * m.w / target_w));
      out.at(y, x) = m.at(sy, sx);
    }
  }
  return out;
}

Sample resize_sample(const Sample& s, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0 || target_h % 32 != 0 || target_w % 32 != 0)
    throw ConfigError("resize target must be a positive multiple of 32");
  if (s.image.ndim() != 3) throw ShapeError("resize_sample: image must be (C,H,W)");
  const int ih = s.image.dim(1), iw = s.image.dim(2);
  Sample out;
  out.id = s.id;
  out.image = resize_image(s.image, target_h, target_w);
  out.mask = resize_mask_nearest(s.mask, target_h, target_w);
  const double sx = static_cast<double>(target_w) / iw;
  const double sy = static_cast<double>(target_h) / ih;
  out.boxes.reserve(s.boxes.size());
  for (const GtBox& b : s.boxes)
    out.boxes.push_back(
        GtBox{b.class_id, Box{b.box.x1 * sx, b.box.y1 * sy, b.box.x2 * sx, b.box.y2 * sy}});
  return out;
}

}  // namespace mura
