#pragma once

namespace mura {

// Axis-aligned box, (x_min, y_min, x_max, y_max) in image pixels.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }

  bool operator==(const Box& o) const = default;
};

// Intersection over union; 0 when disjoint. Throws DataError on degenerate
// (non-positive area) boxes.
double box_iou(const Box& a, const Box& b);

struct GtBox {
  int class_id = 0;
  Box box;

  bool operator==(const GtBox& o) const = default;
};

}  // namespace mura
