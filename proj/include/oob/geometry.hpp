#pragma once

#include <algorithm>

#include "oob/tensor.hpp"

namespace oob {

// Axis-aligned box in pixel coordinates, [x_min, x_max) x [y_min, y_max) as
// continuous extents. Valid iff x_min < x_max and y_min < y_max.
struct BoundingBox {
  Scalar x_min = 0;
  Scalar y_min = 0;
  Scalar x_max = 0;
  Scalar y_max = 0;

  bool valid() const { return x_min < x_max && y_min < y_max; }
  Scalar width() const { return x_max - x_min; }
  Scalar height() const { return y_max - y_min; }
  Scalar area() const { return valid() ? width() * height() : 0; }
  Scalar center_x() const { return 0.5 * (x_min + x_max); }
  Scalar center_y() const { return 0.5 * (y_min + y_max); }
};

inline Scalar intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const Scalar w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const Scalar h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0 || h <= 0) return 0;
  return w * h;
}

inline Scalar iou(const BoundingBox& a, const BoundingBox& b) {
  const Scalar inter = intersection_area(a, b);
  const Scalar uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0;
  return inter / uni;
}

}  // namespace oob
