#pragma once

#include <cstdint>
#include <vector>

namespace scnet {

// Axis-aligned box, coordinates normalized to [0,1] by image size.
struct BoundingBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  bool valid() const { return xmax >= xmin && ymax >= ymin; }
  double area() const { return (xmax - xmin) * (ymax - ymin); }
};

// Pixel box -> normalized box. Throws std::invalid_argument on an inverted
// box or non-positive image size.
BoundingBox normalize_box(double xmin, double ymin, double xmax, double ymax,
                          double image_w, double image_h);

// Intersection over union; two degenerate (zero-area) boxes give 0.
double iou(const BoundingBox& a, const BoundingBox& b);

// IoU of `own` against every slot of the fixed candidate layout
// [ocr slots..., object slots...]; inactive slots yield 0.
std::vector<double> iou_features(const BoundingBox& own,
                                 const std::vector<BoundingBox>& ocr_boxes,
                                 const std::vector<std::uint8_t>& ocr_mask,
                                 const std::vector<BoundingBox>& obj_boxes,
                                 const std::vector<std::uint8_t>& obj_mask);

}  // namespace scnet
