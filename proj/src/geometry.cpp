#include "scnet/geometry.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace scnet {

BoundingBox normalize_box(double xmin, double ymin, double xmax, double ymax,
                          double image_w, double image_h) {
  if (image_w <= 0.0 || image_h <= 0.0)
    throw std::invalid_argument("normalize_box: non-positive image size");
  if (xmax < xmin || ymax < ymin) {
    std::ostringstream os;
    os << "normalize_box: inverted box [" << xmin << "," << ymin << "," << xmax
       << "," << ymax << "]";
    throw std::invalid_argument(os.str());
  }
  const auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return BoundingBox{clamp01(xmin / image_w), clamp01(ymin / image_h),
                     clamp01(xmax / image_w), clamp01(ymax / image_h)};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(
      0.0, std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin));
  const double iy = std::max(
      0.0, std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

std::vector<double> iou_features(const BoundingBox& own,
                                 const std::vector<BoundingBox>& ocr_boxes,
                                 const std::vector<std::uint8_t>& ocr_mask,
                                 const std::vector<BoundingBox>& obj_boxes,
                                 const std::vector<std::uint8_t>& obj_mask) {
  std::vector<double> out(ocr_boxes.size() + obj_boxes.size(), 0.0);
  for (size_t i = 0; i < ocr_boxes.size(); ++i)
    if (ocr_mask[i]) out[i] = iou(own, ocr_boxes[i]);
  for (size_t i = 0; i < obj_boxes.size(); ++i)
    if (obj_mask[i]) out[ocr_boxes.size() + i] = iou(own, obj_boxes[i]);
  return out;
}

}  // namespace scnet
