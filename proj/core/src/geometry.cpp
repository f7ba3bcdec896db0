#include "boxpref/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "boxpref/error.hpp"

namespace boxpref {

namespace {

std::string describe(double x, double y, double w, double h) {
  std::ostringstream out;
  out << "Box(" << x << ", " << y << ", " << w << ", " << h << ")";
  return out.str();
}

}  // namespace

bool is_valid_box(double x_min, double y_min, double width, double height) {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(width) &&
         std::isfinite(height) && width > 0.0 && height > 0.0;
}

Box::Box(double x_min, double y_min, double width, double height)
    : x_min_(x_min), y_min_(y_min), width_(width), height_(height) {
  if (!is_valid_box(x_min, y_min, width, height)) {
    fail(ErrorCode::kInvalidArgument,
         "invalid " + describe(x_min, y_min, width, height) +
             ": width and height must be positive and all fields finite");
  }
}

ImageSize::ImageSize(double width, double height)
    : width_(width), height_(height) {
  if (!(std::isfinite(width) && std::isfinite(height) && width > 0.0 &&
        height > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "image size must be positive and finite");
  }
}

ScaleFactor::ScaleFactor(double value) : value_(value) {
  if (!(std::isfinite(value) && value > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "scale factor must be positive and finite");
  }
}

double ScaleFactor::linear() const { return std::sqrt(value_); }

std::string_view to_string(SizeCategory category) {
  switch (category) {
    case SizeCategory::kSmall: return "small";
    case SizeCategory::kMedium: return "medium";
    case SizeCategory::kLarge: return "large";
  }
  return "unknown";
}

double area(const Box& box) { return box.width() * box.height(); }

namespace {

// Overlap of [a0, a0 + aw) and [b0, b0 + bw). When one interval contains the
// other its own extent is returned, so nested boxes keep their exact area.
double overlap(double a0, double aw, double b0, double bw) {
  const double a1 = a0 + aw;
  const double b1 = b0 + bw;
  const double lo = std::max(a0, b0);
  const double hi = std::min(a1, b1);
  if (hi <= lo) return 0.0;
  if (lo == a0 && hi == a1) return aw;
  if (lo == b0 && hi == b1) return bw;
  return hi - lo;
}

}  // namespace

double intersection_area(const Box& a, const Box& b) {
  const double iw = overlap(a.x_min(), a.width(), b.x_min(), b.width());
  if (iw <= 0.0) return 0.0;
  const double ih = overlap(a.y_min(), a.height(), b.y_min(), b.height());
  if (ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double area_a = area(a);
  const double area_b = area(b);
  if (inter == area_a) return std::min(1.0, area_a / area_b);
  if (inter == area_b) return std::min(1.0, area_b / area_a);
  return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

Box scale_box(const Box& box, ScaleFactor factor, const ImageSize& image) {
  const double s = factor.linear();
  const double new_w = box.width() * s;
  const double new_h = box.height() * s;
  // Offsetting by half the growth keeps x_min bit-exact when s == 1.
  double x0 = box.x_min() - 0.5 * (new_w - box.width());
  double y0 = box.y_min() - 0.5 * (new_h - box.height());
  double w = new_w;
  double h = new_h;

  if (x0 < 0.0 || x0 + w > image.width()) {
    const double x1 = std::min(x0 + w, image.width());
    x0 = std::max(x0, 0.0);
    w = x1 - x0;
  }
  if (y0 < 0.0 || y0 + h > image.height()) {
    const double y1 = std::min(y0 + h, image.height());
    y0 = std::max(y0, 0.0);
    h = y1 - y0;
  }
  if (!(w > 0.0 && h > 0.0)) {
    fail(ErrorCode::kDegenerateResult,
         "clipping " +
             describe(box.x_min(), box.y_min(), box.width(), box.height()) +
             " to the image leaves an empty box");
  }
  return Box(x0, y0, w, h);
}

SizeCategory size_category_for_area(double a) {
  if (a < kSmallAreaLimit) return SizeCategory::kSmall;
  if (a <= kMediumAreaLimit) return SizeCategory::kMedium;
  return SizeCategory::kLarge;
}

SizeCategory size_category(const Box& box) {
  return size_category_for_area(area(box));
}

}  // namespace boxpref
