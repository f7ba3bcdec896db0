#pragma once

#include <string_view>

namespace boxpref {

// Axis-aligned rectangle in continuous pixel coordinates, stored the way COCO
// stores it: top-left corner plus extent. Width and height are strictly
// positive and every field is finite.
class Box {
 public:
  Box(double x_min, double y_min, double width, double height);

  double x_min() const { return x_min_; }
  double y_min() const { return y_min_; }
  double width() const { return width_; }
  double height() const { return height_; }
  double x_max() const { return x_min_ + width_; }
  double y_max() const { return y_min_ + height_; }
  double center_x() const { return x_min_ + 0.5 * width_; }
  double center_y() const { return y_min_ + 0.5 * height_; }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double x_min_;
  double y_min_;
  double width_;
  double height_;
};

/// Returns true when the four values satisfy the Box invariants.
bool is_valid_box(double x_min, double y_min, double width, double height);

class ImageSize {
 public:
  ImageSize(double width, double height);

  double width() const { return width_; }
  double height() const { return height_; }

  friend bool operator==(const ImageSize&, const ImageSize&) = default;

 private:
  double width_;
  double height_;
};

// Multiplier on a box's AREA. Linear dimensions scale by its square root.
class ScaleFactor {
 public:
  explicit ScaleFactor(double value);

  double value() const { return value_; }
  double linear() const;

 private:
  double value_;
};

enum class SizeCategory { kSmall, kMedium, kLarge };

std::string_view to_string(SizeCategory category);

// COCO area thresholds.
inline constexpr double kSmallAreaLimit = 32.0 * 32.0;
inline constexpr double kMediumAreaLimit = 96.0 * 96.0;

double area(const Box& box);

/// Intersection over union. Boxes that only share an edge have IoU 0.
double iou(const Box& a, const Box& b);

/// Area of the intersection of two boxes, 0 when they do not overlap.
double intersection_area(const Box& a, const Box& b);

/// Scales the box area by `factor` about its center, then intersects the
/// result with the closed image rectangle [0,W]x[0,H]. When no clipping is
/// needed the scaled box is returned untouched, so factor 1 is an exact
/// identity for in-image boxes. Throws DegenerateResult if clipping leaves
/// zero width or height.
Box scale_box(const Box& box, ScaleFactor factor, const ImageSize& image);

/// Small below 32^2, Medium in [32^2, 96^2], Large above 96^2.
SizeCategory size_category(const Box& box);
SizeCategory size_category_for_area(double area);

}  // namespace boxpref
