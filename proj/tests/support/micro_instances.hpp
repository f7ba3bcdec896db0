#pragma once

#include <random>

#include "boxpref/coco.hpp"

namespace boxpref::testing {

struct MicroInstance {
  DatasetBundle bundle;
  std::vector<Detection> detections;
};

/// Up to 5 images, 4 detections and 3 ground truths per image, 2 categories,
/// integer-grid boxes and coarse confidences so that ties actually occur.
inline MicroInstance random_micro_instance(std::mt19937_64& rng) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::vector<ImageRecord> images;
  std::vector<GroundTruthObject> gts;
  std::vector<Detection> dets;
  const int n_images = uni(1, 5);
  std::int64_t ann = 1;
  auto random_box = [&] {
    const double x = uni(0, 12);
    const double y = uni(0, 12);
    return Box(x, y, uni(1, 8), uni(1, 8));
  };
  for (int i = 1; i <= n_images; ++i) {
    images.push_back({i, "m" + std::to_string(i) + ".jpg", ImageSize(20, 20)});
    const int n_gt = uni(0, 3);
    for (int g = 0; g < n_gt; ++g) {
      GroundTruthObject o;
      o.annotation_id = ann++;
      o.image_id = i;
      o.category_id = uni(1, 2);
      o.box = random_box();
      o.size_category = size_category(o.box);
      gts.push_back(o);
    }
    const int n_det = uni(0, 4);
    for (int d = 0; d < n_det; ++d) {
      Box b = random_box();
      // half the time start from a ground-truth box and jitter it
      if (!gts.empty() && uni(0, 1) == 1) {
        const auto& src = gts[static_cast<std::size_t>(uni(0, static_cast<int>(gts.size()) - 1))];
        if (src.image_id == i) {
          b = Box(src.box.x_min() + uni(-1, 1), src.box.y_min() + uni(-1, 1),
                  std::max(1.0, src.box.width() + uni(-1, 1)),
                  std::max(1.0, src.box.height() + uni(-1, 1)));
        }
      }
      dets.push_back({i, uni(1, 2), b, uni(1, 5) / 5.0});
    }
  }
  if (gts.empty()) {
    GroundTruthObject o;
    o.annotation_id = ann++;
    o.image_id = 1;
    o.category_id = 1;
    o.box = Box(2, 2, 5, 5);
    o.size_category = size_category(o.box);
    gts.push_back(o);
  }
  std::map<std::int64_t, std::string> cats{{1, "a"}, {2, "b"}};
  return {DatasetBundle(std::move(images), std::move(gts), std::move(cats)), std::move(dets)};
}

}  // namespace boxpref::testing
