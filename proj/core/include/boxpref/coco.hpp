#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "boxpref/geometry.hpp"

namespace boxpref {

struct GroundTruthObject {
  std::int64_t annotation_id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  Box box{0, 0, 1, 1};
  SizeCategory size_category = SizeCategory::kSmall;
};

struct Detection {
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  Box box{0, 0, 1, 1};
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct ImageRecord {
  std::int64_t image_id = 0;
  std::string file_name;
  ImageSize size{1, 1};
};

// Annotations dropped while loading; they never reach the bundle.
struct LoadReport {
  std::size_t degenerate = 0;  // zero width or height
  std::size_t crowd = 0;       // iscrowd == 1
};

class DatasetBundle {
 public:
  DatasetBundle() = default;
  DatasetBundle(std::vector<ImageRecord> images,
                std::vector<GroundTruthObject> ground_truth,
                std::map<std::int64_t, std::string> categories,
                LoadReport report = {});

  const std::vector<ImageRecord>& images() const { return images_; }
  const std::vector<GroundTruthObject>& ground_truth() const {
    return ground_truth_;
  }
  const std::map<std::int64_t, std::string>& categories() const {
    return categories_;
  }
  const LoadReport& load_report() const { return report_; }

  bool has_image(std::int64_t image_id) const;
  /// Throws ReferentialError for an unknown id.
  const ImageRecord& image(std::int64_t image_id) const;

 private:
  std::vector<ImageRecord> images_;
  std::vector<GroundTruthObject> ground_truth_;
  std::map<std::int64_t, std::string> categories_;
  LoadReport report_;
  std::unordered_map<std::int64_t, std::size_t> image_index_;
};

// COCO "instances" layout: top-level images / annotations / categories,
// annotation bbox as [x, y, w, h]. Crowd and zero-extent annotations are
// excluded and counted in the load report.
DatasetBundle load_ground_truth(const std::filesystem::path& path);
DatasetBundle parse_ground_truth(std::string_view text,
                                 std::string_view source = "<memory>");

// COCO results layout: a flat list of {image_id, category_id, bbox, score}.
// The result is stably sorted by (image_id, descending confidence).
std::vector<Detection> load_detections(const std::filesystem::path& path,
                                       const DatasetBundle& bundle);
std::vector<Detection> parse_detections(std::string_view text,
                                        const DatasetBundle& bundle,
                                        std::string_view source = "<memory>");

void sort_detections(std::vector<Detection>& detections);

std::string serialize_detections(std::span<const Detection> detections);
void write_detections(std::span<const Detection> detections,
                      const std::filesystem::path& path);

}  // namespace boxpref
