#include "boxpref/coco.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "boxpref/error.hpp"
#include "json.hpp"

namespace boxpref {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, path.string() + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_document(std::string_view text, std::string_view source) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParseError, std::string(source) + ": " + e.what());
  }
}

std::string where(std::string_view source, std::string_view section,
                  std::size_t index) {
  std::ostringstream out;
  out << source << ": " << section << " record " << index;
  return out.str();
}

const json& require(const json& obj, const char* key, ErrorCode code,
                    const std::string& context) {
  if (!obj.is_object() || !obj.contains(key)) {
    fail(code, context + ": missing key \"" + key + "\"");
  }
  return obj.at(key);
}

std::int64_t require_id(const json& obj, const char* key, ErrorCode code,
                        const std::string& context) {
  const json& v = require(obj, key, code, context);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    fail(code, context + ": \"" + key + "\" must be a non-negative integer");
  }
  return v.get<std::int64_t>();
}

double require_number(const json& obj, const char* key, ErrorCode code,
                      const std::string& context) {
  const json& v = require(obj, key, code, context);
  if (!v.is_number()) {
    fail(code, context + ": \"" + key + "\" must be a number");
  }
  return v.get<double>();
}

std::array<double, 4> require_bbox(const json& obj, ErrorCode code,
                                   const std::string& context) {
  const json& v = require(obj, "bbox", code, context);
  if (!v.is_array() || v.size() != 4) {
    fail(code, context + ": \"bbox\" must be an array [x, y, w, h]");
  }
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number()) {
      fail(code, context + ": \"bbox\" entries must be numbers");
    }
    out[i] = v[i].get<double>();
  }
  return out;
}

}  // namespace

DatasetBundle::DatasetBundle(std::vector<ImageRecord> images,
                             std::vector<GroundTruthObject> ground_truth,
                             std::map<std::int64_t, std::string> categories,
                             LoadReport report)
    : images_(std::move(images)),
      ground_truth_(std::move(ground_truth)),
      categories_(std::move(categories)),
      report_(report) {
  for (std::size_t i = 0; i < images_.size(); ++i) {
    if (!image_index_.emplace(images_[i].image_id, i).second) {
      fail(ErrorCode::kSchemaError,
           "duplicate image id " + std::to_string(images_[i].image_id));
    }
  }
  for (const auto& gt : ground_truth_) {
    if (!has_image(gt.image_id)) {
      fail(ErrorCode::kReferentialError,
           "annotation " + std::to_string(gt.annotation_id) +
               " references unknown image_id " + std::to_string(gt.image_id));
    }
    if (!categories_.contains(gt.category_id)) {
      fail(ErrorCode::kReferentialError,
           "annotation " + std::to_string(gt.annotation_id) +
               " references unknown category_id " +
               std::to_string(gt.category_id));
    }
  }
}

bool DatasetBundle::has_image(std::int64_t image_id) const {
  return image_index_.contains(image_id);
}

const ImageRecord& DatasetBundle::image(std::int64_t image_id) const {
  const auto it = image_index_.find(image_id);
  if (it == image_index_.end()) {
    fail(ErrorCode::kReferentialError,
         "unknown image_id " + std::to_string(image_id));
  }
  return images_[it->second];
}

DatasetBundle parse_ground_truth(std::string_view text,
                                 std::string_view source) {
  const json doc = parse_document(text, source);
  const std::string src(source);
  if (!doc.is_object()) {
    fail(ErrorCode::kSchemaError, src + ": top level must be an object");
  }
  for (const char* key : {"images", "annotations", "categories"}) {
    if (!doc.contains(key) || !doc.at(key).is_array()) {
      fail(ErrorCode::kSchemaError,
           src + ": missing array \"" + std::string(key) + "\"");
    }
  }

  std::map<std::int64_t, std::string> categories;
  const json& cats = doc.at("categories");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string ctx = where(source, "categories", i);
    const auto id = require_id(cats[i], "id", ErrorCode::kSchemaError, ctx);
    const json& name = require(cats[i], "name", ErrorCode::kSchemaError, ctx);
    if (!name.is_string()) {
      fail(ErrorCode::kSchemaError, ctx + ": \"name\" must be a string");
    }
    categories[id] = name.get<std::string>();
  }

  std::vector<ImageRecord> images;
  std::unordered_map<std::int64_t, std::size_t> seen_images;
  const json& imgs = doc.at("images");
  images.reserve(imgs.size());
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const std::string ctx = where(source, "images", i);
    ImageRecord rec;
    rec.image_id = require_id(imgs[i], "id", ErrorCode::kSchemaError, ctx);
    const double w = require_number(imgs[i], "width", ErrorCode::kSchemaError, ctx);
    const double h = require_number(imgs[i], "height", ErrorCode::kSchemaError, ctx);
    if (!(w > 0.0 && h > 0.0)) {
      fail(ErrorCode::kSchemaError, ctx + ": image size must be positive");
    }
    rec.size = ImageSize(w, h);
    if (imgs[i].contains("file_name") && imgs[i].at("file_name").is_string()) {
      rec.file_name = imgs[i].at("file_name").get<std::string>();
    }
    if (!seen_images.emplace(rec.image_id, i).second) {
      fail(ErrorCode::kSchemaError,
           ctx + ": duplicate image id " + std::to_string(rec.image_id));
    }
    images.push_back(std::move(rec));
  }

  LoadReport report;
  std::vector<GroundTruthObject> objects;
  const json& anns = doc.at("annotations");
  objects.reserve(anns.size());
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string ctx = where(source, "annotations", i);
    const json& a = anns[i];
    GroundTruthObject gt;
    gt.annotation_id = require_id(a, "id", ErrorCode::kSchemaError, ctx);
    gt.image_id = require_id(a, "image_id", ErrorCode::kSchemaError, ctx);
    gt.category_id = require_id(a, "category_id", ErrorCode::kSchemaError, ctx);
    const auto bb = require_bbox(a, ErrorCode::kSchemaError, ctx);

    if (!seen_images.contains(gt.image_id)) {
      fail(ErrorCode::kReferentialError,
           ctx + ": unknown image_id " + std::to_string(gt.image_id));
    }
    if (!categories.contains(gt.category_id)) {
      fail(ErrorCode::kReferentialError,
           ctx + ": unknown category_id " + std::to_string(gt.category_id));
    }
    if (a.contains("iscrowd") && a.at("iscrowd").is_number() &&
        a.at("iscrowd").get<double>() == 1.0) {
      ++report.crowd;
      continue;
    }
    if (!is_valid_box(bb[0], bb[1], bb[2], bb[3])) {
      ++report.degenerate;
      continue;
    }
    gt.box = Box(bb[0], bb[1], bb[2], bb[3]);
    gt.size_category = size_category(gt.box);
    objects.push_back(gt);
  }

  return DatasetBundle(std::move(images), std::move(objects),
                       std::move(categories), report);
}

DatasetBundle load_ground_truth(const std::filesystem::path& path) {
  return parse_ground_truth(read_file(path), path.string());
}

void sort_detections(std::vector<Detection>& detections) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) {
                     if (a.image_id != b.image_id) return a.image_id < b.image_id;
                     return a.confidence > b.confidence;
                   });
}

std::vector<Detection> parse_detections(std::string_view text,
                                        const DatasetBundle& bundle,
                                        std::string_view source) {
  const json doc = parse_document(text, source);
  if (!doc.is_array()) {
    fail(ErrorCode::kParseError,
         std::string(source) + ": results document must be a list");
  }
  std::vector<Detection> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string ctx = where(source, "results", i);
    const json& r = doc[i];
    Detection det;
    det.image_id = require_id(r, "image_id", ErrorCode::kParseError, ctx);
    det.category_id = require_id(r, "category_id", ErrorCode::kParseError, ctx);
    const auto bb = require_bbox(r, ErrorCode::kParseError, ctx);
    det.confidence = require_number(r, "score", ErrorCode::kParseError, ctx);
    if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) {
      fail(ErrorCode::kParseError, ctx + ": score must lie in [0, 1]");
    }
    if (!is_valid_box(bb[0], bb[1], bb[2], bb[3])) {
      fail(ErrorCode::kParseError, ctx + ": bbox must have positive extent");
    }
    if (!bundle.has_image(det.image_id)) {
      fail(ErrorCode::kReferentialError,
           ctx + ": unknown image_id " + std::to_string(det.image_id));
    }
    det.box = Box(bb[0], bb[1], bb[2], bb[3]);
    out.push_back(det);
  }
  sort_detections(out);
  return out;
}

std::vector<Detection> load_detections(const std::filesystem::path& path,
                                       const DatasetBundle& bundle) {
  return parse_detections(read_file(path), bundle, path.string());
}

std::string serialize_detections(std::span<const Detection> detections) {
  json doc = json::array();
  for (const auto& d : detections) {
    doc.push_back({
        {"image_id", d.image_id},
        {"category_id", d.category_id},
        {"bbox", {d.box.x_min(), d.box.y_min(), d.box.width(), d.box.height()}},
        {"score", d.confidence},
    });
  }
  return doc.dump();
}

void write_detections(std::span<const Detection> detections,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, path.string() + ": cannot open for writing");
  out << serialize_detections(detections) << '\n';
  out.flush();
  if (!out) fail(ErrorCode::kIoError, path.string() + ": write failed");
}

}  // namespace boxpref
