#include "boxpref/coco.hpp"

#include <gtest/gtest.h>

#include <string>

#include "boxpref/error.hpp"
#include "test_support.hpp"

namespace boxpref {
namespace {

using testing::TempDir;
using testing::write_text;

const char* kGroundTruth = R"({
  "images": [
    {"id": 1, "file_name": "a.jpg", "width": 640, "height": 480},
    {"id": 2, "file_name": "b.jpg", "width": 320, "height": 240}
  ],
  "annotations": [
    {"id": 10, "image_id": 1, "category_id": 3, "bbox": [10, 10, 20, 20], "area": 400, "iscrowd": 0},
    {"id": 11, "image_id": 1, "category_id": 3, "bbox": [100, 100, 50, 60], "area": 3000, "iscrowd": 0},
    {"id": 12, "image_id": 2, "category_id": 5, "bbox": [0, 0, 200, 100], "area": 20000},
    {"id": 13, "image_id": 2, "category_id": 5, "bbox": [5, 5, 0, 10], "area": 0, "iscrowd": 0},
    {"id": 14, "image_id": 2, "category_id": 5, "bbox": [5, 5, 30, 10], "area": 300, "iscrowd": 1}
  ],
  "categories": [{"id": 3, "name": "dog"}, {"id": 5, "name": "car"}]
})";

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

TEST(CocoTest, ParsesGroundTruth) {
  const DatasetBundle b = parse_ground_truth(kGroundTruth);
  ASSERT_EQ(b.images().size(), 2u);
  ASSERT_EQ(b.ground_truth().size(), 3u);
  EXPECT_EQ(b.load_report().degenerate, 1u);
  EXPECT_EQ(b.load_report().crowd, 1u);
  EXPECT_EQ(b.categories().at(3), "dog");
  EXPECT_EQ(b.image(2).size, ImageSize(320, 240));

  const auto& g = b.ground_truth();
  EXPECT_EQ(g[0].annotation_id, 10);
  EXPECT_EQ(g[0].size_category, SizeCategory::kSmall);
  EXPECT_EQ(g[1].size_category, SizeCategory::kMedium);
  EXPECT_EQ(g[2].size_category, SizeCategory::kLarge);
  EXPECT_EQ(g[1].box, Box(100, 100, 50, 60));
}

TEST(CocoTest, LoadsFromFile) {
  TempDir dir;
  write_text(dir / "gt.json", kGroundTruth);
  const DatasetBundle b = load_ground_truth(dir / "gt.json");
  EXPECT_EQ(b.ground_truth().size(), 3u);
  EXPECT_EQ(code_of([&] { load_ground_truth(dir / "missing.json"); }), ErrorCode::kIoError);
}

TEST(CocoTest, MalformedJsonIsParseError) {
  EXPECT_EQ(code_of([] { parse_ground_truth("{\"images\": ["); }), ErrorCode::kParseError);
}

TEST(CocoTest, MissingSectionIsSchemaError) {
  EXPECT_EQ(code_of([] { parse_ground_truth(R"({"images": [], "categories": []})"); }),
            ErrorCode::kSchemaError);
}

TEST(CocoTest, UnknownImageIsReferentialError) {
  const std::string doc = R"({
    "images": [{"id": 1, "file_name": "a.jpg", "width": 10, "height": 10}],
    "annotations": [{"id": 1, "image_id": 9, "category_id": 1, "bbox": [0, 0, 2, 2]}],
    "categories": [{"id": 1, "name": "x"}]})";
  EXPECT_EQ(code_of([&] { parse_ground_truth(doc); }), ErrorCode::kReferentialError);
}

TEST(CocoTest, UnknownCategoryIsReferentialError) {
  const std::string doc = R"({
    "images": [{"id": 1, "file_name": "a.jpg", "width": 10, "height": 10}],
    "annotations": [{"id": 1, "image_id": 1, "category_id": 4, "bbox": [0, 0, 2, 2]}],
    "categories": [{"id": 1, "name": "x"}]})";
  EXPECT_EQ(code_of([&] { parse_ground_truth(doc); }), ErrorCode::kReferentialError);
}

TEST(CocoTest, ErrorMessageNamesRecord) {
  const std::string doc = R"({
    "images": [{"id": 1, "file_name": "a.jpg", "width": 10, "height": 10}],
    "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 2]}],
    "categories": [{"id": 1, "name": "x"}]})";
  try {
    parse_ground_truth(doc, "gt.json");
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("gt.json"), std::string::npos) << msg;
    EXPECT_NE(msg.find("annotations"), std::string::npos) << msg;
  }
}

TEST(CocoTest, ParsesAndSortsDetections) {
  const DatasetBundle b = parse_ground_truth(kGroundTruth);
  const std::string dets = R"([
    {"image_id": 2, "category_id": 5, "bbox": [0, 0, 10, 10], "score": 0.3},
    {"image_id": 1, "category_id": 3, "bbox": [0, 0, 10, 10], "score": 0.2},
    {"image_id": 1, "category_id": 3, "bbox": [1, 1, 10, 10], "score": 0.9},
    {"image_id": 2, "category_id": 5, "bbox": [2, 2, 10, 10], "score": 0.3}
  ])";
  const auto d = parse_detections(dets, b);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d[0].image_id, 1);
  EXPECT_EQ(d[0].confidence, 0.9);
  EXPECT_EQ(d[1].confidence, 0.2);
  EXPECT_EQ(d[2].box, Box(0, 0, 10, 10));  // stable among equal scores
  EXPECT_EQ(d[3].box, Box(2, 2, 10, 10));
}

TEST(CocoTest, DetectionValidation) {
  const DatasetBundle b = parse_ground_truth(kGroundTruth);
  EXPECT_EQ(code_of([&] {
              parse_detections(R"([{"image_id": 1, "category_id": 3, "bbox": [0,0,1,1], "score": 1.5}])", b);
            }),
            ErrorCode::kParseError);
  EXPECT_EQ(code_of([&] {
              parse_detections(R"([{"image_id": 1, "category_id": 3, "bbox": [0,0,-1,1], "score": 0.5}])", b);
            }),
            ErrorCode::kParseError);
  EXPECT_EQ(code_of([&] {
              parse_detections(R"([{"image_id": 7, "category_id": 3, "bbox": [0,0,1,1], "score": 0.5}])", b);
            }),
            ErrorCode::kReferentialError);
}

TEST(CocoTest, DetectionsRoundTrip) {
  const DatasetBundle b = parse_ground_truth(kGroundTruth);
  std::vector<Detection> dets = {
      {1, 3, Box(0.1, 0.2, 10.3, 7.7), 0.123456789},
      {2, 5, Box(3, 4, 5, 6), 1.0},
      {1, 3, Box(1.0 / 3.0, 2.0 / 3.0, 1e-3, 1e6), 0.0},
  };
  sort_detections(dets);
  TempDir dir;
  write_detections(dets, dir / "d.json");
  const auto back = load_detections(dir / "d.json", b);
  EXPECT_EQ(back, dets);
}

}  // namespace
}  // namespace boxpref
