#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "boxpref/coco.hpp"
#include "boxpref/geometry.hpp"

namespace boxpref {

// IoU counts as reaching a threshold when iou >= threshold - this. Absorbs
// last-bit rounding, e.g. a box scaled by area 2 about its center has IoU
// 0.4999999999999999 with the original.
inline constexpr double kIouMatchTolerance = 1e-12;

/// 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

struct DetectionMatch {
  std::size_t detection_index = 0;  // position in the input span
  double confidence = 0.0;
  // One entry per threshold of the owning MatchResult.
  std::vector<std::optional<std::int64_t>> matched_gt;
  std::vector<double> iou_at_match;
  std::vector<bool> ignored;

  bool is_true_positive(std::size_t threshold_index) const {
    return matched_gt[threshold_index].has_value() &&
           !ignored[threshold_index];
  }
};

struct MatchResult {
  std::vector<double> thresholds;
  // Detections in processing order: descending confidence, ties by input index.
  std::vector<DetectionMatch> detections;
  std::size_t num_ground_truth = 0;  // ground truth not ignored
};

// Restricts evaluation to one size category: ground truth of another size is
// ignored, as are detections matched to it and unmatched detections whose own
// area falls outside the category.
struct SizeFilter {
  SizeCategory category;
};

/// Greedy confidence-ranked matching within each (image, category) pair. A
/// detection takes the unmatched ground truth with the highest IoU (first in
/// input order on ties) provided IoU >= threshold (see kIouMatchTolerance).
MatchResult match(std::span<const Detection> detections,
                  std::span<const GroundTruthObject> ground_truth,
                  std::span<const double> thresholds,
                  std::optional<SizeFilter> size_filter = std::nullopt);
MatchResult match(std::span<const Detection> detections,
                  std::span<const GroundTruthObject> ground_truth,
                  double threshold);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;

  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

struct PrCurve {
  double threshold = 0.5;
  std::vector<PrPoint> points;  // recall non-decreasing
};

/// Cumulative precision/recall in processing order. Throws EmptyGroundTruth
/// when the match saw no (non-ignored) ground truth.
PrCurve pr_curve(const MatchResult& result, std::size_t threshold_index = 0);

/// COCO 101-point interpolated AP: mean over r in {0, 0.01, ..., 1} of the
/// best precision at recall >= r (0 when that recall is never reached).
double average_precision(const PrCurve& curve);

struct ThresholdAp {
  double threshold = 0.0;
  double ap = 0.0;
};

struct ApReport {
  double ap = 0.0;                  // mean over per_threshold
  std::optional<double> ap50;       // present when 0.50 was evaluated
  std::vector<ThresholdAp> per_threshold;
  std::map<SizeCategory, double> per_size;
  std::size_t num_categories = 0;   // categories with at least one gt
};

struct EvalOptions {
  // Categories are evaluated on this many threads; the fold into the
  // report is always in ascending category order.
  std::size_t workers = 1;
};

ApReport evaluate(std::span<const Detection> detections,
                  const DatasetBundle& bundle,
                  std::span<const double> thresholds,
                  const EvalOptions& options = {});

struct SizeCounts {
  std::size_t larger = 0;
  std::size_t smaller = 0;
  std::size_t equal = 0;

  std::size_t total() const { return larger + smaller + equal; }
};

struct SizeRatioBin {
  double lower = 0.0;
  double upper = 0.0;
  SizeCounts counts;
  std::array<SizeCounts, 3> by_size{};  // indexed by SizeCategory of the gt
};

struct SizeRatioHistogram {
  std::vector<SizeRatioBin> bins;
  std::size_t excluded = 0;  // detections with no partner at IoU >= lower
};

struct HistogramConfig {
  double lower = 0.3;
  double upper = 1.0;
  std::size_t bins = 7;
};

/// Census of predicted boxes larger / smaller than their matched ground truth
/// per IoU interval. Matching runs at `config.lower`; IoU == upper falls into
/// the last bin.
SizeRatioHistogram size_ratio_histogram(std::span<const Detection> detections,
                                        const DatasetBundle& bundle,
                                        const HistogramConfig& config = {});

}  // namespace boxpref
