#include "boxpref/detection_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>
#include <utility>

#include "boxpref/error.hpp"

namespace boxpref {

namespace {

constexpr int kRecallGridPoints = 101;

void validate_thresholds(std::span<const double> thresholds) {
  if (thresholds.empty()) {
    fail(ErrorCode::kInvalidArgument, "at least one IoU threshold is required");
  }
  for (double t : thresholds) {
    if (!(t > 0.0 && t <= 1.0)) {
      fail(ErrorCode::kInvalidArgument, "IoU thresholds must lie in (0, 1]");
    }
  }
}

using GroupKey = std::pair<std::int64_t, std::int64_t>;  // image, category

}  // namespace

std::vector<double> coco_iou_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back((50.0 + 5.0 * i) / 100.0);
  return out;
}

MatchResult match(std::span<const Detection> detections,
                  std::span<const GroundTruthObject> ground_truth,
                  std::span<const double> thresholds,
                  std::optional<SizeFilter> size_filter) {
  validate_thresholds(thresholds);
  const std::size_t num_t = thresholds.size();

  std::vector<bool> gt_ignored(ground_truth.size(), false);
  MatchResult result;
  result.thresholds.assign(thresholds.begin(), thresholds.end());
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    gt_ignored[g] = size_filter.has_value() &&
                    ground_truth[g].size_category != size_filter->category;
    if (!gt_ignored[g]) ++result.num_ground_truth;
  }

  // Within a group, non-ignored ground truth is tried first.
  std::map<GroupKey, std::vector<std::size_t>> groups;
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    groups[{ground_truth[g].image_id, ground_truth[g].category_id}].push_back(g);
  }
  for (auto& [key, members] : groups) {
    std::stable_partition(members.begin(), members.end(),
                          [&](std::size_t g) { return !gt_ignored[g]; });
  }

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].confidence > detections[b].confidence;
  });

  std::vector<std::vector<bool>> taken(num_t,
                                       std::vector<bool>(ground_truth.size()));
  std::vector<double> ious;
  result.detections.reserve(detections.size());
  for (std::size_t d : order) {
    const Detection& det = detections[d];
    DetectionMatch dm;
    dm.detection_index = d;
    dm.confidence = det.confidence;
    dm.matched_gt.assign(num_t, std::nullopt);
    dm.iou_at_match.assign(num_t, 0.0);
    dm.ignored.assign(num_t, false);

    const auto it = groups.find({det.image_id, det.category_id});
    if (it != groups.end()) {
      const auto& members = it->second;
      ious.resize(members.size());
      for (std::size_t j = 0; j < members.size(); ++j) {
        ious[j] = iou(det.box, ground_truth[members[j]].box);
      }
      for (std::size_t t = 0; t < num_t; ++t) {
        std::optional<std::size_t> best;
        double best_iou = thresholds[t] - kIouMatchTolerance;
        for (std::size_t j = 0; j < members.size(); ++j) {
          const std::size_t g = members[j];
          if (taken[t][g]) continue;
          if (best && !gt_ignored[members[*best]] && gt_ignored[g]) break;
          if (ious[j] < best_iou) continue;
          if (best && ious[j] == best_iou) continue;
          best = j;
          best_iou = ious[j];
        }
        if (best) {
          const std::size_t g = members[*best];
          taken[t][g] = true;
          dm.matched_gt[t] = ground_truth[g].annotation_id;
          dm.iou_at_match[t] = best_iou;
          dm.ignored[t] = gt_ignored[g];
        }
      }
    }
    if (size_filter) {
      const bool outside =
          size_category_for_area(area(det.box)) != size_filter->category;
      for (std::size_t t = 0; t < num_t; ++t) {
        if (!dm.matched_gt[t] && outside) dm.ignored[t] = true;
      }
    }
    result.detections.push_back(std::move(dm));
  }
  return result;
}

MatchResult match(std::span<const Detection> detections,
                  std::span<const GroundTruthObject> ground_truth,
                  double threshold) {
  const double t[] = {threshold};
  return match(detections, ground_truth, t);
}

PrCurve pr_curve(const MatchResult& result, std::size_t threshold_index) {
  if (threshold_index >= result.thresholds.size()) {
    fail(ErrorCode::kInvalidArgument, "threshold index out of range");
  }
  if (result.num_ground_truth == 0) {
    fail(ErrorCode::kEmptyGroundTruth,
         "no ground-truth objects for the requested category set");
  }
  PrCurve curve;
  curve.threshold = result.thresholds[threshold_index];
  const double n_gt = static_cast<double>(result.num_ground_truth);
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& dm : result.detections) {
    if (dm.ignored[threshold_index]) continue;
    if (dm.matched_gt[threshold_index]) {
      ++tp;
    } else {
      ++fp;
    }
    curve.points.push_back({static_cast<double>(tp) / n_gt,
                            static_cast<double>(tp) /
                                static_cast<double>(tp + fp)});
  }
  return curve;
}

double average_precision(const PrCurve& curve) {
  const auto& pts = curve.points;
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    envelope[i] = running;
  }
  double sum = 0.0;
  std::size_t idx = 0;
  for (int k = 0; k < kRecallGridPoints; ++k) {
    const double r = static_cast<double>(k) / 100.0;
    while (idx < pts.size() && pts[idx].recall < r) ++idx;
    if (idx < pts.size()) sum += envelope[idx];
  }
  return sum / kRecallGridPoints;
}

namespace {

struct CategoryResult {
  std::vector<double> ap;                               // per threshold
  std::array<std::optional<std::vector<double>>, 3> by_size;
};

std::vector<double> ap_per_threshold(const MatchResult& m) {
  std::vector<double> out(m.thresholds.size());
  for (std::size_t t = 0; t < m.thresholds.size(); ++t) {
    out[t] = average_precision(pr_curve(m, t));
  }
  return out;
}

}  // namespace

ApReport evaluate(std::span<const Detection> detections,
                  const DatasetBundle& bundle,
                  std::span<const double> thresholds,
                  const EvalOptions& options) {
  validate_thresholds(thresholds);
  const auto& gts = bundle.ground_truth();
  if (gts.empty()) {
    fail(ErrorCode::kEmptyGroundTruth, "dataset has no ground-truth objects");
  }

  std::set<std::int64_t> category_set;
  for (const auto& g : gts) category_set.insert(g.category_id);
  const std::vector<std::int64_t> categories(category_set.begin(),
                                             category_set.end());

  std::map<std::int64_t, std::vector<Detection>> dets_by_cat;
  std::map<std::int64_t, std::vector<GroundTruthObject>> gts_by_cat;
  for (const auto& d : detections) {
    if (category_set.contains(d.category_id)) dets_by_cat[d.category_id].push_back(d);
  }
  for (const auto& g : gts) gts_by_cat[g.category_id].push_back(g);
  for (auto cat : categories) dets_by_cat[cat];

  std::vector<CategoryResult> results(categories.size());
  auto run = [&](std::size_t ci) {
    const auto cat = categories[ci];
    const auto& cd = dets_by_cat.at(cat);
    const auto& cg = gts_by_cat.at(cat);
    CategoryResult& out = results[ci];
    out.ap = ap_per_threshold(match(cd, cg, thresholds));
    for (std::size_t s = 0; s < 3; ++s) {
      const auto size = static_cast<SizeCategory>(s);
      const bool any = std::any_of(cg.begin(), cg.end(), [&](const auto& g) {
        return g.size_category == size;
      });
      if (any) {
        out.by_size[s] = ap_per_threshold(match(cd, cg, thresholds, SizeFilter{size}));
      }
    }
  };

  const std::size_t workers =
      std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(1, categories.size()));
  if (workers == 1) {
    for (std::size_t ci = 0; ci < categories.size(); ++ci) run(ci);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t ci = next++; ci < categories.size(); ci = next++) run(ci);
      });
    }
    for (auto& th : pool) th.join();
  }

  ApReport report;
  report.num_categories = categories.size();
  double total = 0.0;
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    double sum = 0.0;
    for (const auto& r : results) sum += r.ap[t];
    const double mean = sum / static_cast<double>(results.size());
    report.per_threshold.push_back({thresholds[t], mean});
    total += mean;
    if (std::abs(thresholds[t] - 0.5) < 1e-12) report.ap50 = mean;
  }
  report.ap = total / static_cast<double>(thresholds.size());

  for (std::size_t s = 0; s < 3; ++s) {
    double size_total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& r : results) {
        if (r.by_size[s]) {
          sum += (*r.by_size[s])[t];
          ++n;
        }
      }
      if (n == 0) break;
      size_total += sum / static_cast<double>(n);
      ++count;
    }
    if (count > 0) {
      report.per_size[static_cast<SizeCategory>(s)] =
          size_total / static_cast<double>(count);
    }
  }
  return report;
}

SizeRatioHistogram size_ratio_histogram(std::span<const Detection> detections,
                                        const DatasetBundle& bundle,
                                        const HistogramConfig& config) {
  if (config.bins == 0 || !(config.lower > 0.0) || !(config.upper <= 1.0) ||
      !(config.lower < config.upper)) {
    fail(ErrorCode::kInvalidArgument, "invalid histogram range");
  }
  SizeRatioHistogram hist;
  const double width = (config.upper - config.lower) / static_cast<double>(config.bins);
  // Edges rounded to 1e-9 so that decimal edges such as 0.6 are exact.
  auto edge = [&](std::size_t i) {
    return std::round((config.lower + static_cast<double>(i) * width) * 1e9) / 1e9;
  };
  for (std::size_t i = 0; i < config.bins; ++i) {
    SizeRatioBin bin;
    bin.lower = edge(i);
    bin.upper = i + 1 == config.bins ? config.upper : edge(i + 1);
    hist.bins.push_back(bin);
  }

  const auto& gts = bundle.ground_truth();
  std::map<std::int64_t, const GroundTruthObject*> by_id;
  for (const auto& g : gts) by_id[g.annotation_id] = &g;

  const MatchResult m = match(detections, gts, config.lower);
  for (const auto& dm : m.detections) {
    if (!dm.matched_gt[0]) {
      ++hist.excluded;
      continue;
    }
    const double v = dm.iou_at_match[0];
    std::size_t b = 0;
    while (b + 1 < hist.bins.size() && v >= hist.bins[b + 1].lower - kIouMatchTolerance) ++b;
    const GroundTruthObject& gt = *by_id.at(*dm.matched_gt[0]);
    const double det_area = area(detections[dm.detection_index].box);
    const double gt_area = area(gt.box);
    auto bump = [&](SizeCounts& c) {
      if (det_area > gt_area) {
        ++c.larger;
      } else if (det_area < gt_area) {
        ++c.smaller;
      } else {
        ++c.equal;
      }
    };
    bump(hist.bins[b].counts);
    bump(hist.bins[b].by_size[static_cast<std::size_t>(gt.size_category)]);
  }
  return hist;
}

}  // namespace boxpref
