#include <benchmark/benchmark.h>

#include <random>

#include "boxpref/asymmetric_loss.hpp"
#include "boxpref/detection_eval.hpp"
#include "boxpref/geometry.hpp"
#include "boxpref/preference_stats.hpp"

namespace {

using namespace boxpref;

std::vector<Box> random_boxes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0, 900);
  std::uniform_real_distribution<double> ext(4, 100);
  std::vector<Box> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(pos(rng), pos(rng), ext(rng), ext(rng));
  return out;
}

void BM_Iou(benchmark::State& state) {
  const auto boxes = random_boxes(1024, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(iou(boxes[i & 1023], boxes[(i + 1) & 1023]));
    ++i;
  }
}
BENCHMARK(BM_Iou);

void BM_LossValue(benchmark::State& state) {
  const AsymmetricLossParams p(10.0, 1.0);
  double x = -3.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_value(x, p));
    x = x > 3.0 ? -3.0 : x + 0.001;
  }
}
BENCHMARK(BM_LossValue);

void BM_Evaluate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto boxes = random_boxes(n, 2);
  std::vector<ImageRecord> images;
  std::vector<GroundTruthObject> gts;
  std::vector<Detection> dets;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> jitter(0.0, 3.0);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto image = static_cast<std::int64_t>(i / 20 + 1);
    if (images.empty() || images.back().image_id != image) {
      images.push_back({image, "x.jpg", ImageSize(1000, 1000)});
    }
    GroundTruthObject g;
    g.annotation_id = static_cast<std::int64_t>(i + 1);
    g.image_id = image;
    g.category_id = static_cast<std::int64_t>(i % 10 + 1);
    g.box = boxes[i];
    g.size_category = size_category(g.box);
    gts.push_back(g);
    dets.push_back({image, g.category_id,
                    Box(g.box.x_min() + jitter(rng), g.box.y_min() + jitter(rng),
                        g.box.width(), g.box.height()),
                    conf(rng)});
  }
  std::map<std::int64_t, std::string> cats;
  for (int c = 1; c <= 10; ++c) cats[c] = "c";
  const DatasetBundle bundle(std::move(images), std::move(gts), std::move(cats));
  const auto thresholds = coco_iou_thresholds();
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate(dets, bundle, thresholds));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Evaluate)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_CochranQ(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.4);
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(state.range(0)),
                                              std::vector<std::uint8_t>(4));
  for (auto& r : rows) {
    for (auto& v : r) v = coin(rng);
  }
  const JudgmentTable table({"a", "b", "c", "d"}, rows);
  for (auto _ : state) benchmark::DoNotOptimize(analyze(table));
}
BENCHMARK(BM_CochranQ)->Arg(660);

}  // namespace

BENCHMARK_MAIN();
