#include "boxpref/toy_regressor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "boxpref/error.hpp"

namespace boxpref {

namespace {

// Keeps noisy predictions from collapsing to a non-positive extent.
constexpr double kMinRelativeExtent = 1e-3;

double mean_gradient(std::span<const double> targets, double w,
                     const AsymmetricLossParams& p) {
  double sum = 0.0;
  for (double t : targets) sum += loss_gradient(w - t, p);
  return sum / static_cast<double>(targets.size());
}

}  // namespace

ScalarFit fit_scalar(std::span<const double> targets,
                     const AsymmetricLossParams& params, double lr,
                     std::size_t iters) {
  if (targets.empty()) fail(ErrorCode::kInvalidArgument, "fit_scalar needs targets");
  if (!(lr > 0.0) || iters == 0) {
    fail(ErrorCode::kInvalidArgument, "fit_scalar needs lr > 0 and iters > 0");
  }
  double w = 0.0;
  for (double t : targets) w += t;
  w /= static_cast<double>(targets.size());

  ScalarFit fit;
  for (std::size_t i = 0; i < iters; ++i) {
    const double g = mean_gradient(targets, w, params);
    if (std::abs(g) < kFitGradientTolerance) {
      return {w, i, g};
    }
    w -= lr * g;
    fit.iterations = i + 1;
  }
  fit.value = w;
  fit.gradient = mean_gradient(targets, w, params);
  if (std::abs(fit.gradient) < kFitGradientTolerance) return fit;

  std::ostringstream msg;
  msg << "no convergence after " << iters << " iterations (lr " << lr
      << ", |mean gradient| " << std::abs(fit.gradient) << ")";
  fail(ErrorCode::kNonConvergence, msg.str());
}

NoiseConfig NoiseConfig::parse(std::string_view text, std::uint64_t seed) {
  NoiseConfig cfg;
  cfg.seed = seed;
  const auto colon = text.find(':');
  const std::string kind(text.substr(0, colon));
  if (kind == "uniform") {
    cfg.distribution = Distribution::kUniform;
  } else if (kind == "gaussian") {
    cfg.distribution = Distribution::kGaussian;
  } else {
    fail(ErrorCode::kInvalidArgument,
         "noise must be uniform:<half-width> or gaussian:<sigma>, got \"" +
             std::string(text) + "\"");
  }
  if (colon != std::string_view::npos) {
    const std::string value(text.substr(colon + 1));
    std::size_t used = 0;
    try {
      cfg.scale = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || !(cfg.scale > 0.0) || !std::isfinite(cfg.scale)) {
      fail(ErrorCode::kInvalidArgument, "invalid noise scale \"" + value + "\"");
    }
  }
  return cfg;
}

SimulationResult simulate_detector(const DatasetBundle& bundle,
                                   const SimulationConfig& config) {
  const auto& gts = bundle.ground_truth();
  if (gts.empty()) {
    fail(ErrorCode::kEmptyGroundTruth, "simulation needs ground-truth objects");
  }

  std::mt19937_64 rng(config.noise.seed);
  std::uniform_real_distribution<double> uniform(-config.noise.scale,
                                                 config.noise.scale);
  std::normal_distribution<double> gaussian(0.0, config.noise.scale);
  auto draw = [&] {
    return config.noise.distribution == NoiseConfig::Distribution::kUniform
               ? uniform(rng)
               : gaussian(rng);
  };

  const std::size_t n = gts.size();
  std::vector<double> noise_w(n);
  std::vector<double> noise_h(n);
  for (std::size_t i = 0; i < n; ++i) {
    noise_w[i] = draw();
    noise_h[i] = config.noise.shared_axes ? noise_w[i] : draw();
  }

  // The prediction error is offset + noise, so the fit targets are -noise.
  std::vector<double> targets(n);
  for (std::size_t i = 0; i < n; ++i) targets[i] = -noise_w[i];
  const double bw = fit_scalar(targets, config.params, config.lr, config.iters).value;
  for (std::size_t i = 0; i < n; ++i) targets[i] = -noise_h[i];
  const double bh = fit_scalar(targets, config.params, config.lr, config.iters).value;

  SimulationResult result;
  RegressionOutcome& out = result.outcome;
  out.width_offset = bw;
  out.height_offset = bh;

  std::size_t larger = 0;
  std::size_t wider = 0;
  std::size_t taller = 0;
  double ratio_sum = 0.0;
  std::map<SizeCategory, std::pair<std::size_t, double>> size_acc;
  result.detections.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const GroundTruthObject& gt = gts[i];
    const double rw = std::max(1.0 + noise_w[i] + bw, kMinRelativeExtent);
    const double rh = std::max(1.0 + noise_h[i] + bh, kMinRelativeExtent);
    const double w = gt.box.width() * rw;
    const double h = gt.box.height() * rh;
    const Box pred(gt.box.center_x() - 0.5 * w, gt.box.center_y() - 0.5 * h, w, h);
    result.detections.push_back({gt.image_id, gt.category_id, pred, 1.0});

    const double ratio = area(pred) / area(gt.box);
    const bool is_larger = area(pred) > area(gt.box);
    larger += is_larger;
    wider += w > gt.box.width();
    taller += h > gt.box.height();
    ratio_sum += ratio;
    auto& [count, sum] = size_acc[gt.size_category];
    ++count;
    sum += ratio;
    out.per_size[gt.size_category].fraction_larger += is_larger;
  }
  const double dn = static_cast<double>(n);
  out.fraction_larger = static_cast<double>(larger) / dn;
  out.fraction_wider = static_cast<double>(wider) / dn;
  out.fraction_taller = static_cast<double>(taller) / dn;
  out.mean_scale_ratio = ratio_sum / dn;
  for (auto& [size, b] : out.per_size) {
    const auto& [count, sum] = size_acc.at(size);
    b.count = count;
    b.fraction_larger /= static_cast<double>(count);
    b.mean_scale_ratio = sum / static_cast<double>(count);
  }

  const auto thresholds = coco_iou_thresholds();
  result.ap = evaluate(result.detections, bundle, thresholds);
  return result;
}

std::vector<SweepRow> sweep_alpha(const DatasetBundle& bundle,
                                  std::span<const double> alphas,
                                  const SimulationConfig& base) {
  std::vector<SweepRow> rows;
  for (double alpha : alphas) {
    SimulationConfig cfg = base;
    cfg.params = AsymmetricLossParams(alpha, base.params.beta());
    const SimulationResult r = simulate_detector(bundle, cfg);
    rows.push_back({alpha, r.outcome.fraction_larger, r.ap.ap,
                    r.outcome.mean_scale_ratio});
  }
  return rows;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out.precision(10);
  out << "alpha,fraction_larger,ap,mean_scale_ratio\n";
  for (const auto& r : rows) {
    out << r.alpha << ',' << r.fraction_larger << ',' << r.ap << ','
        << r.mean_scale_ratio << '\n';
  }
  return out.str();
}

}  // namespace boxpref
