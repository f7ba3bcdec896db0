#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "boxpref/asymmetric_loss.hpp"
#include "boxpref/coco.hpp"
#include "boxpref/detection_eval.hpp"

namespace boxpref {

inline constexpr double kFitGradientTolerance = 1e-6;

struct ScalarFit {
  double value = 0.0;
  std::size_t iterations = 0;
  double gradient = 0.0;  // mean gradient at `value`
};

/// Full-batch gradient descent with a fixed learning rate on
/// mean_i loss_value(w - targets[i]), starting from the mean of the targets.
/// Stops once |mean gradient| < kFitGradientTolerance; throws NonConvergence
/// (with the final gradient in the message) if `iters` steps are not enough.
ScalarFit fit_scalar(std::span<const double> targets,
                     const AsymmetricLossParams& params, double lr,
                     std::size_t iters);

// Zero-mean relative noise on box width and height.
struct NoiseConfig {
  enum class Distribution { kUniform, kGaussian };

  Distribution distribution = Distribution::kUniform;
  double scale = 0.2;  // half-width for uniform, sigma for gaussian
  std::uint64_t seed = 0;
  // One relative scale error per object applied to both width and height.
  // When false, width and height draw independently.
  bool shared_axes = true;

  /// Parses "uniform:0.2" or "gaussian:0.1".
  static NoiseConfig parse(std::string_view text, std::uint64_t seed);
};

struct SimulationConfig {
  NoiseConfig noise;
  AsymmetricLossParams params{1.0, 0.01};  // beta in relative units
  double lr = 0.02;
  std::size_t iters = 100000;
};

struct SizeBreakdown {
  std::size_t count = 0;
  double fraction_larger = 0.0;
  double mean_scale_ratio = 0.0;
};

struct RegressionOutcome {
  // Learned relative size bias: prediction = gt * (1 + noise + offset).
  double width_offset = 0.0;
  double height_offset = 0.0;
  double fraction_larger = 0.0;  // predicted area > gt area
  double fraction_wider = 0.0;
  double fraction_taller = 0.0;
  double mean_scale_ratio = 0.0;  // mean predicted_area / gt_area
  std::map<SizeCategory, SizeBreakdown> per_size;
};

struct SimulationResult {
  RegressionOutcome outcome;
  ApReport ap;
  std::vector<Detection> detections;
};

/// Simulates a detector whose width/height estimates carry noise and whose
/// size bias is learned under the asymmetric loss, then scores the simulated
/// detections with `evaluate`.
SimulationResult simulate_detector(const DatasetBundle& bundle,
                                   const SimulationConfig& config);

struct SweepRow {
  double alpha = 1.0;
  double fraction_larger = 0.0;
  double ap = 0.0;
  double mean_scale_ratio = 0.0;
};

/// Runs simulate_detector once per alpha with identical noise draws.
std::vector<SweepRow> sweep_alpha(const DatasetBundle& bundle,
                                  std::span<const double> alphas,
                                  const SimulationConfig& base);

std::string sweep_to_csv(std::span<const SweepRow> rows);

}  // namespace boxpref
