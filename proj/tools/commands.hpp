#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "boxpref/detection_eval.hpp"
#include "boxpref/preference_stats.hpp"

namespace boxpref::cli {

struct Range {
  double min = -3.0;
  double max = 3.0;
  double step = 0.05;

  /// "min:max:step".
  static Range parse(const std::string& text);
  std::vector<double> values() const;
};

/// Parses a comma-separated list of reals.
std::vector<double> parse_list(const std::string& text);

void cmd_scale(const std::filesystem::path& gt_path,
               const std::filesystem::path& det_path, double factor,
               const std::filesystem::path& out_path);

ApReport cmd_eval(const std::filesystem::path& gt_path,
                  const std::filesystem::path& det_path,
                  const std::vector<double>& thresholds, std::size_t workers = 1);

SizeRatioHistogram cmd_size_hist(const std::filesystem::path& gt_path,
                                 const std::filesystem::path& det_path);

/// Tidy CSV: alpha,beta,x,value,gradient,smooth_l1,ratio.
std::string cmd_loss_curve(const std::vector<double>& alphas, double beta,
                           const Range& range);

struct SimulateOptions {
  std::vector<double> alphas = {1, 4, 10, 100};
  std::string noise = "uniform:0.2";
  bool independent_axes = false;
  std::uint64_t seed = 0;
  double beta = 0.01;
  double lr = 0.02;
  std::size_t iters = 100000;
};

/// CSV rows alpha,fraction_larger,ap,mean_scale_ratio.
std::string cmd_simulate(const std::filesystem::path& gt_path,
                         const SimulateOptions& options);

struct StudyAnalysis {
  JudgmentTable table;
  TestReport report;
};

/// Judgments from a study-service log (.jsonl) or a 0/1 CSV table.
StudyAnalysis cmd_analyze_study(const std::filesystem::path& judgments_path,
                                const std::string& study_id = {});

/// Entry point shared by the boxpref binary; returns the exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace boxpref::cli
