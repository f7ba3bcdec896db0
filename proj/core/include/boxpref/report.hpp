#pragma once

#include <string>

#include "boxpref/detection_eval.hpp"

namespace boxpref {

// JSON documents and tidy CSV for the evaluation outputs.

std::string to_json(const ApReport& report);
std::string to_csv(const ApReport& report);

std::string to_json(const SizeRatioHistogram& hist);
/// One row per (bin, size) with size "all" for the bin totals.
std::string to_csv(const SizeRatioHistogram& hist);

}  // namespace boxpref
