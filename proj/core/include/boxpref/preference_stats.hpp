#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace boxpref {

// Options of the scaling study, as area factors.
inline constexpr std::array<double, 5> kScalingOptions = {0.5, 0.67, 1.0, 1.5, 2.0};

enum class PreferenceGroup { kSmaller, kLarger, kOriginal, kNoPreference };

std::string_view to_string(PreferenceGroup group);

/// Index into kScalingOptions for a factor given as number or label such as
/// "0.67" or "2". Throws UnknownOption.
std::size_t scaling_option_index(double factor);
std::size_t scaling_option_index(std::string_view label);

/// Smaller iff every choice is in {0.5, 0.67}; Larger iff every choice is in
/// {1.5, 2.0}; Original iff the choice is exactly {1.0}; NoPreference
/// otherwise. Throws InvalidSelection for an empty set, UnknownOption for a
/// factor outside the study.
PreferenceGroup group_preference(std::span<const double> chosen);
PreferenceGroup group_preference(std::span<const std::string> chosen);

// Binary participant-judgment x option matrix.
class JudgmentTable {
 public:
  JudgmentTable(std::vector<std::string> options,
                std::vector<std::vector<std::uint8_t>> rows);

  std::size_t num_rows() const { return rows_.size(); }
  std::size_t num_options() const { return options_.size(); }
  const std::vector<std::string>& options() const { return options_; }
  const std::vector<std::vector<std::uint8_t>>& rows() const { return rows_; }
  std::uint8_t at(std::size_t row, std::size_t option) const {
    return rows_[row][option];
  }

  std::vector<std::size_t> column_sums() const;
  std::vector<std::size_t> row_sums() const;

 private:
  std::vector<std::string> options_;
  std::vector<std::vector<std::uint8_t>> rows_;
};

/// Header line of option labels, then one 0/1 row per judgment. A leading
/// column named participant, participant_id, judgment or id is skipped.
JudgmentTable parse_judgment_csv(std::string_view text,
                                 std::string_view source = "<memory>");
JudgmentTable load_judgment_csv(const std::filesystem::path& path);

struct CochranResult {
  double q = 0.0;
  int df = 0;
};

/// Q = (k-1) [k sum C_j^2 - (sum C_j)^2] / (k sum R_i - sum R_i^2).
/// Throws DegenerateTable when every row is constant (or N < 2).
CochranResult cochran_q(const JudgmentTable& table);

/// Upper-tail chi-square probability, via the regularized upper incomplete
/// gamma function Q(df/2, x/2).
double p_value_chi2(double statistic, int df);

/// Regularized upper incomplete gamma Q(a, x).
double regularized_gamma_q(double a, double x);

enum class PairwiseMethod {
  kMcNemarAuto,   // exact binomial for b + c <= kExactDiscordantLimit
  kMcNemarExact,
  kMcNemarChi2,   // continuity-corrected, 1 df
};

inline constexpr std::size_t kExactDiscordantLimit = 25;

/// Two-sided McNemar p-value from discordant counts b (first only) and c
/// (second only). Returns 1 when b + c == 0.
double mcnemar_p(std::size_t b, std::size_t c, PairwiseMethod method);

/// min(1, comparisons * raw_p).
double bonferroni(double raw_p, std::size_t comparisons);

struct PairwiseComparison {
  std::size_t first = 0;
  std::size_t second = 0;
  std::size_t only_first = 0;
  std::size_t only_second = 0;
  double raw_p = 1.0;
  double adjusted_p = 1.0;
};

/// All k(k-1)/2 column pairs, in (0,1), (0,2), ..., (k-2,k-1) order.
std::vector<PairwiseComparison> pairwise_posthoc(
    const JudgmentTable& table,
    PairwiseMethod method = PairwiseMethod::kMcNemarAuto);

struct TestReport {
  double statistic = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 1.0;
  std::vector<PairwiseComparison> pairwise;
};

/// Cochran's Q plus post-hoc tests. A table with only constant rows reports
/// Q = 0 and p = 1 instead of failing.
TestReport analyze(const JudgmentTable& table,
                   PairwiseMethod method = PairwiseMethod::kMcNemarAuto);

/// Share of all selections that went to each option, in percent.
std::vector<double> selection_percentages(const JudgmentTable& table);

/// Percent of judgments per preference group. Options must all be scaling
/// factors; every row must select at least one.
std::map<PreferenceGroup, double> group_percentages(const JudgmentTable& table);

bool is_scaling_study(const JudgmentTable& table);

std::string to_json(const TestReport& report, const JudgmentTable& table);
std::string summary_text(const TestReport& report, const JudgmentTable& table);

}  // namespace boxpref
