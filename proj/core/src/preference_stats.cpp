#include "boxpref/preference_stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "boxpref/error.hpp"
#include "json.hpp"

namespace boxpref {

namespace {

constexpr double kFactorTolerance = 1e-9;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Series for P(a, x); valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x); valid for x >= a + 1.
double gamma_q_continued_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon();
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

std::string_view to_string(PreferenceGroup group) {
  switch (group) {
    case PreferenceGroup::kSmaller: return "smaller";
    case PreferenceGroup::kLarger: return "larger";
    case PreferenceGroup::kOriginal: return "original";
    case PreferenceGroup::kNoPreference: return "no_preference";
  }
  return "unknown";
}

std::size_t scaling_option_index(double factor) {
  for (std::size_t i = 0; i < kScalingOptions.size(); ++i) {
    if (std::abs(kScalingOptions[i] - factor) < kFactorTolerance) return i;
  }
  std::ostringstream msg;
  msg << "scaling factor " << factor << " is not one of 0.5, 0.67, 1.0, 1.5, 2.0";
  fail(ErrorCode::kUnknownOption, msg.str());
}

std::size_t scaling_option_index(std::string_view label) {
  const std::string s = trim(label);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) {
    fail(ErrorCode::kUnknownOption, "option \"" + s + "\" is not a scaling factor");
  }
  return scaling_option_index(v);
}

namespace {

PreferenceGroup group_from_mask(unsigned mask) {
  constexpr unsigned kSmall = 0b00011;
  constexpr unsigned kOriginal = 0b00100;
  constexpr unsigned kLarge = 0b11000;
  if (mask == 0) fail(ErrorCode::kInvalidSelection, "selection set is empty");
  if ((mask & ~kSmall) == 0) return PreferenceGroup::kSmaller;
  if ((mask & ~kLarge) == 0) return PreferenceGroup::kLarger;
  if (mask == kOriginal) return PreferenceGroup::kOriginal;
  return PreferenceGroup::kNoPreference;
}

}  // namespace

PreferenceGroup group_preference(std::span<const double> chosen) {
  unsigned mask = 0;
  for (double f : chosen) mask |= 1u << scaling_option_index(f);
  return group_from_mask(mask);
}

PreferenceGroup group_preference(std::span<const std::string> chosen) {
  unsigned mask = 0;
  for (const auto& label : chosen) mask |= 1u << scaling_option_index(label);
  return group_from_mask(mask);
}

JudgmentTable::JudgmentTable(std::vector<std::string> options,
                             std::vector<std::vector<std::uint8_t>> rows)
    : options_(std::move(options)), rows_(std::move(rows)) {
  if (options_.size() < 2) {
    fail(ErrorCode::kInvalidArgument, "a judgment table needs at least 2 options");
  }
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].size() != options_.size()) {
      fail(ErrorCode::kInvalidArgument,
           "judgment row " + std::to_string(i) + " has " +
               std::to_string(rows_[i].size()) + " cells, expected " +
               std::to_string(options_.size()));
    }
    for (auto v : rows_[i]) {
      if (v > 1) {
        fail(ErrorCode::kInvalidArgument,
             "judgment row " + std::to_string(i) + " has a non-binary cell");
      }
    }
  }
}

std::vector<std::size_t> JudgmentTable::column_sums() const {
  std::vector<std::size_t> sums(options_.size(), 0);
  for (const auto& r : rows_) {
    for (std::size_t j = 0; j < r.size(); ++j) sums[j] += r[j];
  }
  return sums;
}

std::vector<std::size_t> JudgmentTable::row_sums() const {
  std::vector<std::size_t> sums;
  sums.reserve(rows_.size());
  for (const auto& r : rows_) {
    std::size_t s = 0;
    for (auto v : r) s += v;
    sums.push_back(s);
  }
  return sums;
}

JudgmentTable parse_judgment_csv(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<std::uint8_t>> rows;
  bool skip_first = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (header.empty()) {
      header = std::move(cells);
      const std::string& first = header.front();
      skip_first = first == "participant" || first == "participant_id" ||
                   first == "judgment" || first == "id";
      if (skip_first) header.erase(header.begin());
      continue;
    }
    if (skip_first && !cells.empty()) cells.erase(cells.begin());
    if (cells.size() != header.size()) {
      fail(ErrorCode::kParseError, std::string(source) + ": line " +
                                       std::to_string(line_no) +
                                       ": wrong number of columns");
    }
    std::vector<std::uint8_t> row;
    for (const auto& c : cells) {
      if (c != "0" && c != "1") {
        fail(ErrorCode::kParseError, std::string(source) + ": line " +
                                         std::to_string(line_no) +
                                         ": cells must be 0 or 1");
      }
      row.push_back(c == "1" ? 1 : 0);
    }
    rows.push_back(std::move(row));
  }
  if (header.empty()) {
    fail(ErrorCode::kParseError, std::string(source) + ": missing header line");
  }
  return JudgmentTable(std::move(header), std::move(rows));
}

JudgmentTable load_judgment_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, path.string() + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_judgment_csv(buf.str(), path.string());
}

CochranResult cochran_q(const JudgmentTable& table) {
  if (table.num_rows() < 2) {
    fail(ErrorCode::kDegenerateTable, "Cochran's Q needs at least 2 judgments");
  }
  const double k = static_cast<double>(table.num_options());
  double sum_c = 0.0;
  double sum_c2 = 0.0;
  for (auto c : table.column_sums()) {
    sum_c += static_cast<double>(c);
    sum_c2 += static_cast<double>(c) * static_cast<double>(c);
  }
  double sum_r = 0.0;
  double sum_r2 = 0.0;
  for (auto r : table.row_sums()) {
    sum_r += static_cast<double>(r);
    sum_r2 += static_cast<double>(r) * static_cast<double>(r);
  }
  const double denom = k * sum_r - sum_r2;
  if (denom == 0.0) {
    fail(ErrorCode::kDegenerateTable,
         "every judgment selects all or none of the options");
  }
  const double q = (k - 1.0) * (k * sum_c2 - sum_c * sum_c) / denom;
  return {std::max(q, 0.0), static_cast<int>(table.num_options()) - 1};
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) {
    fail(ErrorCode::kInvalidArgument, "incomplete gamma needs a > 0 and x >= 0");
  }
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return std::clamp(1.0 - gamma_p_series(a, x), 0.0, 1.0);
  return std::clamp(gamma_q_continued_fraction(a, x), 0.0, 1.0);
}

double p_value_chi2(double statistic, int df) {
  if (df < 1) fail(ErrorCode::kInvalidArgument, "chi-square needs df >= 1");
  if (std::isnan(statistic) || statistic < 0.0) {
    fail(ErrorCode::kInvalidArgument, "chi-square statistic must be >= 0");
  }
  return regularized_gamma_q(0.5 * df, 0.5 * statistic);
}

double mcnemar_p(std::size_t b, std::size_t c, PairwiseMethod method) {
  const std::size_t n = b + c;
  if (n == 0) return 1.0;
  const bool exact = method == PairwiseMethod::kMcNemarExact ||
                     (method == PairwiseMethod::kMcNemarAuto &&
                      n <= kExactDiscordantLimit);
  if (exact) {
    // Two-sided binomial test with p = 1/2.
    const std::size_t lo = std::min(b, c);
    const double dn = static_cast<double>(n);
    double tail = 0.0;
    for (std::size_t i = 0; i <= lo; ++i) {
      const double di = static_cast<double>(i);
      tail += std::exp(std::lgamma(dn + 1.0) - std::lgamma(di + 1.0) -
                       std::lgamma(dn - di + 1.0) - dn * std::log(2.0));
    }
    return std::min(1.0, 2.0 * tail);
  }
  const double diff = std::max(
      0.0, std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0);
  return p_value_chi2(diff * diff / static_cast<double>(n), 1);
}

double bonferroni(double raw_p, std::size_t comparisons) {
  return std::min(1.0, static_cast<double>(comparisons) * raw_p);
}

std::vector<PairwiseComparison> pairwise_posthoc(const JudgmentTable& table,
                                                 PairwiseMethod method) {
  const std::size_t k = table.num_options();
  const std::size_t m = k * (k - 1) / 2;
  std::vector<PairwiseComparison> out;
  out.reserve(m);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      PairwiseComparison pc;
      pc.first = a;
      pc.second = b;
      for (const auto& row : table.rows()) {
        if (row[a] && !row[b]) ++pc.only_first;
        if (!row[a] && row[b]) ++pc.only_second;
      }
      pc.raw_p = mcnemar_p(pc.only_first, pc.only_second, method);
      pc.adjusted_p = bonferroni(pc.raw_p, m);
      out.push_back(pc);
    }
  }
  return out;
}

TestReport analyze(const JudgmentTable& table, PairwiseMethod method) {
  TestReport report;
  report.degrees_of_freedom = static_cast<int>(table.num_options()) - 1;
  try {
    const CochranResult cq = cochran_q(table);
    report.statistic = cq.q;
    report.p_value = p_value_chi2(cq.q, cq.df);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateTable) throw;
    report.statistic = 0.0;
    report.p_value = 1.0;
  }
  report.pairwise = pairwise_posthoc(table, method);
  return report;
}

std::vector<double> selection_percentages(const JudgmentTable& table) {
  const auto sums = table.column_sums();
  double total = 0.0;
  for (auto s : sums) total += static_cast<double>(s);
  std::vector<double> out(sums.size(), 0.0);
  if (total == 0.0) return out;
  for (std::size_t j = 0; j < sums.size(); ++j) {
    out[j] = 100.0 * static_cast<double>(sums[j]) / total;
  }
  return out;
}

bool is_scaling_study(const JudgmentTable& table) {
  try {
    for (const auto& o : table.options()) scaling_option_index(o);
  } catch (const Error&) {
    return false;
  }
  return true;
}

std::map<PreferenceGroup, double> group_percentages(const JudgmentTable& table) {
  std::vector<std::size_t> index;
  for (const auto& o : table.options()) index.push_back(scaling_option_index(o));
  std::map<PreferenceGroup, double> out = {
      {PreferenceGroup::kSmaller, 0.0},
      {PreferenceGroup::kLarger, 0.0},
      {PreferenceGroup::kOriginal, 0.0},
      {PreferenceGroup::kNoPreference, 0.0},
  };
  if (table.num_rows() == 0) return out;
  for (const auto& row : table.rows()) {
    unsigned mask = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j]) mask |= 1u << index[j];
    }
    out[group_from_mask(mask)] += 1.0;
  }
  for (auto& [g, v] : out) v = 100.0 * v / static_cast<double>(table.num_rows());
  return out;
}

std::string to_json(const TestReport& report, const JudgmentTable& table) {
  nlohmann::ordered_json doc;
  doc["test"] = "cochran_q";
  doc["statistic"] = report.statistic;
  doc["degrees_of_freedom"] = report.degrees_of_freedom;
  doc["p_value"] = report.p_value;
  doc["judgments"] = table.num_rows();
  const auto pct = selection_percentages(table);
  nlohmann::ordered_json options = nlohmann::ordered_json::array();
  const auto sums = table.column_sums();
  for (std::size_t j = 0; j < table.num_options(); ++j) {
    options.push_back({{"option", table.options()[j]},
                       {"selected", sums[j]},
                       {"percent_of_selections", pct[j]}});
  }
  doc["options"] = options;
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& pc : report.pairwise) {
    pairs.push_back({{"first", table.options()[pc.first]},
                     {"second", table.options()[pc.second]},
                     {"only_first", pc.only_first},
                     {"only_second", pc.only_second},
                     {"raw_p", pc.raw_p},
                     {"adjusted_p", pc.adjusted_p}});
  }
  doc["pairwise"] = pairs;
  doc["pairwise_method"] = "mcnemar+bonferroni";
  if (is_scaling_study(table)) {
    nlohmann::ordered_json groups = nlohmann::ordered_json::object();
    for (const auto& [g, v] : group_percentages(table)) {
      groups[std::string(to_string(g))] = v;
    }
    doc["group_percentages"] = groups;
  }
  return doc.dump(2);
}

std::string summary_text(const TestReport& report, const JudgmentTable& table) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "judgments: " << table.num_rows() << '\n';
  out << "Cochran's Q = " << report.statistic << " (df "
      << report.degrees_of_freedom << "), p = " << report.p_value << '\n';
  out.precision(1);
  const auto pct = selection_percentages(table);
  out << "selections (%):\n";
  for (std::size_t j = 0; j < table.num_options(); ++j) {
    out << "  " << table.options()[j] << ": " << pct[j] << '\n';
  }
  if (is_scaling_study(table)) {
    out << "preference groups (%):\n";
    for (const auto& [g, v] : group_percentages(table)) {
      out << "  " << to_string(g) << ": " << v << '\n';
    }
  }
  out.precision(4);
  out << "pairwise McNemar, Bonferroni-adjusted p:\n";
  for (const auto& pc : report.pairwise) {
    out << "  " << table.options()[pc.first] << " vs "
        << table.options()[pc.second] << ": " << pc.adjusted_p << '\n';
  }
  return out.str();
}

}  // namespace boxpref
