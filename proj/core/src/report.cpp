#include "boxpref/report.hpp"

#include <sstream>

#include "json.hpp"

namespace boxpref {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json counts_json(const SizeCounts& c) {
  return {{"larger", c.larger}, {"smaller", c.smaller}, {"equal", c.equal}};
}

void counts_row(std::ostringstream& out, const SizeRatioBin& bin,
                std::string_view size, const SizeCounts& c) {
  out << bin.lower << ',' << bin.upper << ',' << size << ',' << c.larger << ','
      << c.smaller << ',' << c.equal << '\n';
}

}  // namespace

std::string to_json(const ApReport& report) {
  ordered_json doc;
  doc["ap"] = report.ap;
  doc["ap50"] = report.ap50 ? json(*report.ap50) : json(nullptr);
  ordered_json per_t = ordered_json::array();
  for (const auto& t : report.per_threshold) {
    per_t.push_back({{"threshold", t.threshold}, {"ap", t.ap}});
  }
  doc["per_threshold"] = per_t;
  ordered_json per_size = ordered_json::object();
  for (const auto& [size, ap] : report.per_size) {
    per_size[std::string(to_string(size))] = ap;
  }
  doc["per_size"] = per_size;
  doc["num_categories"] = report.num_categories;
  return doc.dump(2);
}

std::string to_csv(const ApReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "metric,threshold,value\n";
  out << "ap,0.50:0.95," << report.ap << '\n';
  if (report.ap50) out << "ap50,0.50," << *report.ap50 << '\n';
  for (const auto& t : report.per_threshold) {
    out << "ap_at," << t.threshold << ',' << t.ap << '\n';
  }
  for (const auto& [size, ap] : report.per_size) {
    out << "ap_" << to_string(size) << ",0.50:0.95," << ap << '\n';
  }
  return out.str();
}

std::string to_json(const SizeRatioHistogram& hist) {
  ordered_json doc;
  ordered_json bins = ordered_json::array();
  for (const auto& bin : hist.bins) {
    ordered_json b;
    b["lower"] = bin.lower;
    b["upper"] = bin.upper;
    b["counts"] = counts_json(bin.counts);
    ordered_json by_size = ordered_json::object();
    for (std::size_t s = 0; s < 3; ++s) {
      by_size[std::string(to_string(static_cast<SizeCategory>(s)))] =
          counts_json(bin.by_size[s]);
    }
    b["by_size"] = by_size;
    bins.push_back(b);
  }
  doc["bins"] = bins;
  doc["excluded"] = hist.excluded;
  return doc.dump(2);
}

std::string to_csv(const SizeRatioHistogram& hist) {
  std::ostringstream out;
  out << "iou_lower,iou_upper,size,larger,smaller,equal\n";
  for (const auto& bin : hist.bins) {
    counts_row(out, bin, "all", bin.counts);
    for (std::size_t s = 0; s < 3; ++s) {
      counts_row(out, bin, to_string(static_cast<SizeCategory>(s)),
                 bin.by_size[s]);
    }
  }
  return out.str();
}

}  // namespace boxpref
