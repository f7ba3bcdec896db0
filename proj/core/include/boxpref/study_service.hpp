#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "boxpref/geometry.hpp"
#include "boxpref/preference_stats.hpp"

namespace boxpref {

struct ObjectHint {
  std::string category;
  double marker_x = 0.0;
  double marker_y = 0.0;
};

struct CandidateDefinition {
  std::string provenance;  // e.g. "alpha=10"; never sent to participants
  Box box;
};

struct TaskDefinition {
  std::string task_id;
  std::string image_ref;
  ObjectHint hint;
  std::vector<CandidateDefinition> candidates;
};

struct StudyDefinition {
  std::string study_id;
  std::vector<std::string> options;  // provenance labels, table column order
  std::vector<TaskDefinition> tasks;
  std::map<SizeCategory, std::size_t> quotas;
  std::filesystem::path image_root;
};

/// Checks that options are unique and that every task offers each option
/// exactly once. Throws SchemaError.
void validate_study(const StudyDefinition& study);

/// Loads a study config. Tasks are either listed inline ("tasks") or built
/// from a COCO ground-truth file plus one detection file per provenance
/// label ("ground_truth", "candidates", optional "quotas" and "min_iou").
/// Relative paths resolve against the config file's directory.
StudyDefinition load_study_definition(const std::filesystem::path& path);

// What a participant sees: no provenance, candidates in served order.
struct ServedCandidate {
  std::string candidate_id;
  Box box;
};

struct StudyTask {
  std::string study_id;
  std::string task_id;
  std::string serve_id;
  std::string image_ref;
  ObjectHint hint;
  std::vector<ServedCandidate> candidates;
};

std::string to_json(const StudyTask& task);

struct JudgmentSubmission {
  std::string study_id;
  std::string participant_id;
  std::string task_id;
  std::string serve_id;
  std::vector<std::string> selected;  // candidate ids
};

JudgmentSubmission parse_judgment_submission(std::string_view body,
                                             std::string_view study_id);

struct JudgmentRecord {
  std::string study_id;
  std::string participant_id;
  std::string task_id;
  std::string serve_id;
  std::vector<std::string> selected;          // candidate ids
  std::vector<std::string> selected_options;  // provenance labels
  std::vector<std::string> permutation;       // provenance in display order
  std::vector<std::string> options;           // study column order
  std::string timestamp;                      // ISO 8601, UTC
};

struct JudgmentExport {
  JudgmentTable table;
  std::vector<JudgmentRecord> records;
};

std::string to_json(const JudgmentExport& exported);

/// Rebuilds a study's judgment table from a service log without the study
/// definition; each judgment record carries its option list.
JudgmentExport export_from_log(const std::filesystem::path& log_path,
                               std::string_view study_id = {});

// Line-delimited, append-only record log. Each append is written with a
// single write() on an O_APPEND descriptor and fsync'ed before returning.
class AppendLog {
 public:
  explicit AppendLog(std::filesystem::path path);
  ~AppendLog();
  AppendLog(const AppendLog&) = delete;
  AppendLog& operator=(const AppendLog&) = delete;

  void append(std::string_view line);
  const std::filesystem::path& path() const { return path_; }

  /// Complete lines only; a torn final line without '\n' is dropped.
  static std::vector<std::string> read_lines(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

struct StudyServiceOptions {
  // Fixed seed for reproducible ids and permutations; random when unset.
  std::optional<std::uint64_t> seed;
};

class StudyService {
 public:
  StudyService(std::vector<StudyDefinition> studies,
               std::filesystem::path log_path,
               StudyServiceOptions options = {});

  /// First unanswered task of the participant, with a fresh candidate
  /// permutation and fresh opaque ids. The serve is logged before returning.
  /// Throws UnknownStudy, StudyComplete.
  StudyTask next_task(std::string_view participant_id, std::string_view study_id);

  /// Persists the judgment, then acknowledges by returning the stored record.
  /// Throws UnknownStudy, InvalidSelection, DuplicateSubmission.
  JudgmentRecord submit_judgment(const JudgmentSubmission& submission);

  /// Throws UnknownStudy.
  JudgmentExport export_judgments(std::string_view study_id) const;

  const StudyDefinition& study(std::string_view study_id) const;
  std::vector<std::string> study_ids() const;

 private:
  struct Serve {
    std::string study_id;
    std::string participant_id;
    std::string task_id;
    std::vector<std::string> candidate_ids;
    std::vector<std::string> provenance;  // aligned with candidate_ids
  };

  void replay();
  void apply_serve(const std::string& serve_id, Serve serve);
  void apply_judgment(JudgmentRecord record);
  std::string fresh_id(std::size_t hex_chars);

  std::map<std::string, StudyDefinition, std::less<>> studies_;
  AppendLog log_;

  mutable std::mutex mutex_;
  std::mt19937_64 rng_;
  std::map<std::string, Serve> serves_;
  std::set<std::string> used_ids_;
  std::set<std::tuple<std::string, std::string, std::string>> answered_;
  std::map<std::string, std::vector<JudgmentRecord>, std::less<>> judgments_;
};

}  // namespace boxpref
