#include "boxpref/study_service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iterator>
#include <sstream>

#include "boxpref/coco.hpp"
#include "boxpref/error.hpp"
#include "json.hpp"

namespace boxpref {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      now.time_since_epoch()) % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms.count()));
  return out;
}

std::vector<std::string> string_list(const json& v, const std::string& ctx) {
  if (!v.is_array()) fail(ErrorCode::kSchemaError, ctx + " must be a list of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) fail(ErrorCode::kSchemaError, ctx + " must be a list of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

Box box_from_json(const json& v, const std::string& ctx) {
  if (!v.is_array() || v.size() != 4) {
    fail(ErrorCode::kSchemaError, ctx + ": box must be [x, y, w, h]");
  }
  std::array<double, 4> b{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number()) fail(ErrorCode::kSchemaError, ctx + ": box entries must be numbers");
    b[i] = v[i].get<double>();
  }
  if (!is_valid_box(b[0], b[1], b[2], b[3])) {
    fail(ErrorCode::kSchemaError, ctx + ": box must have positive extent");
  }
  return Box(b[0], b[1], b[2], b[3]);
}

ordered_json box_to_json(const Box& b) {
  return {b.x_min(), b.y_min(), b.width(), b.height()};
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string get_string(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.contains(key) || !obj.at(key).is_string()) {
    fail(ErrorCode::kSchemaError, ctx + ": missing string \"" + key + "\"");
  }
  return obj.at(key).get<std::string>();
}

std::optional<SizeCategory> parse_size(std::string_view s) {
  if (s == "small") return SizeCategory::kSmall;
  if (s == "medium") return SizeCategory::kMedium;
  if (s == "large") return SizeCategory::kLarge;
  return std::nullopt;
}

std::vector<TaskDefinition> tasks_from_coco(const json& doc,
                                            const std::filesystem::path& base,
                                            std::vector<std::string>& options,
                                            std::map<SizeCategory, std::size_t>& quotas,
                                            const std::string& src) {
  const DatasetBundle bundle =
      load_ground_truth(resolve(base, get_string(doc, "ground_truth", src)));
  if (!doc.contains("candidates") || !doc.at("candidates").is_object()) {
    fail(ErrorCode::kSchemaError, src + ": \"candidates\" must map label -> detection file");
  }
  std::vector<std::pair<std::string, std::vector<Detection>>> sources;
  for (const auto& [label, file] : doc.at("candidates").items()) {
    if (!file.is_string()) {
      fail(ErrorCode::kSchemaError, src + ": candidate file for \"" + label + "\" must be a path");
    }
    sources.emplace_back(label, load_detections(resolve(base, file.get<std::string>()), bundle));
  }
  if (options.empty()) {
    for (const auto& [label, dets] : sources) options.push_back(label);
  }
  const double min_iou = doc.value("min_iou", 0.5);

  std::vector<TaskDefinition> tasks;
  std::map<SizeCategory, std::size_t> taken;
  for (const auto& gt : bundle.ground_truth()) {
    if (!quotas.empty()) {
      const auto q = quotas.find(gt.size_category);
      if (q == quotas.end() || taken[gt.size_category] >= q->second) continue;
    }
    TaskDefinition task;
    task.task_id = "ann-" + std::to_string(gt.annotation_id);
    task.image_ref = bundle.image(gt.image_id).file_name;
    const auto cat = bundle.categories().find(gt.category_id);
    task.hint = {cat->second, gt.box.center_x(), gt.box.center_y()};
    bool complete = true;
    for (const auto& label : options) {
      const auto it = std::find_if(sources.begin(), sources.end(),
                                   [&](const auto& s) { return s.first == label; });
      if (it == sources.end()) {
        fail(ErrorCode::kSchemaError, src + ": option \"" + label + "\" has no candidate file");
      }
      const Detection* best = nullptr;
      double best_iou = min_iou;
      for (const auto& d : it->second) {
        if (d.image_id != gt.image_id || d.category_id != gt.category_id) continue;
        const double v = iou(d.box, gt.box);
        if (v >= best_iou && (!best || v > best_iou)) {
          best = &d;
          best_iou = v;
        }
      }
      if (!best) {
        complete = false;
        break;
      }
      task.candidates.push_back({label, best->box});
    }
    if (!complete) continue;
    ++taken[gt.size_category];
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace

void validate_study(const StudyDefinition& study) {
  const std::string ctx = "study \"" + study.study_id + "\"";
  if (study.study_id.empty()) fail(ErrorCode::kSchemaError, "study_id must not be empty");
  if (study.options.size() < 2) fail(ErrorCode::kSchemaError, ctx + " needs at least 2 options");
  std::set<std::string> opts(study.options.begin(), study.options.end());
  if (opts.size() != study.options.size()) {
    fail(ErrorCode::kSchemaError, ctx + " has duplicate option labels");
  }
  std::set<std::string> ids;
  for (const auto& task : study.tasks) {
    if (!ids.insert(task.task_id).second) {
      fail(ErrorCode::kSchemaError, ctx + ": duplicate task id " + task.task_id);
    }
    std::set<std::string> seen;
    for (const auto& c : task.candidates) {
      if (!opts.contains(c.provenance) || !seen.insert(c.provenance).second) {
        fail(ErrorCode::kSchemaError,
             ctx + ": task " + task.task_id + " has an unknown or repeated option \"" +
                 c.provenance + "\"");
      }
    }
    if (seen.size() != opts.size()) {
      fail(ErrorCode::kSchemaError,
           ctx + ": task " + task.task_id + " does not offer every option");
    }
  }
}

StudyDefinition load_study_definition(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, path.string() + ": cannot open study config");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  const std::string src = path.string();
  const std::filesystem::path base = path.parent_path();
  if (!doc.is_object()) fail(ErrorCode::kSchemaError, src + ": config must be an object");

  StudyDefinition study;
  study.study_id = get_string(doc, "study_id", src);
  if (doc.contains("options")) study.options = string_list(doc.at("options"), src + ": options");
  study.image_root = resolve(base, doc.value("image_root", std::string(".")));
  if (doc.contains("quotas")) {
    for (const auto& [size, n] : doc.at("quotas").items()) {
      const auto cat = parse_size(size);
      if (!cat || !n.is_number_unsigned()) {
        fail(ErrorCode::kSchemaError, src + ": quotas map small/medium/large to counts");
      }
      study.quotas[*cat] = n.get<std::size_t>();
    }
  }

  if (doc.contains("tasks")) {
    const json& tasks = doc.at("tasks");
    if (!tasks.is_array()) fail(ErrorCode::kSchemaError, src + ": tasks must be a list");
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const std::string ctx = src + ": tasks record " + std::to_string(i);
      const json& t = tasks[i];
      TaskDefinition task;
      task.task_id = get_string(t, "task_id", ctx);
      task.image_ref = get_string(t, "image", ctx);
      task.hint.category = t.value("category", std::string());
      if (t.contains("marker")) {
        const json& m = t.at("marker");
        if (!m.is_array() || m.size() != 2 || !m[0].is_number() || !m[1].is_number()) {
          fail(ErrorCode::kSchemaError, ctx + ": marker must be [x, y]");
        }
        task.hint.marker_x = m[0].get<double>();
        task.hint.marker_y = m[1].get<double>();
      }
      if (!t.contains("candidates") || !t.at("candidates").is_object()) {
        fail(ErrorCode::kSchemaError, ctx + ": candidates must map label -> box");
      }
      for (const auto& [label, box] : t.at("candidates").items()) {
        task.candidates.push_back({label, box_from_json(box, ctx + " candidate " + label)});
      }
      if (study.options.empty()) {
        for (const auto& c : task.candidates) study.options.push_back(c.provenance);
      }
      study.tasks.push_back(std::move(task));
    }
  } else {
    study.tasks = tasks_from_coco(doc, base, study.options, study.quotas, src);
  }
  validate_study(study);
  return study;
}

std::string to_json(const StudyTask& task) {
  ordered_json doc;
  doc["study_id"] = task.study_id;
  doc["task_id"] = task.task_id;
  doc["serve_id"] = task.serve_id;
  doc["image"] = task.image_ref;
  doc["object"] = {{"category", task.hint.category},
                   {"marker", {task.hint.marker_x, task.hint.marker_y}}};
  ordered_json cands = ordered_json::array();
  for (const auto& c : task.candidates) {
    cands.push_back({{"candidate_id", c.candidate_id}, {"box", box_to_json(c.box)}});
  }
  doc["candidates"] = cands;
  return doc.dump();
}

JudgmentSubmission parse_judgment_submission(std::string_view body,
                                             std::string_view study_id) {
  json doc;
  try {
    doc = json::parse(body.begin(), body.end());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParseError, std::string("judgment body: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorCode::kParseError, "judgment body must be an object");
  JudgmentSubmission s;
  s.study_id = std::string(study_id);
  s.participant_id = get_string(doc, "participant", "judgment body");
  s.task_id = get_string(doc, "task_id", "judgment body");
  s.serve_id = get_string(doc, "serve_id", "judgment body");
  if (!doc.contains("selected")) fail(ErrorCode::kInvalidSelection, "judgment body has no \"selected\"");
  s.selected = string_list(doc.at("selected"), "judgment body: selected");
  return s;
}

namespace {

ordered_json record_to_json(const JudgmentRecord& r) {
  ordered_json doc;
  doc["type"] = "judgment";
  doc["study_id"] = r.study_id;
  doc["participant_id"] = r.participant_id;
  doc["task_id"] = r.task_id;
  doc["serve_id"] = r.serve_id;
  doc["selected"] = r.selected;
  doc["selected_options"] = r.selected_options;
  doc["permutation"] = r.permutation;
  doc["options"] = r.options;
  doc["timestamp"] = r.timestamp;
  return doc;
}

JudgmentRecord record_from_json(const json& doc, const std::string& ctx) {
  JudgmentRecord r;
  r.study_id = get_string(doc, "study_id", ctx);
  r.participant_id = get_string(doc, "participant_id", ctx);
  r.task_id = get_string(doc, "task_id", ctx);
  r.serve_id = get_string(doc, "serve_id", ctx);
  r.selected = string_list(doc.at("selected"), ctx + ": selected");
  r.selected_options = string_list(doc.at("selected_options"), ctx + ": selected_options");
  r.permutation = string_list(doc.at("permutation"), ctx + ": permutation");
  r.options = string_list(doc.at("options"), ctx + ": options");
  r.timestamp = doc.value("timestamp", std::string());
  return r;
}

JudgmentTable table_for(const std::vector<std::string>& options,
                        const std::vector<JudgmentRecord>& records) {
  std::vector<std::vector<std::uint8_t>> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    std::vector<std::uint8_t> row(options.size(), 0);
    for (const auto& label : r.selected_options) {
      const auto it = std::find(options.begin(), options.end(), label);
      if (it != options.end()) row[static_cast<std::size_t>(it - options.begin())] = 1;
    }
    rows.push_back(std::move(row));
  }
  return JudgmentTable(options, std::move(rows));
}

json parse_log_line(const std::string& line, const std::filesystem::path& path,
                    std::size_t index) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParseError,
         path.string() + ": log record " + std::to_string(index) + ": " + e.what());
  }
}

}  // namespace

std::string to_json(const JudgmentExport& exported) {
  ordered_json doc;
  doc["options"] = exported.table.options();
  ordered_json table = ordered_json::array();
  for (const auto& row : exported.table.rows()) {
    ordered_json r = ordered_json::array();
    for (auto v : row) r.push_back(static_cast<int>(v));
    table.push_back(r);
  }
  doc["table"] = table;
  ordered_json records = ordered_json::array();
  for (const auto& r : exported.records) records.push_back(record_to_json(r));
  doc["records"] = records;
  return doc.dump();
}

JudgmentExport export_from_log(const std::filesystem::path& log_path,
                               std::string_view study_id) {
  const auto lines = AppendLog::read_lines(log_path);
  std::vector<JudgmentRecord> records;
  std::vector<std::string> options;
  std::string chosen(study_id);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json doc = parse_log_line(lines[i], log_path, i);
    if (doc.value("type", std::string()) != "judgment") continue;
    const std::string ctx = log_path.string() + ": log record " + std::to_string(i);
    JudgmentRecord r = record_from_json(doc, ctx);
    if (chosen.empty()) chosen = r.study_id;
    if (r.study_id != chosen) continue;
    if (options.empty()) {
      options = r.options;
    } else if (options != r.options) {
      fail(ErrorCode::kSchemaError, ctx + ": option list changed within the study");
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) {
    fail(ErrorCode::kUnknownStudy,
         log_path.string() + ": no judgments" +
             (chosen.empty() ? std::string() : " for study \"" + chosen + "\""));
  }
  JudgmentTable table = table_for(options, records);
  return {std::move(table), std::move(records)};
}

AppendLog::AppendLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  // A record torn by a crash was never acknowledged; cut it so the next
  // append starts on a fresh line.
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (!text.empty() && text.back() != '\n') {
      const auto nl = text.rfind('\n');
      std::filesystem::resize_file(path_, nl == std::string::npos ? 0 : nl + 1);
    }
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    fail(ErrorCode::kIoError, path_.string() + ": " + std::strerror(errno));
  }
}

AppendLog::~AppendLog() {
  if (fd_ >= 0) ::close(fd_);
}

void AppendLog::append(std::string_view line) {
  std::string buf(line);
  buf.push_back('\n');
  std::size_t written = 0;
  while (written < buf.size()) {
    const ssize_t n = ::write(fd_, buf.data() + written, buf.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::kIoError, path_.string() + ": " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) {
    fail(ErrorCode::kIoError, path_.string() + ": fsync: " + std::strerror(errno));
  }
}

std::vector<std::string> AppendLog::read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) return {};
    fail(ErrorCode::kIoError, path.string() + ": cannot open log");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (true) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) break;
    if (nl > start) lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

StudyService::StudyService(std::vector<StudyDefinition> studies,
                           std::filesystem::path log_path,
                           StudyServiceOptions options)
    : log_(std::move(log_path)) {
  for (auto& s : studies) {
    validate_study(s);
    const std::string id = s.study_id;
    if (!studies_.emplace(id, std::move(s)).second) {
      fail(ErrorCode::kSchemaError, "duplicate study id \"" + id + "\"");
    }
  }
  replay();
  if (options.seed) {
    // Mixing in the replayed volume keeps ids fresh across restarts.
    std::seed_seq seq{static_cast<std::uint32_t>(*options.seed),
                      static_cast<std::uint32_t>(*options.seed >> 32),
                      static_cast<std::uint32_t>(used_ids_.size())};
    rng_.seed(seq);
  } else {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd()};
    rng_.seed(seq);
  }
}

void StudyService::replay() {
  const auto lines = AppendLog::read_lines(log_.path());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json doc = parse_log_line(lines[i], log_.path(), i);
    const std::string ctx = log_.path().string() + ": log record " + std::to_string(i);
    const std::string type = doc.value("type", std::string());
    if (type == "serve") {
      Serve s;
      s.study_id = get_string(doc, "study_id", ctx);
      s.participant_id = get_string(doc, "participant_id", ctx);
      s.task_id = get_string(doc, "task_id", ctx);
      s.candidate_ids = string_list(doc.at("candidate_ids"), ctx);
      s.provenance = string_list(doc.at("permutation"), ctx);
      apply_serve(get_string(doc, "serve_id", ctx), std::move(s));
    } else if (type == "judgment") {
      apply_judgment(record_from_json(doc, ctx));
    } else {
      fail(ErrorCode::kParseError, ctx + ": unknown record type \"" + type + "\"");
    }
  }
}

void StudyService::apply_serve(const std::string& serve_id, Serve serve) {
  used_ids_.insert(serve_id);
  for (const auto& c : serve.candidate_ids) used_ids_.insert(c);
  serves_[serve_id] = std::move(serve);
}

void StudyService::apply_judgment(JudgmentRecord record) {
  answered_.emplace(record.study_id, record.participant_id, record.task_id);
  judgments_[record.study_id].push_back(std::move(record));
}

std::string StudyService::fresh_id(std::size_t hex_chars) {
  static constexpr char kHex[] = "0123456789abcdef";
  while (true) {
    std::string id;
    while (id.size() < hex_chars) {
      std::uint64_t v = rng_();
      for (int i = 0; i < 16 && id.size() < hex_chars; ++i, v >>= 4) {
        id.push_back(kHex[v & 0xF]);
      }
    }
    if (used_ids_.insert(id).second) return id;
  }
}

const StudyDefinition& StudyService::study(std::string_view study_id) const {
  const auto it = studies_.find(study_id);
  if (it == studies_.end()) {
    fail(ErrorCode::kUnknownStudy, "unknown study \"" + std::string(study_id) + "\"");
  }
  return it->second;
}

std::vector<std::string> StudyService::study_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, s] : studies_) out.push_back(id);
  return out;
}

StudyTask StudyService::next_task(std::string_view participant_id,
                                  std::string_view study_id) {
  const StudyDefinition& def = study(study_id);
  if (participant_id.empty()) {
    fail(ErrorCode::kInvalidArgument, "participant id must not be empty");
  }
  const std::string participant(participant_id);

  std::lock_guard lock(mutex_);
  const auto pending = std::find_if(def.tasks.begin(), def.tasks.end(), [&](const auto& t) {
    return !answered_.contains({def.study_id, participant, t.task_id});
  });
  if (pending == def.tasks.end()) {
    fail(ErrorCode::kStudyComplete,
         "participant \"" + participant + "\" has answered every task");
  }

  std::vector<std::size_t> order(pending->candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng_);

  StudyTask task;
  task.study_id = def.study_id;
  task.task_id = pending->task_id;
  task.image_ref = pending->image_ref;
  task.hint = pending->hint;
  Serve serve{def.study_id, participant, pending->task_id, {}, {}};
  const std::string serve_id = fresh_id(16);
  task.serve_id = serve_id;
  for (std::size_t idx : order) {
    const auto& cand = pending->candidates[idx];
    std::string cid = fresh_id(12);
    task.candidates.push_back({cid, cand.box});
    serve.candidate_ids.push_back(std::move(cid));
    serve.provenance.push_back(cand.provenance);
  }

  ordered_json rec;
  rec["type"] = "serve";
  rec["study_id"] = serve.study_id;
  rec["serve_id"] = serve_id;
  rec["participant_id"] = serve.participant_id;
  rec["task_id"] = serve.task_id;
  rec["candidate_ids"] = serve.candidate_ids;
  rec["permutation"] = serve.provenance;
  rec["timestamp"] = now_iso8601();
  log_.append(rec.dump());
  apply_serve(serve_id, std::move(serve));
  return task;
}

JudgmentRecord StudyService::submit_judgment(const JudgmentSubmission& submission) {
  const StudyDefinition& def = study(submission.study_id);

  std::lock_guard lock(mutex_);
  if (answered_.contains({def.study_id, submission.participant_id, submission.task_id})) {
    fail(ErrorCode::kDuplicateSubmission,
         "participant \"" + submission.participant_id + "\" already answered task \"" +
             submission.task_id + "\"");
  }
  const auto it = serves_.find(submission.serve_id);
  if (it == serves_.end() || it->second.study_id != def.study_id ||
      it->second.participant_id != submission.participant_id ||
      it->second.task_id != submission.task_id) {
    fail(ErrorCode::kInvalidSelection,
         "serve \"" + submission.serve_id + "\" does not belong to this participant and task");
  }
  const Serve& serve = it->second;
  if (submission.selected.empty()) {
    fail(ErrorCode::kInvalidSelection, "at least one candidate must be selected");
  }

  JudgmentRecord record;
  record.study_id = def.study_id;
  record.participant_id = submission.participant_id;
  record.task_id = submission.task_id;
  record.serve_id = submission.serve_id;
  record.permutation = serve.provenance;
  record.options = def.options;
  std::set<std::string> seen;
  for (const auto& cid : submission.selected) {
    const auto pos = std::find(serve.candidate_ids.begin(), serve.candidate_ids.end(), cid);
    if (pos == serve.candidate_ids.end() || !seen.insert(cid).second) {
      fail(ErrorCode::kInvalidSelection,
           "candidate \"" + cid + "\" is unknown or selected twice");
    }
    record.selected.push_back(cid);
    record.selected_options.push_back(
        serve.provenance[static_cast<std::size_t>(pos - serve.candidate_ids.begin())]);
  }
  record.timestamp = now_iso8601();

  log_.append(record_to_json(record).dump());
  apply_judgment(record);
  return record;
}

JudgmentExport StudyService::export_judgments(std::string_view study_id) const {
  const StudyDefinition& def = study(study_id);
  std::lock_guard lock(mutex_);
  std::vector<JudgmentRecord> records;
  if (const auto it = judgments_.find(def.study_id); it != judgments_.end()) {
    records = it->second;
  }
  JudgmentTable table = table_for(def.options, records);
  return {std::move(table), std::move(records)};
}

}  // namespace boxpref
