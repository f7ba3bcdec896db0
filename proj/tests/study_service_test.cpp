#include "boxpref/study_service.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "boxpref/error.hpp"
#include "boxpref/study_http.hpp"
#include "httplib.h"
#include "json.hpp"
#include "study_fixtures.hpp"
#include "test_support.hpp"

namespace boxpref {
namespace {

using testing::choose;
using testing::kLossOptions;
using testing::loss_study;
using testing::TempDir;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

std::size_t count_lines_with(const std::filesystem::path& log, const std::string& needle) {
  std::size_t n = 0;
  for (const auto& line : AppendLog::read_lines(log)) n += line.find(needle) != std::string::npos;
  return n;
}

TEST(StudyServiceTest, FreshParticipantGetsFirstTask) {
  TempDir dir;
  StudyService svc({loss_study(3)}, dir / "log.jsonl");
  const StudyTask t = svc.next_task("p1", "loss");
  EXPECT_EQ(t.task_id, "obj-0");
  ASSERT_EQ(t.candidates.size(), 4u);
  std::set<std::string> ids;
  for (const auto& c : t.candidates) ids.insert(c.candidate_id);
  EXPECT_EQ(ids.size(), 4u);
  const std::string json = to_json(t);
  for (const auto& label : kLossOptions) EXPECT_EQ(json.find(label), std::string::npos) << label;
  EXPECT_EQ(json.find("fixed"), std::string::npos);
  EXPECT_EQ(json.find("alpha"), std::string::npos);
}

TEST(StudyServiceTest, RepeatedServeRandomizesAndRecords) {
  TempDir dir;
  StudyService svc({loss_study(2)}, dir / "log.jsonl", {.seed = 4});
  const StudyTask a = svc.next_task("p1", "loss");
  const StudyTask b = svc.next_task("p1", "loss");
  EXPECT_EQ(a.task_id, b.task_id);
  EXPECT_NE(a.serve_id, b.serve_id);
  EXPECT_NE(a.candidates[0].candidate_id, b.candidates[0].candidate_id);
  EXPECT_EQ(count_lines_with(dir / "log.jsonl", "\"serve\""), 2u);
  // either serve can be answered
  svc.submit_judgment(choose(a, "p1", {"alpha=10"}));
  EXPECT_EQ(svc.next_task("p1", "loss").task_id, "obj-1");
}

TEST(StudyServiceTest, CompletesAfterAllTasks) {
  TempDir dir;
  StudyService svc({loss_study(2)}, dir / "log.jsonl");
  for (int i = 0; i < 2; ++i) svc.submit_judgment(choose(svc.next_task("p", "loss"), "p", {"alpha=1"}));
  EXPECT_EQ(code_of([&] { svc.next_task("p", "loss"); }), ErrorCode::kStudyComplete);
  EXPECT_EQ(svc.next_task("q", "loss").task_id, "obj-0");
}

TEST(StudyServiceTest, SubmissionErrors) {
  TempDir dir;
  StudyService svc({loss_study(2)}, dir / "log.jsonl");
  const StudyTask t = svc.next_task("p", "loss");
  auto empty = choose(t, "p", {});
  EXPECT_EQ(code_of([&] { svc.submit_judgment(empty); }), ErrorCode::kInvalidSelection);
  auto bogus = choose(t, "p", {"alpha=1"});
  bogus.selected = {"not-an-id"};
  EXPECT_EQ(code_of([&] { svc.submit_judgment(bogus); }), ErrorCode::kInvalidSelection);
  auto twice = choose(t, "p", {"alpha=1", "alpha=1"});
  EXPECT_EQ(code_of([&] { svc.submit_judgment(twice); }), ErrorCode::kInvalidSelection);
  auto stolen = choose(t, "other", {"alpha=1"});
  EXPECT_EQ(code_of([&] { svc.submit_judgment(stolen); }), ErrorCode::kInvalidSelection);
  auto unknown = choose(t, "p", {"alpha=1"});
  unknown.study_id = "nope";
  EXPECT_EQ(code_of([&] { svc.submit_judgment(unknown); }), ErrorCode::kUnknownStudy);
  EXPECT_EQ(code_of([&] { svc.next_task("p", "nope"); }), ErrorCode::kUnknownStudy);
  EXPECT_EQ(code_of([&] { svc.export_judgments("nope"); }), ErrorCode::kUnknownStudy);

  svc.submit_judgment(choose(t, "p", {"alpha=1"}));
  EXPECT_EQ(code_of([&] { svc.submit_judgment(choose(t, "p", {"alpha=10"})); }),
            ErrorCode::kDuplicateSubmission);
  EXPECT_EQ(svc.export_judgments("loss").records.size(), 1u);
}

TEST(StudyServiceTest, ExportBuildsTable) {
  TempDir dir;
  StudyService svc({loss_study(1)}, dir / "log.jsonl");
  svc.submit_judgment(choose(svc.next_task("a", "loss"), "a", {"alpha=1"}));
  svc.submit_judgment(choose(svc.next_task("b", "loss"), "b", {"alpha=1"}));
  svc.submit_judgment(choose(svc.next_task("c", "loss"), "c", {"alpha=10", "alpha=100"}));
  const JudgmentExport e = svc.export_judgments("loss");
  EXPECT_EQ(e.table.options(), kLossOptions);
  ASSERT_EQ(e.table.num_rows(), 3u);
  EXPECT_EQ(e.table.rows()[0], (std::vector<std::uint8_t>{1, 0, 0, 0}));
  EXPECT_EQ(e.table.rows()[1], (std::vector<std::uint8_t>{1, 0, 0, 0}));
  EXPECT_EQ(e.table.rows()[2], (std::vector<std::uint8_t>{0, 1, 1, 0}));
  EXPECT_EQ(e.records[2].selected_options, (std::vector<std::string>{"alpha=10", "alpha=100"}));
  EXPECT_EQ(e.records[2].permutation.size(), 4u);
  EXPECT_FALSE(e.records[0].timestamp.empty());
}

TEST(StudyServiceTest, ExportFromLogMatchesInProcess) {
  TempDir dir;
  StudyService svc({loss_study(3)}, dir / "log.jsonl", {.seed = 8});
  const std::vector<std::vector<std::string>> picks = {
      {"alpha=10"}, {"alpha=1"}, {"alpha=10", "fixed-1.5"}, {"alpha=100"}, {"alpha=10"}};
  for (std::size_t p = 0; p < 5; ++p) {
    const std::string who = "p" + std::to_string(p);
    for (int t = 0; t < 3; ++t) {
      svc.submit_judgment(choose(svc.next_task(who, "loss"), who, picks[(p + t) % picks.size()]));
    }
  }
  const JudgmentExport live = svc.export_judgments("loss");
  const JudgmentExport file = export_from_log(dir / "log.jsonl", "loss");
  EXPECT_EQ(file.table.rows(), live.table.rows());
  EXPECT_EQ(file.table.options(), live.table.options());
  EXPECT_EQ(cochran_q(file.table).q, cochran_q(live.table).q);
  EXPECT_EQ(to_json(file), to_json(live));
}

TEST(StudyServiceTest, SurvivesRestart) {
  TempDir dir;
  std::string before;
  StudyTask pending;
  {
    StudyService svc({loss_study(3)}, dir / "log.jsonl", {.seed = 1});
    svc.submit_judgment(choose(svc.next_task("p", "loss"), "p", {"alpha=10"}));
    svc.submit_judgment(choose(svc.next_task("q", "loss"), "q", {"alpha=1", "alpha=100"}));
    pending = svc.next_task("p", "loss");
    before = to_json(svc.export_judgments("loss"));
  }
  StudyService svc({loss_study(3)}, dir / "log.jsonl", {.seed = 1});
  EXPECT_EQ(to_json(svc.export_judgments("loss")), before);
  EXPECT_EQ(svc.next_task("p", "loss").task_id, "obj-1");
  // a serve issued before the restart can still be answered
  svc.submit_judgment(choose(pending, "p", {"fixed-1.5"}));
  EXPECT_EQ(code_of([&] { svc.submit_judgment(choose(pending, "p", {"alpha=1"})); }),
            ErrorCode::kDuplicateSubmission);
  // ids stay unique even with the same seed
  const StudyTask fresh = svc.next_task("r", "loss");
  EXPECT_NE(fresh.serve_id, pending.serve_id);
}

TEST(StudyServiceTest, TornTailIsDiscarded) {
  TempDir dir;
  {
    StudyService svc({loss_study(2)}, dir / "log.jsonl");
    svc.submit_judgment(choose(svc.next_task("p", "loss"), "p", {"alpha=10"}));
  }
  {
    std::ofstream out(dir / "log.jsonl", std::ios::app | std::ios::binary);
    out << R"({"type":"judgment","study_id":"lo)";
  }
  {
    StudyService svc({loss_study(2)}, dir / "log.jsonl");
    EXPECT_EQ(svc.export_judgments("loss").records.size(), 1u);
    svc.submit_judgment(choose(svc.next_task("p", "loss"), "p", {"alpha=1"}));
  }
  StudyService svc({loss_study(2)}, dir / "log.jsonl");
  EXPECT_EQ(svc.export_judgments("loss").records.size(), 2u);
}

TEST(StudyServiceTest, PermutationsAreBalanced) {
  TempDir dir;
  StudyService svc({loss_study(1)}, dir / "log.jsonl", {.seed = 99});
  std::vector<std::vector<int>> counts(4, std::vector<int>(4, 0));
  const int serves = 1000;
  for (int i = 0; i < serves; ++i) {
    const StudyTask t = svc.next_task("p", "loss");
    for (std::size_t pos = 0; pos < 4; ++pos) {
      const auto o = static_cast<std::size_t>((t.candidates[pos].box.width() - 20.0) / 6.0);
      ++counts[o][pos];
    }
  }
  for (const auto& row : counts) {
    for (int c : row) EXPECT_NEAR(c / static_cast<double>(serves), 0.25, 0.03);
  }
}

TEST(StudyServiceTest, ValidatesDefinitions) {
  TempDir dir;
  StudyDefinition missing = loss_study(1);
  missing.tasks[0].candidates.pop_back();
  EXPECT_EQ(code_of([&] { StudyService({missing}, dir / "a.jsonl"); }), ErrorCode::kSchemaError);
  EXPECT_EQ(code_of([&] { StudyService({loss_study(1), loss_study(2)}, dir / "b.jsonl"); }),
            ErrorCode::kSchemaError);
}

TEST(StudyDefinitionTest, LoadsInlineTasks) {
  TempDir dir;
  testing::write_text(dir / "study.json", R"({
    "study_id": "scale",
    "options": ["0.5", "1.0", "2.0"],
    "image_root": "imgs",
    "tasks": [
      {"task_id": "t1", "image": "a.jpg", "category": "cat", "marker": [5, 6],
       "candidates": {"0.5": [1, 1, 2, 2], "1.0": [0, 0, 4, 4], "2.0": [0, 0, 6, 6]}}
    ]})");
  const StudyDefinition s = load_study_definition(dir / "study.json");
  EXPECT_EQ(s.study_id, "scale");
  EXPECT_EQ(s.options, (std::vector<std::string>{"0.5", "1.0", "2.0"}));
  ASSERT_EQ(s.tasks.size(), 1u);
  EXPECT_EQ(s.tasks[0].hint.marker_y, 6.0);
  EXPECT_EQ(s.image_root, dir.path() / "imgs");
}

TEST(StudyDefinitionTest, BuildsTasksFromCoco) {
  TempDir dir;
  const DatasetBundle b = testing::synthetic_bundle(30, 2, 1, 20.0, 150.0);
  testing::write_text(dir / "gt.json", testing::to_coco_json(b));
  for (double f : {1.0, 1.5}) {
    std::vector<Detection> dets = testing::perfect_detections(b);
    for (auto& d : dets) d.box = scale_box(d.box, ScaleFactor(f), b.image(d.image_id).size);
    write_detections(dets, dir / ("det" + std::to_string(static_cast<int>(f * 10)) + ".json"));
  }
  testing::write_text(dir / "study.json", R"({
    "study_id": "coco",
    "ground_truth": "gt.json",
    "candidates": {"orig": "det10.json", "x1.5": "det15.json"},
    "quotas": {"small": 2, "medium": 2, "large": 2}})");
  const StudyDefinition s = load_study_definition(dir / "study.json");
  EXPECT_EQ(s.options, (std::vector<std::string>{"orig", "x1.5"}));
  std::map<SizeCategory, int> per_size;
  for (const auto& t : s.tasks) {
    EXPECT_EQ(t.candidates.size(), 2u);
    EXPECT_EQ(t.task_id.rfind("ann-", 0), 0u);
    const auto id = std::stoll(t.task_id.substr(4));
    ++per_size[b.ground_truth()[static_cast<std::size_t>(id - 1)].size_category];
  }
  for (const auto& [size, n] : per_size) EXPECT_LE(n, 2);
  EXPECT_EQ(code_of([&] { load_study_definition(dir / "absent.json"); }), ErrorCode::kIoError);
}

TEST(JudgmentSubmissionTest, Parse) {
  const auto s = parse_judgment_submission(
      R"({"participant": "p", "task_id": "t", "serve_id": "s", "selected": ["a", "b"]})", "loss");
  EXPECT_EQ(s.study_id, "loss");
  EXPECT_EQ(s.selected, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(code_of([] { parse_judgment_submission("{", "x"); }), ErrorCode::kParseError);
}

class StudyHttpTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::filesystem::create_directories(dir_ / "images");
    testing::write_text(dir_ / "images" / "img0.jpg", "JPEGDATA");
    testing::write_text(dir_ / "secret.txt", "nope");
    service_ = std::make_unique<StudyService>(std::vector<StudyDefinition>{loss_study(2)},
                                              dir_ / "log.jsonl");
    server_ = std::make_unique<StudyHttpServer>(*service_, StudyHttpOptions{dir_ / "images", {}});
    port_ = server_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_->stop();
    if (thread_.joinable()) thread_.join();
  }

  nlohmann::json next(const std::string& participant) {
    auto res = client_->Get("/studies/loss/next?participant=" + participant);
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    return nlohmann::json::parse(res->body);
  }

  httplib::Result post(const nlohmann::json& task, const std::string& participant,
                       std::vector<std::string> selected) {
    const nlohmann::json body = {{"participant", participant},
                                 {"task_id", task["task_id"]},
                                 {"serve_id", task["serve_id"]},
                                 {"selected", selected}};
    return client_->Post("/studies/loss/judgments", body.dump(), "application/json");
  }

  TempDir dir_;
  std::unique_ptr<StudyService> service_;
  std::unique_ptr<StudyHttpServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(StudyHttpTest, FullRoundTrip) {
  const auto t0 = next("p");
  EXPECT_EQ(t0["task_id"], "obj-0");
  ASSERT_EQ(t0["candidates"].size(), 4u);
  for (const auto& label : kLossOptions) EXPECT_EQ(t0.dump().find(label), std::string::npos);

  const std::string first = t0["candidates"][0]["candidate_id"];
  auto res = post(t0, "p", {first});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);

  auto dup = post(t0, "p", {first});
  EXPECT_EQ(dup->status, 409);

  const auto t1 = next("p");
  EXPECT_EQ(t1["task_id"], "obj-1");
  auto empty = post(t1, "p", {});
  EXPECT_EQ(empty->status, 400);
  EXPECT_EQ(nlohmann::json::parse(empty->body)["error"], "InvalidSelection");
  ASSERT_EQ(post(t1, "p", {t1["candidates"][1]["candidate_id"], t1["candidates"][2]["candidate_id"]})->status,
            201);
  EXPECT_EQ(next("p"), nlohmann::json({{"complete", true}}));

  auto exp = client_->Get("/studies/loss/export");
  ASSERT_TRUE(exp);
  EXPECT_EQ(exp->status, 200);
  const auto doc = nlohmann::json::parse(exp->body);
  EXPECT_EQ(doc["options"], kLossOptions);
  ASSERT_EQ(doc["table"].size(), 2u);
  int ones = 0;
  for (const auto& row : doc["table"]) {
    for (int v : row) ones += v;
  }
  EXPECT_EQ(ones, 3);
  EXPECT_EQ(to_json(service_->export_judgments("loss")), exp->body);
}

TEST_F(StudyHttpTest, ErrorsAndImages) {
  EXPECT_EQ(client_->Get("/studies/other/next?participant=p")->status, 404);
  EXPECT_EQ(client_->Get("/studies/other/export")->status, 404);
  EXPECT_EQ(client_->Post("/studies/loss/judgments", "{", "application/json")->status, 400);

  auto img = client_->Get("/images/img0.jpg");
  ASSERT_TRUE(img);
  EXPECT_EQ(img->status, 200);
  EXPECT_EQ(img->body, "JPEGDATA");
  EXPECT_EQ(img->get_header_value("Content-Type"), "image/jpeg");
  EXPECT_EQ(client_->Get("/images/missing.jpg")->status, 404);
  EXPECT_EQ(client_->Get("/images/..%2Fsecret.txt")->status, 404);
  EXPECT_EQ(client_->Get("/healthz")->body, "ok");
}

}  // namespace
}  // namespace boxpref
