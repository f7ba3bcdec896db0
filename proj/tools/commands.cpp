#include "commands.hpp"

#include <cmath>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "boxpref/asymmetric_loss.hpp"
#include "boxpref/coco.hpp"
#include "boxpref/error.hpp"
#include "boxpref/geometry.hpp"
#include "boxpref/report.hpp"
#include "boxpref/study_http.hpp"
#include "boxpref/study_service.hpp"
#include "boxpref/toy_regressor.hpp"

namespace boxpref::cli {

namespace {

double parse_real(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || !std::isfinite(v)) {
    fail(ErrorCode::kInvalidArgument, "not a number: \"" + s + "\"");
  }
  return v;
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    return;
  }
  std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::kIoError, out_path + ": cannot open for writing");
  f << text;
  if (!text.empty() && text.back() != '\n') f << '\n';
  if (!f) fail(ErrorCode::kIoError, out_path + ": write failed");
}

StudyHttpServer* g_server = nullptr;

extern "C" void handle_stop_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

Range Range::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string p;
  while (std::getline(ss, p, ':')) parts.push_back(p);
  if (parts.size() != 3) {
    fail(ErrorCode::kInvalidArgument, "range must be min:max:step, got \"" + text + "\"");
  }
  Range r{parse_real(parts[0]), parse_real(parts[1]), parse_real(parts[2])};
  if (!(r.step > 0.0) || !(r.max >= r.min)) {
    fail(ErrorCode::kInvalidArgument, "range needs max >= min and step > 0");
  }
  return r;
}

std::vector<double> Range::values() const {
  const auto n = static_cast<std::size_t>(std::floor((max - min) / step + 1e-9));
  std::vector<double> out;
  out.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) out.push_back(min + static_cast<double>(i) * step);
  return out;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string p;
  while (std::getline(ss, p, ',')) {
    if (!p.empty()) out.push_back(parse_real(p));
  }
  if (out.empty()) fail(ErrorCode::kInvalidArgument, "empty list \"" + text + "\"");
  return out;
}

void cmd_scale(const std::filesystem::path& gt_path,
               const std::filesystem::path& det_path, double factor,
               const std::filesystem::path& out_path) {
  const DatasetBundle bundle = load_ground_truth(gt_path);
  std::vector<Detection> dets = load_detections(det_path, bundle);
  const ScaleFactor f(factor);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    try {
      dets[i].box = scale_box(dets[i].box, f, bundle.image(dets[i].image_id).size);
    } catch (const Error& e) {
      fail(e.code(), det_path.string() + ": detection " + std::to_string(i) + ": " + e.what());
    }
  }
  write_detections(dets, out_path);
}

ApReport cmd_eval(const std::filesystem::path& gt_path,
                  const std::filesystem::path& det_path,
                  const std::vector<double>& thresholds, std::size_t workers) {
  const DatasetBundle bundle = load_ground_truth(gt_path);
  const auto dets = load_detections(det_path, bundle);
  return evaluate(dets, bundle, thresholds, EvalOptions{workers});
}

SizeRatioHistogram cmd_size_hist(const std::filesystem::path& gt_path,
                                 const std::filesystem::path& det_path) {
  const DatasetBundle bundle = load_ground_truth(gt_path);
  const auto dets = load_detections(det_path, bundle);
  return size_ratio_histogram(dets, bundle);
}

std::string cmd_loss_curve(const std::vector<double>& alphas, double beta,
                           const Range& range) {
  std::ostringstream out;
  out.precision(12);
  out << "alpha,beta,x,value,gradient,smooth_l1,ratio\n";
  for (double alpha : alphas) {
    const AsymmetricLossParams p(alpha, beta);
    for (double x : range.values()) {
      const LossSample s = loss_sample(x, p);
      out << alpha << ',' << beta << ',' << x << ',' << s.value << ',' << s.gradient
          << ',' << smooth_l1(x, beta) << ',';
      if (s.value > 0.0) out << loss_value(-x, p) / s.value;
      out << '\n';
    }
  }
  return out.str();
}

std::string cmd_simulate(const std::filesystem::path& gt_path,
                         const SimulateOptions& options) {
  const DatasetBundle bundle = load_ground_truth(gt_path);
  SimulationConfig cfg;
  cfg.noise = NoiseConfig::parse(options.noise, options.seed);
  cfg.noise.shared_axes = !options.independent_axes;
  cfg.params = AsymmetricLossParams(1.0, options.beta);
  cfg.lr = options.lr;
  cfg.iters = options.iters;
  return sweep_to_csv(sweep_alpha(bundle, options.alphas, cfg));
}

StudyAnalysis cmd_analyze_study(const std::filesystem::path& judgments_path,
                                const std::string& study_id) {
  const std::string ext = judgments_path.extension().string();
  JudgmentTable table = ext == ".jsonl" || ext == ".log"
                            ? export_from_log(judgments_path, study_id).table
                            : load_judgment_csv(judgments_path);
  TestReport report = analyze(table);
  return {std::move(table), std::move(report)};
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"boxpref: bounding-box size preference toolkit"};
  app.require_subcommand(1);

  std::string gt, det, out_path, format, thresholds_text, alpha_text, noise = "uniform:0.2";
  std::string judgments, study_id, range_text = "-3:3:0.05";
  double factor = 1.0;
  double beta = -1.0;
  double lr = 0.02;
  std::size_t iters = 100000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool independent_axes = false;

  auto* scale = app.add_subcommand("scale", "Scale detection boxes about their centers, clipped to the image");
  scale->add_option("--gt", gt, "COCO instances file")->required()->check(CLI::ExistingFile);
  scale->add_option("--det", det, "COCO results file")->required()->check(CLI::ExistingFile);
  scale->add_option("--factor", factor, "Area scaling factor")->required();
  scale->add_option("--out", out_path, "Output results file")->required();

  auto* eval = app.add_subcommand("eval", "AP@[0.5:0.95], AP50 and per-size AP");
  eval->add_option("--gt", gt)->required()->check(CLI::ExistingFile);
  eval->add_option("--det", det)->required()->check(CLI::ExistingFile);
  eval->add_option("--thresholds", thresholds_text, "Comma-separated IoU thresholds (default 0.50:0.05:0.95)");
  eval->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  eval->add_option("--workers", workers, "Evaluation threads");
  eval->add_option("--out", out_path);

  auto* hist = app.add_subcommand("size-hist", "Census of larger/smaller predictions per IoU interval");
  hist->add_option("--gt", gt)->required()->check(CLI::ExistingFile);
  hist->add_option("--det", det)->required()->check(CLI::ExistingFile);
  hist->add_option("--format", format, "csv or json")->check(CLI::IsMember({"json", "csv"}));
  hist->add_option("--out", out_path);

  auto* curve = app.add_subcommand("loss-curve", "Tabulate the asymmetric smooth-L1 loss");
  curve->add_option("--alpha", alpha_text, "Comma-separated alphas")->required();
  curve->add_option("--beta", beta, "Smoothing interval (default 1.0)");
  curve->add_option("--x-range", range_text, "min:max:step");
  curve->add_option("--out", out_path);

  auto* sim = app.add_subcommand("simulate", "Toy regressor sweep over alpha");
  sim->add_option("--gt", gt)->required()->check(CLI::ExistingFile);
  sim->add_option("--alpha", alpha_text, "Comma-separated alphas (default 1,4,10,100)");
  sim->add_option("--beta", beta, "Smoothing interval in relative units (default 0.01)");
  sim->add_option("--noise", noise, "uniform:<half-width> or gaussian:<sigma>");
  sim->add_flag("--independent-axes", independent_axes, "Draw width and height noise independently");
  sim->add_option("--seed", seed);
  sim->add_option("--lr", lr, "Gradient-descent learning rate");
  sim->add_option("--iters", iters, "Gradient-descent iteration cap");
  sim->add_option("--out", out_path);

  auto* study = app.add_subcommand("analyze-study", "Cochran's Q and post-hoc tests on judgments");
  study->add_option("--judgments", judgments, "Service log (.jsonl) or 0/1 CSV table")
      ->required()->check(CLI::ExistingFile);
  study->add_option("--study", study_id, "Study id when reading a service log");
  study->add_option("--out", out_path, "Write the JSON report here");

  std::vector<std::string> configs;
  std::string log_path, host = "127.0.0.1", images, ui_dir;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the preference-study HTTP service");
  serve->add_option("--config", configs, "Study config file(s)")->required()->check(CLI::ExistingFile);
  serve->add_option("--log", log_path, "Append-only judgment log")->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port, "0 picks a free port");
  serve->add_option("--images", images, "Image directory (default: first study's image_root)");
  serve->add_option("--ui-dir", ui_dir, "Static UI files served at /");
  auto* seed_opt = serve->add_option("--seed", seed, "Fixed seed for ids and permutations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*scale) {
      cmd_scale(gt, det, factor, out_path);
    } else if (*eval) {
      const auto thresholds =
          thresholds_text.empty() ? coco_iou_thresholds() : parse_list(thresholds_text);
      const ApReport report = cmd_eval(gt, det, thresholds, workers);
      emit(format == "csv" ? to_csv(report) : to_json(report), out_path, out);
    } else if (*hist) {
      const auto h = cmd_size_hist(gt, det);
      emit(format == "json" ? to_json(h) : to_csv(h), out_path, out);
    } else if (*curve) {
      emit(cmd_loss_curve(parse_list(alpha_text), beta > 0 ? beta : 1.0,
                          Range::parse(range_text)),
           out_path, out);
    } else if (*sim) {
      SimulateOptions opts;
      if (!alpha_text.empty()) opts.alphas = parse_list(alpha_text);
      opts.noise = noise;
      opts.independent_axes = independent_axes;
      opts.seed = seed;
      if (beta > 0) opts.beta = beta;
      opts.lr = lr;
      opts.iters = iters;
      emit(cmd_simulate(gt, opts), out_path, out);
    } else if (*study) {
      const StudyAnalysis a = cmd_analyze_study(judgments, study_id);
      if (!out_path.empty()) emit(to_json(a.report, a.table), out_path, out);
      out << summary_text(a.report, a.table);
    } else if (*serve) {
      std::vector<StudyDefinition> defs;
      for (const auto& c : configs) defs.push_back(load_study_definition(c));
      StudyHttpOptions http;
      http.image_root = images.empty() ? defs.front().image_root : std::filesystem::path(images);
      if (!ui_dir.empty()) http.ui_dir = ui_dir;
      StudyServiceOptions sopts;
      if (seed_opt->count() > 0) sopts.seed = seed;
      StudyService service(std::move(defs), log_path, sopts);
      StudyHttpServer server(service, http);
      const int bound = server.bind(host, port);
      if (bound < 0) fail(ErrorCode::kIoError, "cannot bind " + host + ":" + std::to_string(port));
      out << "listening on " << host << ':' << bound << std::endl;
      g_server = &server;
      std::signal(SIGINT, handle_stop_signal);
      std::signal(SIGTERM, handle_stop_signal);
      server.listen_after_bind();
      g_server = nullptr;
    }
  } catch (const Error& e) {
    err << "boxpref: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "boxpref: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace boxpref::cli
