#include "boxpref/study_http.hpp"

#include <fstream>
#include <sstream>

#include "boxpref/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace boxpref {

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownStudy:
    case ErrorCode::kUnknownTask:
      return 404;
    case ErrorCode::kDuplicateSubmission:
      return 409;
    case ErrorCode::kIoError:
      return 500;
    default:
      return 400;
  }
}

void send_error(httplib::Response& res, const Error& e) {
  nlohmann::json body = {{"error", std::string(to_string(e.code()))},
                         {"message", e.what()}};
  res.status = status_for(e.code());
  res.set_content(body.dump(), "application/json");
}

std::string content_type_for(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

bool safe_file_name(const std::string& name) {
  return !name.empty() && name.find("..") == std::string::npos &&
         name.find('/') == std::string::npos && name.find('\\') == std::string::npos;
}

}  // namespace

struct StudyHttpServer::Impl {
  StudyService& service;
  StudyHttpOptions options;
  httplib::Server server;

  Impl(StudyService& s, StudyHttpOptions o) : service(s), options(std::move(o)) {
    server.Get(R"(/studies/([^/]+)/next)", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
      try {
        const std::string participant = req.get_param_value("participant");
        const StudyTask task = service.next_task(participant, req.matches[1].str());
        res.set_content(to_json(task), "application/json");
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kStudyComplete) {
          res.set_content(R"({"complete":true})", "application/json");
        } else {
          send_error(res, e);
        }
      }
    });

    server.Post(R"(/studies/([^/]+)/judgments)", [this](const httplib::Request& req,
                                                        httplib::Response& res) {
      try {
        const auto submission = parse_judgment_submission(req.body, req.matches[1].str());
        service.submit_judgment(submission);
        res.status = 201;
        res.set_content(R"({"status":"ok"})", "application/json");
      } catch (const Error& e) {
        send_error(res, e);
      }
    });

    server.Get(R"(/studies/([^/]+)/export)", [this](const httplib::Request& req,
                                                     httplib::Response& res) {
      try {
        res.set_content(to_json(service.export_judgments(req.matches[1].str())),
                        "application/json");
      } catch (const Error& e) {
        send_error(res, e);
      }
    });

    server.Get(R"(/images/([^/]+))", [this](const httplib::Request& req,
                                             httplib::Response& res) {
      const std::string name = req.matches[1].str();
      const auto path = options.image_root / name;
      std::ifstream in(path, std::ios::binary);
      if (!safe_file_name(name) || !in) {
        res.status = 404;
        res.set_content(R"({"error":"NotFound"})", "application/json");
        return;
      }
      std::ostringstream buf;
      buf << in.rdbuf();
      res.set_content(buf.str(), content_type_for(path));
    });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });

    if (options.ui_dir) server.set_mount_point("/", options.ui_dir->string());
  }
};

StudyHttpServer::StudyHttpServer(StudyService& service, StudyHttpOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

StudyHttpServer::~StudyHttpServer() { stop(); }

int StudyHttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool StudyHttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void StudyHttpServer::stop() { impl_->server.stop(); }

bool StudyHttpServer::is_running() const { return impl_->server.is_running(); }

}  // namespace boxpref
