#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "boxpref/study_service.hpp"

namespace boxpref {

struct StudyHttpOptions {
  std::filesystem::path image_root;             // served under /images/
  std::optional<std::filesystem::path> ui_dir;  // static files under /
};

// HTTP front end of a StudyService:
//   GET  /studies/{id}/next?participant=...   -> task JSON, or {"complete": true}
//   POST /studies/{id}/judgments               -> 201 {"status": "ok"}
//   GET  /studies/{id}/export                  -> table + raw records
//   GET  /images/{file}
//   GET  /healthz
// Errors are {"error": <code>, "message": ...} with 400 / 404 / 409.
class StudyHttpServer {
 public:
  StudyHttpServer(StudyService& service, StudyHttpOptions options);
  ~StudyHttpServer();
  StudyHttpServer(const StudyHttpServer&) = delete;
  StudyHttpServer& operator=(const StudyHttpServer&) = delete;

  /// Binds the socket; port 0 picks a free port. Returns the bound port or
  /// -1 on failure.
  int bind(const std::string& host, int port);
  /// Serves on the bound socket until stop().
  bool listen_after_bind();
  void stop();
  bool is_running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace boxpref
