#pragma once

// HTTP API under /api/v1 plus static serving of the UI bundle.

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "streetstage/error.hpp"
#include "streetstage/service.hpp"

namespace streetstage::service {

/// HTTP status for a library error code.
int http_status(ErrorCode code);

/// Problem-detail body for an error (type, title, status, detail, code and,
/// for rejected scenes, diagnostics).
nlohmann::json problem_json(const Error& error);

class ApiServer {
 public:
  explicit ApiServer(Service& service, std::filesystem::path ui_dir = {});
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds the socket; port 0 picks a free one. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void listen();
  /// listen() on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace streetstage::service
