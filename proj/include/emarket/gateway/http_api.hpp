#pragma once

#include <memory>
#include <string>

#include "emarket/gateway/engine.hpp"

namespace emarket::gateway {

struct ApiError {
  int status = 500;
  std::string code;
  std::string message;

  Json to_json() const { return {{"code", code}, {"message", message}}; }
};

// Maps a module exception to its HTTP status and error envelope.
ApiError map_error(const std::exception& e);

// JSON endpoints under /v1 backed by an Engine. httplib runs handlers on a
// thread pool; all synchronisation is inside the engine's modules.
class HttpApi {
 public:
  explicit HttpApi(Engine& engine);
  ~HttpApi();

  // Binds host:port (port 0 picks a free port) and returns the bound port,
  // or -1 on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool serve();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace emarket::gateway
