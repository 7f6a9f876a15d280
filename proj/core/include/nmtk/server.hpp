#pragma once

#include <memory>
#include <string>

#include "nmtk/translate.hpp"

namespace httplib {
class Server;
}

namespace nmtk {

struct ServerOptions {
  std::string addr = "127.0.0.1";
  int port = 8080;  // 0 asks the OS for a free port
  int64_t max_batch = 64;
};

// REST front end over a shared TranslationPipeline:
//   POST /translate {"text": [...], "beam": int?, "alpha": real?}
//     -> {"translations": [...]}, order-aligned with the request
//   GET /health -> {"status": "ok", "model": ..., "beam": ...}
// Requests are handled concurrently; the pipeline is never mutated.
class TranslateServer {
 public:
  TranslateServer(std::shared_ptr<const TranslationPipeline> pipeline, const ServerOptions& opt);
  ~TranslateServer();

  // Binds and serves on the calling thread until stop() is called.
  bool run();
  // Split form for embedding: bind() first, read bound_port(), then serve.
  bool bind();
  bool serve_bound();
  int bound_port() const { return port_; }
  bool is_running() const;
  void stop();

 private:
  std::shared_ptr<const TranslationPipeline> pipeline_;
  ServerOptions opt_;
  int port_ = -1;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace nmtk
