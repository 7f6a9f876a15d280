#include "nmtk/server.hpp"

#include <httplib.h>

#include <json.hpp>

namespace nmtk {

using nlohmann::json;

namespace {

void fail(httplib::Response& res, int code, const std::string& msg) {
  res.status = code;
  res.set_content(json{{"error", msg}}.dump(), "application/json");
}

}  // namespace

TranslateServer::TranslateServer(std::shared_ptr<const TranslationPipeline> pipeline,
                                 const ServerOptions& opt)
    : pipeline_(std::move(pipeline)), opt_(opt), http_(std::make_unique<httplib::Server>()) {
  if (!pipeline_) throw ConfigError("server: a translation pipeline is required");
  if (opt_.max_batch < 1) throw ConfigError("server: max batch must be positive");

  http_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    json body{{"status", "ok"},
              {"model", pipeline_->model_name()},
              {"beam", pipeline_->options().beam_size}};
    res.set_content(body.dump(), "application/json");
  });

  http_->Post("/translate", [this](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("text") || !body["text"].is_array()) {
      fail(res, 400, "body must be a JSON object with a \"text\" array");
      return;
    }
    std::vector<std::string> lines;
    for (const auto& item : body["text"]) {
      if (!item.is_string()) {
        fail(res, 400, "\"text\" entries must be strings");
        return;
      }
      lines.push_back(item.get<std::string>());
    }
    int64_t beam = pipeline_->options().beam_size;
    double alpha = pipeline_->options().alpha;
    if (body.contains("beam")) {
      if (!body["beam"].is_number_integer() || body["beam"].get<int64_t>() < 1) {
        fail(res, 400, "\"beam\" must be a positive integer");
        return;
      }
      beam = body["beam"].get<int64_t>();
    }
    if (body.contains("alpha")) {
      if (!body["alpha"].is_number() || body["alpha"].get<double>() < 0.0) {
        fail(res, 400, "\"alpha\" must be a nonnegative number");
        return;
      }
      alpha = body["alpha"].get<double>();
    }
    if (static_cast<int64_t>(lines.size()) > opt_.max_batch) {
      fail(res, 413,
           "batch of " + std::to_string(lines.size()) + " sentences exceeds the cap of " +
               std::to_string(opt_.max_batch));
      return;
    }
    try {
      json out{{"translations", pipeline_->translate(lines, beam, alpha)}};
      res.set_content(out.dump(), "application/json");
    } catch (const std::exception& e) {
      fail(res, 500, e.what());
    }
  });
}

TranslateServer::~TranslateServer() {
  if (http_ && http_->is_running()) http_->stop();
}

bool TranslateServer::bind() {
  if (opt_.port == 0) {
    int p = http_->bind_to_any_port(opt_.addr);
    if (p <= 0) return false;
    port_ = p;
    return true;
  }
  if (!http_->bind_to_port(opt_.addr, opt_.port)) return false;
  port_ = opt_.port;
  return true;
}

bool TranslateServer::serve_bound() { return http_->listen_after_bind(); }

bool TranslateServer::run() { return bind() && serve_bound(); }

bool TranslateServer::is_running() const { return http_->is_running(); }

void TranslateServer::stop() { http_->stop(); }

}  // namespace nmtk
