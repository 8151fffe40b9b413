#pragma once

#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "llmtd/errors.hpp"
#include "llmtd/llm.hpp"

namespace llmtd {

/// Talks to a completion endpoint: POST {"model", "prompt", "stream": false},
/// read the "response" string from the JSON reply.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(const BackendConfig& cfg)
      : url_(cfg.endpoint_url),
        path_(cfg.endpoint_path),
        model_(cfg.model),
        client_(std::make_unique<httplib::Client>(cfg.endpoint_url)) {
    const auto seconds = std::chrono::milliseconds(cfg.timeout_ms);
    client_->set_connection_timeout(seconds);
    client_->set_read_timeout(seconds);
    client_->set_write_timeout(seconds);
  }

  BackendKind kind() const override { return BackendKind::Http; }
  std::string id() const override { return "http:" + url_ + path_ + "#" + model_; }

  BackendExchange query(const Prompt& prompt) override {
    nlohmann::json body;
    body["model"] = model_;
    body["prompt"] = prompt.rendered;
    body["stream"] = false;

    detail::Stopwatch watch;
    const httplib::Result res = client_->Post(path_, body.dump(), "application/json");
    if (!res) {
      throw Error(ErrorCode::Timeout,
                  "transport failure talking to " + url_ + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw Error(ErrorCode::HttpStatus,
                  url_ + path_ + " answered status " + std::to_string(res->status));
    }
    const nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() || !reply.contains("response") ||
        !reply["response"].is_string()) {
      throw Error(ErrorCode::MalformedResponse,
                  "reply from " + url_ + path_ + " has no \"response\" string");
    }

    BackendExchange ex;
    ex.prompt = prompt;
    ex.response = reply["response"].get<std::string>();
    ex.backend_id = id();
    ex.elapsed_ms = watch.elapsed_ms();
    return ex;
  }

 private:
  std::string url_;
  std::string path_;
  std::string model_;
  std::unique_ptr<httplib::Client> client_;
};

inline std::unique_ptr<Backend> make_backend(const BackendConfig& cfg) {
  switch (cfg.kind) {
    case BackendKind::Http:
      if (cfg.endpoint_url.empty()) {
        throw Error(ErrorCode::InvalidConfig, "http backend needs an endpoint URL");
      }
      return std::make_unique<HttpBackend>(cfg);
    case BackendKind::Scripted:
      return std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(cfg.script_path));
    case BackendKind::Oracle:
      if (cfg.oracle_truth.empty()) {
        throw Error(ErrorCode::InvalidConfig, "oracle backend needs ground-truth templates");
      }
      return std::make_unique<OracleBackend>(cfg.oracle_truth);
  }
  throw Error(ErrorCode::InvalidConfig, "unsupported backend kind");
}

}  // namespace llmtd
