#pragma once

// HTTP VLM backend. Request body: {"parts":[{"type":"text","text":...} |
// {"type":"image","data_b64":...}]}; response body: {"text": ...}.
// Auth comes from ATOMNAV_VLM_KEY, default endpoint from ATOMNAV_VLM_URL.

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "atomnav/errors.hpp"
#include "atomnav/ports.hpp"
#include "atomnav/serde.hpp"

namespace atomnav {

struct HttpVlmConfig {
  std::string url;
  std::string api_key;  // empty = no Authorization header
  int retries = 2;
  int timeout_seconds = 60;
};

class HttpVlm : public VlmClient {
 public:
  explicit HttpVlm(HttpVlmConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.url.find("://");
    std::string rest = scheme_end == std::string::npos
                           ? cfg_.url
                           : cfg_.url.substr(scheme_end + 3);
    const std::string scheme =
        scheme_end == std::string::npos ? "http" : cfg_.url.substr(0, scheme_end);
    const auto slash = rest.find('/');
    host_ = scheme + "://" + (slash == std::string::npos ? rest : rest.substr(0, slash));
    path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  }

  VlmResponse chat(const VlmRequest& request) override {
    json body;
    body["parts"] = json::array();
    for (const auto& part : request.parts) {
      if (part.kind == VlmPart::kText)
        body["parts"].push_back({{"type", "text"}, {"text", part.data}});
      else
        body["parts"].push_back(
            {{"type", "image"}, {"data_b64", base64_encode(part.data)}});
    }
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      httplib::Client client(host_);
      client.set_connection_timeout(cfg_.timeout_seconds);
      client.set_read_timeout(cfg_.timeout_seconds);
      httplib::Headers headers;
      if (!cfg_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + cfg_.api_key);
      auto res = client.Post(path_, headers, payload, "application/json");
      if (!res) {
        last_error = "connection failed: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "http status " + std::to_string(res->status);
        continue;
      }
      try {
        const json j = json::parse(res->body);
        return {j.at("text").get<std::string>()};
      } catch (const json::exception& e) {
        last_error = std::string("bad response body: ") + e.what();
      }
    }
    throw Transport(last_error, cfg_.retries);
  }

 private:
  HttpVlmConfig cfg_;
  std::string host_;
  std::string path_;
};

/// Build a client from an endpoint string: "replay:<dir>" or "http:<url>".
/// Oracle backends are simulator-owned; see simulator.hpp.
inline std::unique_ptr<VlmClient> make_vlm(const std::string& endpoint) {
  if (endpoint.rfind("replay:", 0) == 0)
    return std::make_unique<ReplayVlm>(ReplayStore::load(endpoint.substr(7)));
  if (endpoint.rfind("http:", 0) == 0) {
    HttpVlmConfig cfg;
    cfg.url = endpoint.substr(5);
    if (cfg.url.empty()) {
      const char* env = std::getenv("ATOMNAV_VLM_URL");
      if (!env) throw Error("http VLM needs a URL or ATOMNAV_VLM_URL");
      cfg.url = env;
    }
    if (const char* key = std::getenv("ATOMNAV_VLM_KEY")) cfg.api_key = key;
    return std::make_unique<HttpVlm>(cfg);
  }
  throw Error("unknown VLM endpoint: " + endpoint);
}

}  // namespace atomnav
