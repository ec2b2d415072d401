#pragma once

// Live transport for OpenAI-compatible chat and embedding endpoints.
// Include only where OpenSSL is linked.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <string>

#include "toolweave/error.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/io.hpp"

namespace toolweave {

struct HttpTransportConfig {
  std::string endpoint = "https://api.openai.com/v1";
  std::string api_key;
  std::string chat_model = "gpt-4o";
  std::string embedding_model = "text-embedding-3-small";
  int timeout_seconds = 60;
};

/// System instruction sent with each chat role.
inline std::string role_instruction(Role role) {
  switch (role) {
    case Role::Propose:
      return "Given a source and a target tool schema, list every output field of the source that can feed an "
             "input argument of the target. Answer with JSON {\"dependencies\": [{\"source_tool\", "
             "\"target_tool\", \"output_field\", \"input_argument\", \"rationale\", \"confidence\"}]}.";
    case Role::Judge:
      return "Decide whether the candidate dependency is valid for the two schemas. Answer with JSON "
             "{\"verdict\": \"accept\" or \"reject\", \"rationale\": \"...\"}.";
    case Role::Generate:
      return "If the task is extract_entities, answer {\"entities\": [...], \"triples\": [[s, p, o], ...]}. "
             "Otherwise write a tool plan for the query using only the listed tools. Answer with JSON "
             "{\"steps\": [{\"step\", \"tool\", \"arguments\", \"depends_on\"}]}; an argument may be "
             "{\"from_step\": n, \"field\": \"...\"} to use an earlier step's output.";
    case Role::PlanJudge:
      return "Score how well the plan covers the reference plan: 0 none, 1 partial, 2 full. Answer with a single "
             "integer.";
    case Role::Embed: return "";
  }
  return "";
}

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(HttpTransportConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.endpoint.find("://");
    const auto path_start =
        config_.endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) {
      host_ = config_.endpoint;
    } else {
      host_ = config_.endpoint.substr(0, path_start);
      base_path_ = config_.endpoint.substr(path_start);
    }
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  }

  std::string send(const GatewayRequest& request) override {
    if (request.role == Role::Embed) {
      const Json req = Json::parse(request.payload);
      const Json body = {{"model", config_.embedding_model}, {"input", req.at("texts")}};
      const Json resp = post("/embeddings", body);
      Json vectors = Json::array();
      for (const auto& item : resp.at("data")) vectors.push_back(item.at("embedding"));
      return Json{{"vectors", std::move(vectors)}}.dump();
    }
    const Json body = {{"model", config_.chat_model},
                       {"temperature", 0},
                       {"messages",
                        {{{"role", "system"}, {"content", role_instruction(request.role)}},
                         {{"role", "user"}, {"content", request.payload}}}}};
    const Json resp = post("/chat/completions", body);
    return resp.at("choices").at(0).at("message").at("content").get<std::string>();
  }

 private:
  Json post(const std::string& path, const Json& body) {
    httplib::Client client(host_);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    auto res = client.Post(base_path_ + path, headers, body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read || err == httplib::Error::Write) {
        fail(ErrorCode::Timeout, "provider did not answer within " + std::to_string(config_.timeout_seconds) + "s");
      }
      fail(ErrorCode::ProviderHttpError, "status=0 error=" + httplib::to_string(err));
    }
    if (res->status != 200) {
      fail(ErrorCode::ProviderHttpError, "status=" + std::to_string(res->status) + " body=" + res->body);
    }
    try {
      return Json::parse(res->body);
    } catch (const Json::parse_error& e) {
      fail(ErrorCode::GatewayError, std::string("provider returned invalid JSON: ") + e.what());
    }
  }

  HttpTransportConfig config_;
  std::string host_;
  std::string base_path_;
};

}  // namespace toolweave
