// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>

#include "httplib.h"
#include "semedit/intent.hpp"

namespace semedit {

HttpChatClient::HttpChatClient(std::string url, std::string key, std::string model, double timeout_s)
    : url_(std::move(url)), key_(std::move(key)), model_(std::move(model)), timeout_s_(timeout_s) {
  if (url_.rfind("http://", 0) != 0) throw ConfigError("llm endpoint must be an http:// URL: " + url_);
}

std::unique_ptr<HttpChatClient> HttpChatClient::from_env() {
  const char* url = std::getenv("SEMEDIT_LLM_URL");
  if (!url || !*url) return nullptr;
  const char* key = std::getenv("SEMEDIT_LLM_KEY");
  const char* model = std::getenv("SEMEDIT_LLM_MODEL");
  return std::make_unique<HttpChatClient>(url, key ? key : "", model ? model : "default");
}

std::string HttpChatClient::complete(const std::string& system, const std::string& user) {
  const std::string rest = url_.substr(7);
  const auto slash = rest.find('/');
  const std::string host = rest.substr(0, slash);
  const std::string path = slash == std::string::npos ? "/" : rest.substr(slash);

  httplib::Client cli("http://" + host);
  const auto secs = static_cast<time_t>(timeout_s_);
  cli.set_connection_timeout(secs, 0);
  cli.set_read_timeout(secs, 0);
  httplib::Headers headers;
  if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);

  nlohmann::json body;
  body["model"] = model_;
  body["temperature"] = 0;
  body["messages"] = {{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}};
  const auto res = cli.Post(path, headers, body.dump(), "application/json");
  if (!res) throw IoError("llm request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw IoError("llm endpoint returned HTTP " + std::to_string(res->status));
  const auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded()) throw IoError("llm response is not JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw IoError("llm response lacks choices[0].message.content");
  }
}

}  // namespace semedit
