#pragma once

// Chat-completion client over one JSON POST. Include only where network
// access is wanted: it pulls in cpp-httplib (and OpenSSL for https).

#include <cstdlib>
#include <string>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gridsentry/error.hpp"
#include "gridsentry/llm.hpp"

namespace gridsentry {

/// Scheme+host[:port] and path of an endpoint URL.
struct EndpointUrl {
  std::string origin;
  std::string path;
};

inline EndpointUrl split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || (url.compare(0, scheme, "http") && url.compare(0, scheme, "https")))
    throw Error(Errc::invariant_violation, "endpoint must start with http:// or https://: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

/// Reply text from an OpenAI-style (choices[0].message.content) or
/// Anthropic-style (content[0].text) body; the raw body otherwise.
inline std::string extract_reply_text(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_object()) {
    if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
      const auto& c = j["choices"][0];
      if (c.contains("message") && c["message"].contains("content") &&
          c["message"]["content"].is_string())
        return c["message"]["content"].get<std::string>();
      if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
    }
    if (j.contains("content") && j["content"].is_array() && !j["content"].empty() &&
        j["content"][0].contains("text") && j["content"][0]["text"].is_string())
      return j["content"][0]["text"].get<std::string>();
  }
  return body;
}

inline nlohmann::ordered_json chat_request_body(const ChatClientConfig& cfg, const PromptBundle& p) {
  return {{"model", cfg.model_name},
          {"temperature", 0},
          {"messages",
           {{{"role", "system"}, {"content", p.system_text}},
            {{"role", "user"}, {"content", p.user_text()}}}}};
}

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(ChatClientConfig cfg) : cfg_(std::move(cfg)), url_(split_endpoint(cfg_.endpoint_url)) {
    if (cfg_.model_name.empty()) throw Error(Errc::invariant_violation, "model name is required");
    if (const char* tok = std::getenv(cfg_.token_env.c_str())) token_ = tok;
  }

  std::string complete(const PromptBundle& p) override {
    httplib::Client cli(url_.origin);
    const auto secs = static_cast<time_t>(cfg_.timeout_ms / 1000);
    const auto usecs = static_cast<time_t>((cfg_.timeout_ms % 1000) * 1000);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    auto res = cli.Post(url_.path, headers, chat_request_body(cfg_, p).dump(), "application/json");
    if (!res) throw Error(Errc::io_error, "request failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw Error(Errc::io_error, "endpoint answered HTTP " + std::to_string(res->status));
    return extract_reply_text(res->body);
  }

 private:
  ChatClientConfig cfg_;
  EndpointUrl url_;
  std::string token_;
};

}  // namespace gridsentry
