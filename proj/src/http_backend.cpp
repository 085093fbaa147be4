#include "ctxdistill/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "ctxdistill/errors.hpp"

namespace ctxdistill::gen {
namespace {

struct ParsedUrl {
  std::string scheme;
  std::string host_port;  ///< "host" or "host:port"
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  ParsedUrl out;
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("backend endpoint must be a full URL: " + url);
  }
  out.scheme = url.substr(0, scheme_end);
  if (out.scheme != "http" && out.scheme != "https") {
    throw ConfigError("backend endpoint scheme must be http or https: " + url);
  }
  const std::size_t host_begin = scheme_end + 3;
  const std::size_t path_begin = url.find('/', host_begin);
  if (path_begin == std::string::npos) {
    out.host_port = url.substr(host_begin);
    out.path = "/";
  } else {
    out.host_port = url.substr(host_begin, path_begin - host_begin);
    out.path = url.substr(path_begin);
  }
  if (out.host_port.empty()) throw ConfigError("backend endpoint has no host: " + url);
  return out;
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

}  // namespace

std::string chat_completions_body(const std::string& model, const std::string& prompt,
                                  const SamplingParams& params) {
  nlohmann::json body;
  body["model"] = model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = params.temperature;
  body["max_tokens"] = params.max_tokens;
  body["seed"] = params.seed;
  if (!params.stop.empty()) body["stop"] = params.stop;
  if (params.top_logprobs > 0) {
    body["logprobs"] = true;
    body["top_logprobs"] = params.top_logprobs;
  }
  return body.dump();
}

BackendReply parse_chat_completions_response(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const std::exception& e) {
    throw BackendError(std::string("backend returned malformed JSON: ") + e.what());
  }
  try {
    const auto& choice = doc.at("choices").at(0);
    BackendReply reply;
    reply.text = choice.at("message").at("content").get<std::string>();
    if (choice.contains("logprobs") && !choice.at("logprobs").is_null()) {
      for (const auto& entry : choice.at("logprobs").at("content")) {
        TokenTopLogprobs tok;
        tok.token = entry.at("token").get<std::string>();
        for (const auto& alt : entry.at("top_logprobs")) {
          tok.top.emplace_back(alt.at("token").get<std::string>(),
                               alt.at("logprob").get<double>());
        }
        reply.logprobs.push_back(std::move(tok));
      }
    }
    return reply;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("backend response missing expected fields: ") + e.what());
  }
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const ParsedUrl url = parse_url(config_.endpoint);
  scheme_ = url.scheme;
  host_port_ = url.host_port;
  path_ = url.path;
  if (!config_.api_key_env.empty()) {
    const char* value = std::getenv(config_.api_key_env.c_str());
    if (value == nullptr || *value == '\0') {
      throw ConfigError("environment variable " + config_.api_key_env +
                        " is unset; it must hold the backend API key");
    }
    api_key_ = value;
  }
  if (config_.max_retries < 0) throw ConfigError("backend max_retries must be >= 0");
}

BackendReply HttpBackend::complete(Role /*role*/, const std::string& prompt,
                                   const SamplingParams& params) {
  const std::string body = chat_completions_body(config_.model, prompt, params);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto delay =
          std::chrono::milliseconds(config_.backoff_base_ms) * (1LL << (attempt - 1));
      std::this_thread::sleep_for(delay);
    }
    httplib::Client client(scheme_ + "://" + host_port_);
    client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
    client.set_write_timeout(std::chrono::milliseconds(config_.timeout_ms));

    auto result = client.Post(path_, headers, body, "application/json");
    if (!result) {
      last_error = "connection error: " + httplib::to_string(result.error());
      continue;
    }
    if (retryable_status(result->status)) {
      last_error = "HTTP " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200) {
      throw BackendError("backend request failed with HTTP " + std::to_string(result->status) +
                         ": " + result->body.substr(0, 500));
    }
    return parse_chat_completions_response(result->body);
  }
  throw BackendError("backend unreachable after " + std::to_string(config_.max_retries + 1) +
                     " attempts (" + last_error + ")");
}

}  // namespace ctxdistill::gen
