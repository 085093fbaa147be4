#pragma once

#include <string>

#include "ctxdistill/backend.hpp"

namespace ctxdistill::gen {

struct HttpBackendConfig {
  /// Full chat-completions URL, e.g. "http://localhost:8080/v1/chat/completions".
  std::string endpoint;
  std::string model;
  /// Name of the environment variable holding the bearer token; empty sends
  /// no Authorization header. The credential itself never appears in
  /// configuration files.
  std::string api_key_env;
  int max_retries = 3;
  int timeout_ms = 30000;
  /// Backoff before retry r is base * 2^r; kept short in tests.
  int backoff_base_ms = 500;
};

/// Client for a chat-completions-style inference endpoint. Sends the prompt
/// as a single user message with the sampling params mapped onto the
/// standard fields; requests the top-logprobs channel when asked. Retries
/// with exponential backoff on connection errors, HTTP 429 and 5xx.
class HttpBackend final : public GenerationBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  BackendReply complete(Role role, const std::string& prompt,
                        const SamplingParams& params) override;

 private:
  HttpBackendConfig config_;
  std::string scheme_;
  std::string host_port_;
  std::string path_;
  std::string api_key_;
};

/// Builds the request body an HttpBackend sends; exposed so tests can pin
/// the wire format without a server.
std::string chat_completions_body(const std::string& model, const std::string& prompt,
                                  const SamplingParams& params);

/// Parses a chat-completions response body into a reply; throws
/// BackendError on malformed documents.
BackendReply parse_chat_completions_response(const std::string& body);

}  // namespace ctxdistill::gen
