#pragma once

#include <optional>
#include <string>
#include <vector>

#include "selfrw/judge.hpp"
#include "selfrw/policy.hpp"

namespace selfrw {

/// Connection settings for one chat-completions-style endpoint.
struct EndpointConfig {
  std::string url;         // e.g. http://host:port/v1/chat/completions
  std::string model;
  std::string bearer_env;  // name of the env var holding the bearer token; empty = no auth
  int timeout_ms = 30000;
  int max_retries = 2;
  int parallel_requests = 1;
  int max_context_chars = 1 << 20;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct CompletionResult {
  std::string text;
  std::vector<double> token_logprobs;  // empty when the server sends none
  std::vector<std::string> tokens;
};

/// Minimal client for the wire contract: POST {model, messages, temperature,
/// top_p, max_tokens, seed?}; the reply must carry the generated text and may
/// carry per-token logprobs. Retries transport errors, 429 and 5xx with a
/// short backoff, then throws BackendUnavailable.
class ChatCompletionsClient {
 public:
  explicit ChatCompletionsClient(EndpointConfig config);

  CompletionResult complete(const std::vector<ChatMessage>& messages,
                            const SamplingParams& params) const;

  /// Request body for one call; exposed for tests and debugging.
  std::string request_body(const std::vector<ChatMessage>& messages,
                           const SamplingParams& params) const;

  const EndpointConfig& config() const { return config_; }

 private:
  EndpointConfig config_;
  std::string scheme_host_;
  std::string path_;
};

/// Rollout/analysis-only backend over an external inference server. Results
/// carry no complete context descriptor, so they cannot flow into gradient
/// computation. Continuation requests use the assistant-prefill convention:
/// the think block is sent as the final assistant message for the server to
/// extend.
class ExternalBackend : public PolicyBackend {
 public:
  explicit ExternalBackend(EndpointConfig config);

  std::string name() const override { return "external"; }
  bool supports(GenerationMode) const override { return true; }
  GenerationResult run(const GenerationRequest& request) override;
  std::vector<GenerationResult> run_batch(const std::vector<GenerationRequest>& requests) override;

  std::vector<ChatMessage> messages_for(const GenerationRequest& request) const;

 private:
  ChatCompletionsClient client_;
};

/// Judge endpoint speaking the same protocol with its own configuration.
class ExternalJudge : public JudgeBackend {
 public:
  explicit ExternalJudge(EndpointConfig config);

  std::string name() const override { return "external-judge"; }
  std::string respond(const std::string& prompt) override;

  /// Sampling settings used for judge calls; deterministic by default.
  SamplingParams params;

 private:
  ChatCompletionsClient client_;
};

/// Splits the reply text of a generate-style call at the first think-close
/// marker into (reasoning, answer).
std::pair<std::string, std::string> split_at_think_close(const std::string& text);

}  // namespace selfrw
