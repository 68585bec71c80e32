#include "selfrw/client.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "selfrw/errors.hpp"

namespace selfrw {

using json = nlohmann::json;

namespace {

constexpr const char* kThinkClose = "</think>";

std::pair<std::string, std::string> split_url(const std::string& url) {
  size_t scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw Error(ErrorKind::ConfigInvalid, "endpoint url needs a scheme: " + url);
  }
  size_t path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, "/"};
  return {url.substr(0, path), url.substr(path)};
}

}  // namespace

ChatCompletionsClient::ChatCompletionsClient(EndpointConfig config) : config_(std::move(config)) {
  std::tie(scheme_host_, path_) = split_url(config_.url);
}

std::string ChatCompletionsClient::request_body(const std::vector<ChatMessage>& messages,
                                                const SamplingParams& params) const {
  json body;
  body["model"] = config_.model;
  json message_array = json::array();
  for (const ChatMessage& message : messages) {
    message_array.push_back({{"role", message.role}, {"content", message.content}});
  }
  body["messages"] = std::move(message_array);
  body["temperature"] = params.temperature;
  body["top_p"] = params.top_p;
  body["max_tokens"] = params.max_new_tokens;
  if (params.seed != 0) body["seed"] = params.seed;
  return body.dump();
}

CompletionResult ChatCompletionsClient::complete(const std::vector<ChatMessage>& messages,
                                                 const SamplingParams& params) const {
  httplib::Client http(scheme_host_);
  http.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
  http.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
  http.set_write_timeout(std::chrono::milliseconds(config_.timeout_ms));

  httplib::Headers headers = {{"Content-Type", "application/json"}};
  if (!config_.bearer_env.empty()) {
    const char* token = std::getenv(config_.bearer_env.c_str());
    if (token == nullptr) {
      throw Error(ErrorKind::ConfigInvalid,
                  "bearer token env var not set: " + config_.bearer_env);
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  std::string body = request_body(messages, params);
  std::string last_failure = "no attempt made";
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
    }
    auto response = http.Post(path_, headers, body, "application/json");
    if (!response) {
      last_failure = "transport error: " + httplib::to_string(response.error());
      continue;
    }
    if (response->status == 429 || response->status >= 500) {
      last_failure = "http status " + std::to_string(response->status);
      continue;
    }
    if (response->status != 200) {
      throw Error(ErrorKind::BackendUnavailable,
                  "http status " + std::to_string(response->status) + ": " + response->body);
    }

    json parsed;
    try {
      parsed = json::parse(response->body);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedResponse, std::string("bad response json: ") + e.what());
    }
    if (!parsed.contains("choices") || parsed["choices"].empty() ||
        !parsed["choices"][0].contains("message")) {
      throw Error(ErrorKind::MalformedResponse, "response has no choices[0].message");
    }
    CompletionResult result;
    result.text = parsed["choices"][0]["message"].value("content", "");
    const json& choice = parsed["choices"][0];
    if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
        choice["logprobs"].contains("content")) {
      for (const json& item : choice["logprobs"]["content"]) {
        result.tokens.push_back(item.value("token", ""));
        result.token_logprobs.push_back(item.value("logprob", 0.0));
      }
    }
    return result;
  }
  throw Error(ErrorKind::BackendUnavailable,
              "endpoint " + config_.url + " unreachable after " +
                  std::to_string(config_.max_retries + 1) + " attempts (" + last_failure + ")");
}

// ---------------------------------------------------------------------------
// External backend
// ---------------------------------------------------------------------------

ExternalBackend::ExternalBackend(EndpointConfig config) : client_(std::move(config)) {}

std::vector<ChatMessage> ExternalBackend::messages_for(const GenerationRequest& request) const {
  switch (request.mode) {
    case GenerationMode::Generate:
      return {{"user", request.prompt_text}};
    case GenerationMode::Rewrite:
      return {{"user", build_rewrite_prompt(request.reasoning_text)}};
    case GenerationMode::Continue:
      return {{"user", request.prompt_text},
              {"assistant", "<think>\n" + request.reasoning_text + "\n" + kThinkClose + "\n"}};
  }
  return {};
}

std::pair<std::string, std::string> split_at_think_close(const std::string& text) {
  size_t pos = text.find(kThinkClose);
  if (pos == std::string::npos) return {text, ""};
  return {text.substr(0, pos), text.substr(pos + std::string(kThinkClose).size())};
}

GenerationResult ExternalBackend::run(const GenerationRequest& request) {
  size_t context_chars = request.prompt_text.size() + request.reasoning_text.size();
  if (context_chars > static_cast<size_t>(client_.config().max_context_chars)) {
    throw Error(ErrorKind::ContextOverflow, "request context exceeds the configured limit");
  }

  CompletionResult completion = client_.complete(messages_for(request), request.params);
  GenerationResult result;
  result.context.mode = request.mode;
  result.context.complete = false;
  result.token_logprobs = completion.token_logprobs;
  result.token_ids.assign(completion.token_logprobs.size(), -1);  // server tokens, ids unknown

  switch (request.mode) {
    case GenerationMode::Generate: {
      auto [reasoning, answer] = split_at_think_close(completion.text);
      result.reasoning_text = reasoning;
      result.answer_text = answer;
      break;
    }
    case GenerationMode::Rewrite: {
      auto [reasoning, unused] = split_at_think_close(completion.text);
      result.reasoning_text = reasoning;
      break;
    }
    case GenerationMode::Continue: {
      // Continue results never contain the marker; strip anything the
      // server echoed up to and including it.
      bool has_marker = completion.text.find(kThinkClose) != std::string::npos;
      auto [before, after] = split_at_think_close(completion.text);
      result.answer_text = has_marker ? after : before;
      break;
    }
  }
  return result;
}

std::vector<GenerationResult> ExternalBackend::run_batch(
    const std::vector<GenerationRequest>& requests) {
  int workers = std::max(1, client_.config().parallel_requests);
  if (workers == 1 || requests.size() <= 1) return PolicyBackend::run_batch(requests);

  // Many requests in flight; results slot back in by request index.
  std::vector<GenerationResult> results(requests.size());
  std::vector<std::exception_ptr> failures(requests.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      try {
        results[i] = run(requests[i]);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
  return results;
}

// ---------------------------------------------------------------------------
// External judge
// ---------------------------------------------------------------------------

ExternalJudge::ExternalJudge(EndpointConfig config) : client_(std::move(config)) {
  params = SamplingParams::rewrite_defaults();
  params.temperature = 0.0001;  // judging wants near-greedy replies
  params.max_new_tokens = 256;
}

std::string ExternalJudge::respond(const std::string& prompt) {
  return client_.complete({{"user", prompt}}, params).text;
}

}  // namespace selfrw
