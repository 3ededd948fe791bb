#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <map>
#include <memory>
#include <random>
#include <semaphore>
#include <string>
#include <thread>

#include "json.hpp"

#include "framing/provider.hpp"
#include "framing/wire.hpp"

namespace framing {

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Connection-level failure (refused, reset, timed out). Always retriable.
class TransportError : public Error {
 public:
  using Error::Error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const std::map<std::string, std::string>& headers) = 0;
};

// Maps a non-2xx reply onto the provider error taxonomy.
inline ProviderError classify_http_failure(int status, const std::string& body) {
  if (status == 429 || status >= 500) {
    return ProviderError(ProviderErrorKind::Retriable, "HTTP " + std::to_string(status));
  }
  auto mentions = [&](const char* needle) { return body.find(needle) != std::string::npos; };
  if (mentions("context_length_exceeded") || mentions("maximum context length")) {
    return ProviderError(ProviderErrorKind::Permanent, "context overflow (HTTP " + std::to_string(status) + ")");
  }
  if (mentions("logprobs") || mentions("echo") || mentions("not supported") || status == 404) {
    return CapabilityError("endpoint rejected the request shape (HTTP " + std::to_string(status) + ")");
  }
  return ProviderError(ProviderErrorKind::Permanent, "HTTP " + std::to_string(status));
}

// OpenAI-compatible remote model. In-flight requests are bounded by
// max_parallel; transport errors, 429 and 5xx are retried with exponential
// backoff plus jitter.
class RemoteProvider final : public Provider {
 public:
  RemoteProvider(ProviderConfig config, std::unique_ptr<Transport> transport)
      : config_(std::move(config)), transport_(std::move(transport)), slots_(std::max(1, config_.max_parallel)) {
    validate(config_);
    if (!config_.api_key_env.empty()) {
      const char* key = std::getenv(config_.api_key_env.c_str());
      if (key == nullptr || *key == '\0') {
        throw ConfigError("environment variable " + config_.api_key_env + " is not set (API key for provider '" +
                          config_.name + "')");
      }
      auth_header_ = std::string("Bearer ") + key;
    }
  }

  std::string model() const override { return config_.model_name; }
  std::string endpoint() const override { return config_.endpoint_url; }
  int max_parallel() const override { return config_.max_parallel; }
  const ProviderConfig& config() const { return config_; }

 protected:
  ScoredSequence do_score_text(std::string_view text) override {
    const std::string prompt(text);
    auto [resp, attempts] = post_with_retry("/v1/completions", wire::completions_echo_request(model(), prompt));
    auto seq = wire::parse_completions_echo(resp, prompt);
    stats_.record(seq.usage, attempts);
    return seq;
  }

  FirstTokenDistribution do_first_token_logprobs(const ChatTranscript& messages, int top_n) override {
    auto [resp, attempts] = post_with_retry("/v1/chat/completions", wire::chat_logprobs_request(model(), messages, top_n));
    auto dist = wire::parse_chat_logprobs(resp);
    stats_.record(dist.usage, attempts);
    return dist;
  }

  Completion do_generate(const ChatTranscript& messages, double temperature) override {
    auto [resp, attempts] =
        post_with_retry("/v1/chat/completions", wire::chat_generate_request(model(), messages, temperature));
    auto out = wire::parse_chat_generate(resp);
    stats_.record(out.usage, attempts);
    return out;
  }

  EmbeddingBatch do_embed(std::span<const std::string> texts) override {
    std::vector<std::string> input(texts.begin(), texts.end());
    auto [resp, attempts] = post_with_retry("/v1/embeddings", wire::embeddings_request(model(), input));
    auto batch = wire::parse_embeddings(resp, input.size());
    stats_.record(batch.usage, attempts);
    return batch;
  }

 private:
  std::pair<nlohmann::json, int> post_with_retry(const std::string& path, const nlohmann::json& body) {
    std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
    if (!auth_header_.empty()) headers["Authorization"] = auth_header_;
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
      if (attempt > 1) backoff(attempt - 1);
      HttpResponse resp;
      try {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<>& s;
          ~Release() { s.release(); }
        } release{slots_};
        resp = transport_->post(path, payload, headers);
      } catch (const TransportError& e) {
        last_error = e.what();
        continue;
      }
      if (resp.status >= 200 && resp.status < 300) {
        try {
          return {nlohmann::json::parse(resp.body), attempt};
        } catch (const nlohmann::json::exception& e) {
          throw ProviderError(ProviderErrorKind::Permanent, std::string("malformed JSON response: ") + e.what());
        }
      }
      auto err = classify_http_failure(resp.status, resp.body);
      if (err.kind() != ProviderErrorKind::Retriable) throw err;
      last_error = err.what();
    }
    stats_.attempts += config_.retry.max_attempts;
    throw ProviderError(ProviderErrorKind::Retriable, path + " failed after " +
                                                         std::to_string(config_.retry.max_attempts) +
                                                         " attempts: " + last_error);
  }

  void backoff(int retry_index) {
    const int base = config_.retry.base_backoff_ms;
    if (base <= 0) return;
    thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
    const auto jitter = static_cast<int>(jitter_rng() % static_cast<std::uint64_t>(base));
    const long delay = static_cast<long>(base) * (1L << std::min(retry_index - 1, 10)) + jitter;
    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
  }

  ProviderConfig config_;
  std::unique_ptr<Transport> transport_;
  std::counting_semaphore<> slots_;
  std::string auth_header_;
};

}  // namespace framing
