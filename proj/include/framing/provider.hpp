#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "framing/error.hpp"
#include "framing/logprob.hpp"
#include "framing/numeric.hpp"

namespace framing {

using DenseVector = std::vector<double>;

struct Usage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
};

struct Token {
  std::string text;
  std::optional<double> logprob;  // absent for the first echoed token
};

struct ScoredSequence {
  std::string text;
  std::vector<Token> tokens;
  LogProbTotal total;
  Usage usage;
};

// Builds a ScoredSequence whose total is the sum of every present logprob.
inline ScoredSequence make_scored_sequence(std::string text, std::vector<Token> tokens, Usage usage = {}) {
  std::vector<double> present;
  present.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (t.logprob) present.push_back(*t.logprob);
  }
  LogProbTotal total(exact_sum(present), "total");
  return {std::move(text), std::move(tokens), total, usage};
}

// Top alternatives for each of the first generated positions.
struct FirstTokenDistribution {
  std::vector<std::map<std::string, double>> positions;
  Usage usage;
};

inline void validate(const FirstTokenDistribution& dist) {
  if (dist.positions.size() < 2) {
    throw ProviderError(ProviderErrorKind::Permanent,
                        "first-token distribution has " + std::to_string(dist.positions.size()) +
                            " positions, need 2");
  }
  for (const auto& pos : dist.positions) {
    for (const auto& [tok, lp] : pos) {
      if (!(lp <= 0.0)) {
        throw ProviderError(ProviderErrorKind::Permanent,
                            "token '" + tok + "' has logprob " + std::to_string(lp) + " > 0");
      }
    }
  }
}

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

using ChatTranscript = std::vector<ChatMessage>;

struct Completion {
  std::string text;
  Usage usage;
};

struct EmbeddingBatch {
  std::vector<DenseVector> vectors;
  Usage usage;
};

struct RetryPolicy {
  int max_attempts = 5;
  int base_backoff_ms = 500;
};

struct ProviderConfig {
  std::string name;
  std::string kind = "openai";  // openai | ngram | scripted
  std::string endpoint_url;
  std::string model_name;
  std::string api_key_env;  // name of the variable, never the key itself
  int max_parallel = 4;
  RetryPolicy retry;
  double price_per_1k_input = 0.0;
  double price_per_1k_output = 0.0;
  double timeout_seconds = 60.0;
};

inline void validate(const ProviderConfig& cfg) {
  if (cfg.max_parallel < 1) throw ConfigError("provider '" + cfg.name + "': max_parallel must be >= 1");
  if (cfg.price_per_1k_input < 0 || cfg.price_per_1k_output < 0) {
    throw ConfigError("provider '" + cfg.name + "': prices must be >= 0");
  }
  if (cfg.retry.max_attempts < 1) throw ConfigError("provider '" + cfg.name + "': retry.max_attempts must be >= 1");
  if (cfg.retry.base_backoff_ms < 0) throw ConfigError("provider '" + cfg.name + "': retry.base_backoff_ms must be >= 0");
}

// Upstream accounting. Counts only requests that actually left the process.
struct ProviderStats {
  std::atomic<std::int64_t> calls{0};
  std::atomic<std::int64_t> attempts{0};
  std::atomic<std::int64_t> last_attempts{0};
  std::atomic<std::int64_t> input_tokens{0};
  std::atomic<std::int64_t> output_tokens{0};

  void record(const Usage& u, std::int64_t attempt_count = 1) {
    calls += 1;
    attempts += attempt_count;
    last_attempts = attempt_count;
    input_tokens += u.input_tokens;
    output_tokens += u.output_tokens;
  }
};

// A language model as seen by the methods. Public entry points check the
// shared preconditions; implementations override the do_* hooks and leave
// unsupported ones throwing CapabilityError.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual std::string model() const = 0;
  // Identity of the serving endpoint; part of every cache key.
  virtual std::string endpoint() const { return "local"; }
  virtual int max_parallel() const { return 1; }

  ScoredSequence score_text(std::string_view text) {
    if (text.empty()) throw InvalidArgument("score_text: text must be non-empty");
    return do_score_text(text);
  }

  FirstTokenDistribution first_token_logprobs(const ChatTranscript& messages, int top_n) {
    if (top_n < 5) throw InvalidArgument("first_token_logprobs: top_n must be >= 5, got " + std::to_string(top_n));
    if (messages.empty()) throw InvalidArgument("first_token_logprobs: empty transcript");
    auto dist = do_first_token_logprobs(messages, top_n);
    validate(dist);
    return dist;
  }

  Completion generate(const ChatTranscript& messages, double temperature) {
    if (!(temperature >= 0.0)) throw InvalidArgument("generate: temperature must be >= 0");
    if (messages.empty()) throw InvalidArgument("generate: empty transcript");
    return do_generate(messages, temperature);
  }

  EmbeddingBatch embed(std::span<const std::string> texts) {
    if (texts.empty()) return {};
    auto batch = do_embed(texts);
    if (batch.vectors.size() != texts.size()) {
      throw ProviderError(ProviderErrorKind::Permanent,
                          "embed returned " + std::to_string(batch.vectors.size()) + " vectors for " +
                              std::to_string(texts.size()) + " texts");
    }
    return batch;
  }

  virtual ProviderStats& stats() { return stats_; }

 protected:
  virtual ScoredSequence do_score_text(std::string_view) {
    throw CapabilityError(model() + " does not support echo scoring");
  }
  virtual FirstTokenDistribution do_first_token_logprobs(const ChatTranscript&, int) {
    throw CapabilityError(model() + " does not support chat logprobs");
  }
  virtual Completion do_generate(const ChatTranscript&, double) {
    throw CapabilityError(model() + " does not support generation");
  }
  virtual EmbeddingBatch do_embed(std::span<const std::string>) {
    throw CapabilityError(model() + " does not support embeddings");
  }

  ProviderStats stats_;
};

// ---- JSON forms used by the response cache and record files -------------

inline void to_json(nlohmann::json& j, const Usage& u) {
  j = {{"input_tokens", u.input_tokens}, {"output_tokens", u.output_tokens}};
}
inline void from_json(const nlohmann::json& j, Usage& u) {
  u.input_tokens = j.value("input_tokens", std::int64_t{0});
  u.output_tokens = j.value("output_tokens", std::int64_t{0});
}

inline void to_json(nlohmann::json& j, const ChatMessage& m) { j = {{"role", m.role}, {"content", m.content}}; }
inline void from_json(const nlohmann::json& j, ChatMessage& m) {
  m.role = j.at("role").get<std::string>();
  m.content = j.at("content").get<std::string>();
}

inline void to_json(nlohmann::json& j, const ScoredSequence& s) {
  auto tokens = nlohmann::json::array();
  for (const auto& t : s.tokens) {
    tokens.push_back({{"text", t.text}, {"logprob", t.logprob ? nlohmann::json(*t.logprob) : nlohmann::json()}});
  }
  j = {{"text", s.text}, {"tokens", tokens}, {"total", s.total.value()}, {"usage", s.usage}};
}
inline void from_json(const nlohmann::json& j, ScoredSequence& s) {
  std::vector<Token> tokens;
  for (const auto& t : j.at("tokens")) {
    Token tok{t.at("text").get<std::string>(), std::nullopt};
    if (!t.at("logprob").is_null()) tok.logprob = t.at("logprob").get<double>();
    tokens.push_back(std::move(tok));
  }
  s = make_scored_sequence(j.at("text").get<std::string>(), std::move(tokens), j.value("usage", Usage{}));
}

inline void to_json(nlohmann::json& j, const FirstTokenDistribution& d) {
  j = {{"positions", d.positions}, {"usage", d.usage}};
}
inline void from_json(const nlohmann::json& j, FirstTokenDistribution& d) {
  d.positions = j.at("positions").get<std::vector<std::map<std::string, double>>>();
  d.usage = j.value("usage", Usage{});
}

}  // namespace framing
