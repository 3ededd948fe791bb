#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/provider.hpp"

namespace framing {

// Replays canned replies. Each rule fires when the flattened transcript
// contains its `contains` substring (first matching rule wins) and hands out
// its replies in order, repeating the last one once exhausted.
//
// File form:
//   {"model": "...",
//    "generate":    [{"contains": "...", "replies": ["...", ...]}],
//    "first_token": [{"contains": "...", "positions": [{"tok": -0.1}, {...}]}],
//    "score":       [{"text": "...", "tokens": [["tok", null], ["tok", -1.5]]}],
//    "embed":       {"text": [0.1, 0.2]}}
class ScriptedProvider final : public Provider {
 public:
  struct Request {
    std::string op;
    ChatTranscript messages;
    double temperature = 0.0;
  };

  explicit ScriptedProvider(std::string model = "scripted") : model_(std::move(model)) {}

  static std::unique_ptr<ScriptedProvider> from_json(const nlohmann::json& j) {
    auto p = std::make_unique<ScriptedProvider>(j.value("model", std::string("scripted")));
    for (const auto& rule : j.value("generate", nlohmann::json::array())) {
      p->add_generate(rule.value("contains", std::string()), rule.at("replies").get<std::vector<std::string>>());
    }
    for (const auto& rule : j.value("first_token", nlohmann::json::array())) {
      FirstTokenDistribution d;
      d.positions = rule.at("positions").get<std::vector<std::map<std::string, double>>>();
      p->add_first_token(rule.value("contains", std::string()), d);
    }
    for (const auto& entry : j.value("score", nlohmann::json::array())) {
      std::vector<Token> tokens;
      for (const auto& t : entry.at("tokens")) {
        Token tok{t.at(0).get<std::string>(), std::nullopt};
        if (!t.at(1).is_null()) tok.logprob = t.at(1).get<double>();
        tokens.push_back(std::move(tok));
      }
      p->add_score(entry.at("text").get<std::string>(), std::move(tokens));
    }
    if (j.contains("embed")) {
      for (const auto& [text, vec] : j.at("embed").items()) p->embeddings_[text] = vec.get<DenseVector>();
    }
    return p;
  }

  static std::unique_ptr<ScriptedProvider> from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scripted provider file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("scripted provider file " + path + ": " + e.what());
    }
    return from_json(j);
  }

  void add_generate(std::string contains, std::vector<std::string> replies) {
    if (replies.empty()) throw ConfigError("scripted generate rule without replies");
    generate_rules_.push_back({std::move(contains), std::move(replies), 0});
  }
  void add_first_token(std::string contains, FirstTokenDistribution dist) {
    first_token_rules_.push_back({std::move(contains), std::move(dist)});
  }
  void add_score(std::string text, std::vector<Token> tokens) { scores_[std::move(text)] = std::move(tokens); }

  std::string model() const override { return model_; }

  std::vector<Request> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 protected:
  Completion do_generate(const ChatTranscript& messages, double temperature) override {
    std::lock_guard lock(mu_);
    requests_.push_back({"generate", messages, temperature});
    const auto flat = flatten(messages);
    for (auto& rule : generate_rules_) {
      if (flat.find(rule.contains) == std::string::npos) continue;
      const auto& reply = rule.replies[std::min(rule.next, rule.replies.size() - 1)];
      ++rule.next;
      Usage usage{static_cast<std::int64_t>(flat.size() / 4), static_cast<std::int64_t>(reply.size() / 4)};
      stats_.record(usage);
      return {reply, usage};
    }
    throw ProviderError(ProviderErrorKind::Permanent, "scripted provider has no generate rule for prompt");
  }

  FirstTokenDistribution do_first_token_logprobs(const ChatTranscript& messages, int) override {
    std::lock_guard lock(mu_);
    requests_.push_back({"first_token", messages, 0.0});
    const auto flat = flatten(messages);
    for (const auto& rule : first_token_rules_) {
      if (flat.find(rule.contains) == std::string::npos) continue;
      auto d = rule.dist;
      d.usage = {static_cast<std::int64_t>(flat.size() / 4), 2};
      stats_.record(d.usage);
      return d;
    }
    throw ProviderError(ProviderErrorKind::Permanent, "scripted provider has no first_token rule for prompt");
  }

  ScoredSequence do_score_text(std::string_view text) override {
    std::lock_guard lock(mu_);
    requests_.push_back({"score", {{"user", std::string(text)}}, 0.0});
    if (scores_.empty()) throw CapabilityError(model_ + " has no scripted scores");
    auto it = scores_.find(std::string(text));
    if (it == scores_.end()) throw ProviderError(ProviderErrorKind::Permanent, "scripted provider cannot score text");
    Usage usage{static_cast<std::int64_t>(it->second.size()), 0};
    stats_.record(usage);
    return make_scored_sequence(std::string(text), it->second, usage);
  }

  EmbeddingBatch do_embed(std::span<const std::string> texts) override {
    std::lock_guard lock(mu_);
    EmbeddingBatch batch;
    for (const auto& t : texts) {
      auto it = embeddings_.find(t);
      if (it == embeddings_.end()) throw ProviderError(ProviderErrorKind::Permanent, "scripted provider cannot embed text");
      batch.vectors.push_back(it->second);
      batch.usage.input_tokens += static_cast<std::int64_t>(t.size() / 4 + 1);
    }
    stats_.record(batch.usage);
    return batch;
  }

 private:
  struct GenerateRule {
    std::string contains;
    std::vector<std::string> replies;
    std::size_t next = 0;
  };
  struct FirstTokenRule {
    std::string contains;
    FirstTokenDistribution dist;
  };

  static std::string flatten(const ChatTranscript& messages) {
    std::string out;
    for (const auto& m : messages) out += m.content + "\n";
    return out;
  }

  std::string model_;
  mutable std::mutex mu_;
  std::vector<GenerateRule> generate_rules_;
  std::vector<FirstTokenRule> first_token_rules_;
  std::map<std::string, std::vector<Token>> scores_;
  std::map<std::string, DenseVector> embeddings_;
  std::vector<Request> requests_;
};

}  // namespace framing
