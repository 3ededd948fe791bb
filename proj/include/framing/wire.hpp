#pragma once

// Request bodies and response parsing for OpenAI-compatible endpoints:
//   /v1/completions       echo scoring (max_tokens 0, echo, logprobs 0)
//   /v1/chat/completions  first-token alternatives and free generation
//   /v1/embeddings        contextual embeddings

#include <algorithm>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/provider.hpp"

namespace framing::wire {

using nlohmann::json;

inline json completions_echo_request(const std::string& model, const std::string& prompt) {
  return {{"model", model}, {"prompt", prompt}, {"max_tokens", 0}, {"echo", true}, {"logprobs", 0}};
}

inline json chat_logprobs_request(const std::string& model, const ChatTranscript& messages, int top_n) {
  return {{"model", model}, {"messages", messages}, {"max_tokens", 2}, {"logprobs", true}, {"top_logprobs", top_n}};
}

inline json chat_generate_request(const std::string& model, const ChatTranscript& messages, double temperature) {
  return {{"model", model}, {"messages", messages}, {"temperature", temperature}};
}

inline json embeddings_request(const std::string& model, const std::vector<std::string>& texts) {
  return {{"model", model}, {"input", texts}};
}

inline Usage parse_usage(const json& response) {
  Usage u;
  if (auto it = response.find("usage"); it != response.end() && it->is_object()) {
    u.input_tokens = it->value("prompt_tokens", std::int64_t{0});
    u.output_tokens = it->value("completion_tokens", std::int64_t{0});
  }
  return u;
}

namespace detail {

inline const json& first_choice(const json& response) {
  const auto it = response.find("choices");
  if (it == response.end() || !it->is_array() || it->empty()) {
    throw ProviderError(ProviderErrorKind::Permanent, "response has no choices");
  }
  return it->front();
}

}  // namespace detail

// choices[0].logprobs.{tokens, token_logprobs}; the first token carries null.
inline ScoredSequence parse_completions_echo(const json& response, const std::string& prompt) {
  const auto& choice = detail::first_choice(response);
  const auto lp = choice.find("logprobs");
  if (lp == choice.end() || lp->is_null()) {
    throw CapabilityError("completions response carries no logprobs (echo scoring unsupported)");
  }
  const auto& tokens = lp->at("tokens");
  const auto& token_logprobs = lp->at("token_logprobs");
  if (tokens.size() != token_logprobs.size()) {
    throw ProviderError(ProviderErrorKind::Permanent, "tokens and token_logprobs differ in length");
  }
  std::vector<Token> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Token t{tokens[i].get<std::string>(), std::nullopt};
    // The first echoed token has no conditioning context and is excluded.
    if (i > 0 && !token_logprobs[i].is_null()) t.logprob = token_logprobs[i].get<double>();
    out.push_back(std::move(t));
  }
  return make_scored_sequence(prompt, std::move(out), parse_usage(response));
}

// choices[0].logprobs.content[i].{token, logprob, top_logprobs[]}; missing
// generated positions are captured as empty maps.
inline FirstTokenDistribution parse_chat_logprobs(const json& response) {
  const auto& choice = detail::first_choice(response);
  const auto lp = choice.find("logprobs");
  if (lp == choice.end() || lp->is_null() || !lp->contains("content")) {
    throw CapabilityError("chat response carries no logprobs");
  }
  FirstTokenDistribution dist;
  for (const auto& pos : lp->at("content")) {
    if (dist.positions.size() == 2) break;
    std::map<std::string, double> entries;
    entries[pos.at("token").get<std::string>()] = pos.at("logprob").get<double>();
    for (const auto& alt : pos.value("top_logprobs", json::array())) {
      const auto tok = alt.at("token").get<std::string>();
      const double v = alt.at("logprob").get<double>();
      auto [it, inserted] = entries.emplace(tok, v);
      if (!inserted) it->second = std::max(it->second, v);
    }
    dist.positions.push_back(std::move(entries));
  }
  while (dist.positions.size() < 2) dist.positions.emplace_back();
  dist.usage = parse_usage(response);
  return dist;
}

inline Completion parse_chat_generate(const json& response) {
  const auto& choice = detail::first_choice(response);
  const auto& content = choice.at("message").at("content");
  if (!content.is_string()) throw ProviderError(ProviderErrorKind::Permanent, "chat reply has no text content");
  return {content.get<std::string>(), parse_usage(response)};
}

// data[].{index, embedding}, returned in index order.
inline EmbeddingBatch parse_embeddings(const json& response, std::size_t expected) {
  const auto& data = response.at("data");
  std::vector<std::pair<std::size_t, DenseVector>> items;
  for (const auto& d : data) {
    items.emplace_back(d.value("index", items.size()), d.at("embedding").get<DenseVector>());
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (items.size() != expected) {
    throw ProviderError(ProviderErrorKind::Permanent, "embeddings response has " + std::to_string(items.size()) +
                                                          " vectors, expected " + std::to_string(expected));
  }
  EmbeddingBatch batch;
  for (auto& [_, v] : items) {
    if (!batch.vectors.empty() && v.size() != batch.vectors.front().size()) {
      throw ProviderError(ProviderErrorKind::Permanent, "embedding dimensions differ within one response");
    }
    batch.vectors.push_back(std::move(v));
  }
  batch.usage = parse_usage(response);
  return batch;
}

}  // namespace framing::wire
