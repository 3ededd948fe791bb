#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/error.hpp"
#include "framing/logprob.hpp"
#include "framing/paired_completion.hpp"
#include "framing/parallel.hpp"
#include "framing/provider.hpp"
#include "framing/text.hpp"

namespace framing {

enum class PromptVariant { seeds, distilled, summary, zero_shot };

inline const char* to_string(PromptVariant v) {
  switch (v) {
    case PromptVariant::seeds: return "seeds";
    case PromptVariant::distilled: return "distilled";
    case PromptVariant::summary: return "summary";
    case PromptVariant::zero_shot: return "zero_shot";
  }
  return "?";
}

inline PromptVariant parse_prompt_variant(std::string_view s) {
  if (s == "seeds") return PromptVariant::seeds;
  if (s == "distilled") return PromptVariant::distilled;
  if (s == "summary") return PromptVariant::summary;
  if (s == "zero_shot" || s == "zero-shot") return PromptVariant::zero_shot;
  throw ConfigError("unknown prompt variant '" + std::string(s) + "' (seeds, distilled, summary, zero_shot)");
}

inline constexpr std::string_view kPromptPlaceholders[] = {"label_a", "label_b", "context_a", "context_b", "target"};

struct PromptTemplate {
  std::string instruction;
  PromptVariant variant = PromptVariant::seeds;
  std::string name = "inline";
};

// Every placeholder must occur in the instruction.
inline void validate(const PromptTemplate& t) {
  for (auto p : kPromptPlaceholders) {
    if (t.instruction.find("{" + std::string(p) + "}") == std::string::npos) {
      throw ConfigError("prompt template '" + t.name + "' lacks placeholder {" + std::string(p) + "}");
    }
  }
}

// Reads a template asset; lines starting with '#' are comments.
inline PromptTemplate load_prompt_template(const std::filesystem::path& path, PromptVariant variant) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read prompt template " + path.string());
  std::string line, body;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '#') continue;
    body += line;
    body += '\n';
  }
  while (!body.empty() && is_space(body.back())) body.pop_back();
  PromptTemplate t{body, variant, path.filename().string()};
  validate(t);
  return t;
}

inline std::filesystem::path default_prompt_template_path() {
  return std::filesystem::path(FRAMING_ASSET_DIR) / "prompt_template_v1.txt";
}

namespace detail {

inline std::string context_block(const std::vector<std::string>& texts) {
  std::string out;
  for (const auto& t : texts) {
    if (!out.empty()) out += '\n';
    out += "- ";
    out += trim(t);
  }
  return out;
}

}  // namespace detail

// One user message: instruction, both context blocks (empty for zero-shot),
// then the target.
inline ChatTranscript render_prompt(const PromptTemplate& tmpl, const PrimingSet& priming, std::string_view target) {
  validate(tmpl);
  if (trim(target).empty()) throw InvalidArgument("render_prompt: empty target");
  if (priming.label_a == priming.label_b) throw InvalidArgument("render_prompt: labels must differ");
  const bool zero_shot = tmpl.variant == PromptVariant::zero_shot;
  if (!zero_shot && (priming.side_a.empty() || priming.side_b.empty())) {
    throw InvalidArgument(std::string("render_prompt: variant '") + to_string(tmpl.variant) +
                          "' needs context texts on both sides");
  }
  const std::map<std::string, std::string> values{
      {"label_a", priming.label_a},
      {"label_b", priming.label_b},
      {"context_a", zero_shot ? std::string() : detail::context_block(priming.side_a)},
      {"context_b", zero_shot ? std::string() : detail::context_block(priming.side_b)},
      {"target", std::string(trim(target))}};
  return {{"user", fill_placeholders(tmpl.instruction, values)}};
}

struct LabelTokenMap {
  std::string label_a_first_token;
  std::string label_b_first_token;
};

inline void validate(const LabelTokenMap& m) {
  if (trim(m.label_a_first_token).empty() || trim(m.label_b_first_token).empty()) {
    throw ConfigError("label token map: empty first token");
  }
  if (trim(m.label_a_first_token) == trim(m.label_b_first_token)) {
    throw ConfigError("label token map: both labels start with token '" + m.label_a_first_token +
                      "'; choose labels that differ in their first token or set the tokens explicitly");
  }
}

// First token of each label under the provider's own tokenizer, read from an
// echo score. Providers without echo scoring fall back to the first word.
inline LabelTokenMap resolve_label_tokens(Provider& provider, const std::string& label_a, const std::string& label_b) {
  auto first = [&](const std::string& label) -> std::string {
    try {
      const auto s = provider.score_text(label);
      for (const auto& t : s.tokens) {
        if (!trim(t.text).empty()) return std::string(trim(t.text));
      }
    } catch (const ProviderError& e) {
      if (e.kind() != ProviderErrorKind::Capability) throw;
    }
    const auto words = whitespace_tokens(label);
    if (words.empty()) throw ConfigError("empty label");
    return words.front();
  };
  LabelTokenMap m{first(label_a), first(label_b)};
  validate(m);
  return m;
}

// Resolves once per (model, labels) and remembers the answer.
class LabelTokenResolver {
 public:
  LabelTokenMap resolve(Provider& provider, const std::string& label_a, const std::string& label_b) {
    const auto key = provider.endpoint() + "\n" + provider.model() + "\n" + label_a + "\n" + label_b;
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    auto m = resolve_label_tokens(provider, label_a, label_b);
    cache_.emplace(key, m);
    return m;
  }

 private:
  std::mutex mu_;
  std::map<std::string, LabelTokenMap> cache_;
};

inline constexpr int kPromptTopN = 20;
inline constexpr const char* kNoLabelToken = "no_label_token";

struct PromptDecision {
  std::optional<FramingLabel> label;  // empty on failure
  double delta_equiv = 0.0;
  bool tie = false;
  // One label was absent from the returned alternatives; its logprob was
  // bounded by the smallest listed one, so |delta_equiv| is a lower bound.
  bool bounded = false;
  std::optional<std::string> failure_mode;
  Usage usage;
};

namespace detail {

// log of the total probability of alternatives equal to `token` after
// trimming (" Pro" and "Pro" are the same answer), or nullopt.
inline std::optional<double> token_logprob(const std::map<std::string, double>& position, std::string_view token) {
  std::vector<double> hits;
  for (const auto& [tok, lp] : position) {
    if (trim(tok) == trim(token)) hits.push_back(lp);
  }
  if (hits.empty()) return std::nullopt;
  const double m = *std::max_element(hits.begin(), hits.end());
  double s = 0;
  for (double h : hits) s += std::exp(h - m);
  return m + std::log(s);
}

inline double floor_logprob(const std::map<std::string, double>& position) {
  double m = 0.0;
  for (const auto& [_, lp] : position) m = std::min(m, lp);
  return m;
}

}  // namespace detail

// Reads the decision from a first-token distribution. Each label token is
// looked up in position one and, only when absent there, in position two.
inline PromptDecision decide_from_distribution(const FirstTokenDistribution& dist, const LabelTokenMap& labels) {
  validate(labels);
  PromptDecision d;
  d.usage = dist.usage;
  struct Found {
    double lp;
    std::size_t position;
  };
  auto find = [&](const std::string& token) -> std::optional<Found> {
    for (std::size_t p = 0; p < dist.positions.size() && p < 2; ++p) {
      if (auto lp = detail::token_logprob(dist.positions[p], token)) return Found{*lp, p};
    }
    return std::nullopt;
  };
  auto a = find(labels.label_a_first_token);
  auto b = find(labels.label_b_first_token);
  if (!a && !b) {
    d.failure_mode = kNoLabelToken;
    return d;
  }
  if (!a) {
    a = Found{detail::floor_logprob(dist.positions[b->position]), b->position};
    d.bounded = true;
  }
  if (!b) {
    b = Found{detail::floor_logprob(dist.positions[a->position]), a->position};
    d.bounded = true;
  }
  const auto c = classify_score(a->lp - b->lp);
  d.label = c.label;
  d.delta_equiv = c.aggregate_delta;
  d.tie = c.tie;
  return d;
}

inline PromptDecision classify_by_prompt(const PromptTemplate& tmpl, const PrimingSet& priming, std::string_view target,
                                         Provider& provider, const LabelTokenMap& labels) {
  const auto messages = render_prompt(tmpl, priming, target);
  return decide_from_distribution(provider.first_token_logprobs(messages, kPromptTopN), labels);
}

struct PromptResult {
  std::string target_id;
  PromptDecision decision;
  std::string error;  // provider failure text, if any
};

// One chat call per target, parallel under the provider bound. Capability
// errors abort; other provider errors mark only that target as failed.
inline std::vector<PromptResult> classify_batch_by_prompt(const PromptTemplate& tmpl, const PrimingSet& priming,
                                                          const TargetBatch& batch, Provider& provider,
                                                          const LabelTokenMap& labels) {
  validate(batch);
  validate(labels);
  std::vector<PromptResult> out(batch.targets.size());
  parallel_for(batch.targets.size(), provider.max_parallel(), [&](std::size_t i) {
    out[i].target_id = batch.targets[i].id;
    try {
      out[i].decision = classify_by_prompt(tmpl, priming, batch.targets[i].text, provider, labels);
    } catch (const ProviderError& e) {
      if (e.kind() == ProviderErrorKind::Capability) throw;
      out[i].error = e.what();
      out[i].decision.failure_mode = "provider_error";
    }
  });
  return out;
}

inline nlohmann::json to_record(const PromptResult& r, const PrimingSet& priming) {
  nlohmann::json j{{"target_id", r.target_id}, {"delta_equiv", r.decision.delta_equiv}, {"tie", r.decision.tie},
                   {"bounded", r.decision.bounded}};
  if (r.decision.label) {
    j["label"] = to_string(*r.decision.label);
    j["label_name"] = *r.decision.label == FramingLabel::A ? priming.label_a : priming.label_b;
  } else {
    j["label"] = nullptr;
  }
  j["failure_mode"] = r.decision.failure_mode ? nlohmann::json(*r.decision.failure_mode) : nlohmann::json(nullptr);
  if (!r.error.empty()) j["failure"] = r.error;
  return j;
}

}  // namespace framing
