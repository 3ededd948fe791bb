#pragma once

#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "framing/logprob.hpp"
#include "framing/parallel.hpp"
#include "framing/provider.hpp"
#include "framing/sampling.hpp"
#include "framing/text.hpp"

namespace framing {

struct PrimingSet {
  std::vector<std::string> side_a;
  std::vector<std::string> side_b;
  std::string label_a = "A";
  std::string label_b = "B";
};

inline void validate(const PrimingSet& s) {
  if (s.side_a.empty() || s.side_b.empty()) throw InvalidArgument("priming set: both sides need conditioners");
  if (s.label_a == s.label_b) throw InvalidArgument("priming set: labels must differ, both are '" + s.label_a + "'");
  for (const auto* side : {&s.side_a, &s.side_b}) {
    for (const auto& t : *side) {
      if (trim(t).empty()) throw InvalidArgument("priming set: empty conditioner text");
    }
  }
}

inline PrimingSet swap_sides(const PrimingSet& s) { return {s.side_b, s.side_a, s.label_b, s.label_a}; }

struct PairingPlan {
  int k = 1;            // conditioners per prompt
  int repetitions = 3;  // sampled pairings per target
  std::uint64_t rng_seed = 0;
};

inline void validate(const PairingPlan& p) {
  if (p.k != 1 && p.k != 2) throw InvalidArgument("pairing plan: k must be 1 or 2, got " + std::to_string(p.k));
  if (p.repetitions < 1) throw InvalidArgument("pairing plan: repetitions must be >= 1");
}

struct Target {
  std::string id;
  std::string text;
};

struct TargetBatch {
  std::vector<Target> targets;
};

inline void validate(const TargetBatch& b) {
  std::set<std::string> ids;
  for (const auto& t : b.targets) {
    if (t.text.empty()) throw InvalidArgument("target '" + t.id + "' has empty text");
    if (!ids.insert(t.id).second) throw InvalidArgument("duplicate target id '" + t.id + "'");
  }
}

// A conditioner with terminal punctuation guaranteed (period appended).
inline std::string punctuate(std::string_view conditioner) {
  std::string s(trim(conditioner));
  std::size_t i = s.size();
  while (i > 0 && (s[i - 1] == '"' || s[i - 1] == '\'' || s[i - 1] == ')')) --i;
  if (i > 0 && (s[i - 1] == '.' || s[i - 1] == '!' || s[i - 1] == '?')) return s;
  return s + ".";
}

// The conditioner part of a prompt sequence, in the given order.
inline std::string join_conditioners(std::span<const std::string> conditioners) {
  std::string out;
  for (const auto& c : conditioners) {
    if (trim(c).empty()) throw InvalidArgument("concatenate: empty conditioner");
    if (!out.empty()) out += ' ';
    out += punctuate(c);
  }
  return out;
}

// Conditioners in order, each punctuated, single-space separated, then the
// target verbatim.
inline std::string concatenate(std::span<const std::string> conditioners, std::string_view target) {
  if (conditioners.empty()) throw InvalidArgument("concatenate: no conditioners");
  if (target.empty()) throw InvalidArgument("concatenate: empty target");
  return join_conditioners(conditioners) + " " + std::string(target);
}

// One sampled (s_a, s_b) pairing for one target and repetition.
struct PlannedPair {
  std::size_t target = 0;
  int repetition = 0;
  std::vector<std::size_t> a_indices;
  std::vector<std::size_t> b_indices;
  std::string prefix_a, prefix_b;
  std::string joint_a, joint_b;
};

namespace detail {

// Sampling stream for one side is keyed by that side's own label and texts,
// so swapping the sides swaps the samples with them.
inline std::uint64_t side_key(const std::string& label, const std::vector<std::string>& texts) {
  std::uint64_t h = fnv1a(label);
  for (const auto& t : texts) h = fnv1a(t, fnv1a("\x1e", h));
  return h;
}

inline std::vector<std::size_t> draw(const PairingPlan& plan, std::uint64_t side, const std::string& target_id,
                                     int repetition, std::size_t pool_size) {
  std::mt19937_64 rng(mix_seed(mix_seed(mix_seed(plan.rng_seed, side), fnv1a(target_id)),
                               static_cast<std::uint64_t>(repetition)));
  return sample_without_replacement(rng, pool_size, static_cast<std::size_t>(plan.k));
}

inline std::vector<std::string> pick(const std::vector<std::string>& side, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(side[i]);
  return out;
}

}  // namespace detail

inline std::vector<PlannedPair> plan_pairs(const PrimingSet& priming, const TargetBatch& batch, const PairingPlan& plan) {
  validate(priming);
  validate(batch);
  validate(plan);
  const auto k = static_cast<std::size_t>(plan.k);
  if (priming.side_a.size() < k || priming.side_b.size() < k) {
    throw InvalidArgument("pairing plan: k = " + std::to_string(plan.k) + " exceeds a side's conditioner count");
  }
  const auto key_a = detail::side_key(priming.label_a, priming.side_a);
  const auto key_b = detail::side_key(priming.label_b, priming.side_b);

  std::vector<PlannedPair> pairs;
  pairs.reserve(batch.targets.size() * static_cast<std::size_t>(plan.repetitions));
  for (std::size_t t = 0; t < batch.targets.size(); ++t) {
    const auto& target = batch.targets[t];
    for (int r = 0; r < plan.repetitions; ++r) {
      PlannedPair p;
      p.target = t;
      p.repetition = r;
      p.a_indices = detail::draw(plan, key_a, target.id, r, priming.side_a.size());
      p.b_indices = detail::draw(plan, key_b, target.id, r, priming.side_b.size());
      const auto cond_a = detail::pick(priming.side_a, p.a_indices);
      const auto cond_b = detail::pick(priming.side_b, p.b_indices);
      p.prefix_a = join_conditioners(cond_a);
      p.prefix_b = join_conditioners(cond_b);
      p.joint_a = concatenate(cond_a, target.text);
      p.joint_b = concatenate(cond_b, target.text);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

// Every distinct text the run will score, sorted.
inline std::vector<std::string> scoring_texts(std::span<const PlannedPair> pairs) {
  std::set<std::string> texts;
  for (const auto& p : pairs) texts.insert({p.prefix_a, p.prefix_b, p.joint_a, p.joint_b});
  return {texts.begin(), texts.end()};
}

struct CallEstimate {
  std::int64_t num_score_calls = 0;
  std::int64_t est_tokens = 0;
};

// Exact upstream scoring calls for a cold cache: one per distinct prefix and
// joint text. Tokens are whitespace tokens scaled by `token_inflation`.
inline CallEstimate estimate_calls(const PrimingSet& priming, const TargetBatch& batch, const PairingPlan& plan,
                                   double token_inflation = 1.3) {
  const auto texts = scoring_texts(plan_pairs(priming, batch, plan));
  std::int64_t words = 0;
  for (const auto& t : texts) words += static_cast<std::int64_t>(whitespace_tokens(t).size());
  return {static_cast<std::int64_t>(texts.size()),
          static_cast<std::int64_t>(std::ceil(static_cast<double>(words) * token_inflation))};
}

inline std::string conditioner_id(const std::string& label, const std::vector<std::size_t>& idx) {
  std::string id;
  for (auto i : idx) {
    if (!id.empty()) id += '+';
    id += label + "#" + std::to_string(i);
  }
  return id;
}

struct TargetResult {
  std::string target_id;
  Classification classification;
  std::vector<DeltaRecord> records;
};

struct TargetFailure {
  std::string target_id;
  std::string error;
};

struct PairedRun {
  std::vector<TargetResult> results;
  std::vector<TargetFailure> failures;
};

// Scores every distinct prefix and joint text once (in parallel up to the
// provider's bound), then forms lp(x|s) = p_sx - p_s per side, Δ per
// repetition, and the per-target classification. A capability error aborts
// the run; any other provider failure fails only the targets that needed it.
inline PairedRun run_paired(const PrimingSet& priming, const TargetBatch& batch, const PairingPlan& plan,
                            Provider& provider) {
  const auto pairs = plan_pairs(priming, batch, plan);
  const auto texts = scoring_texts(pairs);

  std::vector<std::variant<double, std::string>> scored(texts.size());
  parallel_for(texts.size(), provider.max_parallel(), [&](std::size_t i) {
    try {
      scored[i] = provider.score_text(texts[i]).total.value();
    } catch (const ProviderError& e) {
      if (e.kind() == ProviderErrorKind::Capability) throw;
      scored[i] = std::string(e.what());
    }
  });
  std::map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < texts.size(); ++i) index.emplace(texts[i], i);

  PairedRun run;
  std::size_t cursor = 0;
  for (std::size_t t = 0; t < batch.targets.size(); ++t) {
    const auto& target = batch.targets[t];
    std::vector<DeltaRecord> records;
    std::string failure;
    for (; cursor < pairs.size() && pairs[cursor].target == t; ++cursor) {
      const auto& p = pairs[cursor];
      const auto& sa = scored[index.at(p.prefix_a)];
      const auto& ja = scored[index.at(p.joint_a)];
      const auto& sb = scored[index.at(p.prefix_b)];
      const auto& jb = scored[index.at(p.joint_b)];
      for (const auto* v : {&sa, &ja, &sb, &jb}) {
        if (failure.empty() && std::holds_alternative<std::string>(*v)) failure = std::get<std::string>(*v);
      }
      if (!failure.empty()) continue;
      auto lp_a = conditional_logprob(std::get<double>(sa), std::get<double>(ja), target.id);
      auto lp_b = conditional_logprob(std::get<double>(sb), std::get<double>(jb), target.id);
      records.push_back(delta(std::move(lp_a), std::move(lp_b), conditioner_id(priming.label_a, p.a_indices),
                              conditioner_id(priming.label_b, p.b_indices)));
    }
    if (!failure.empty()) {
      run.failures.push_back({target.id, failure});
      continue;
    }
    auto c = classify(records);
    run.results.push_back({target.id, c, std::move(records)});
  }
  return run;
}

// ---- line-delimited records -----------------------------------------------

inline nlohmann::json to_json(const ConditionalLogProb& lp) {
  return {{"prefix_total", lp.prefix_total.value()}, {"joint_total", lp.joint_total.value()}, {"value", lp.value}};
}

inline nlohmann::json to_record(const TargetResult& r, const PrimingSet& priming) {
  auto deltas = nlohmann::json::array();
  for (const auto& d : r.records) {
    deltas.push_back({{"conditioner_a_id", d.conditioner_a_id},
                      {"conditioner_b_id", d.conditioner_b_id},
                      {"lp_a", to_json(d.lp_a)},
                      {"lp_b", to_json(d.lp_b)},
                      {"delta", d.delta}});
  }
  const auto& name = r.classification.label == FramingLabel::A ? priming.label_a : priming.label_b;
  return {{"target_id", r.target_id},
          {"label", to_string(r.classification.label)},
          {"label_name", name},
          {"aggregate_delta", r.classification.aggregate_delta},
          {"tie", r.classification.tie},
          {"deltas", deltas},
          {"failure", nullptr}};
}

inline nlohmann::json to_record(const TargetFailure& f) {
  return {{"target_id", f.target_id}, {"label", nullptr}, {"failure", f.error}};
}

}  // namespace framing
