#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "framing/baselines.hpp"
#include "framing/cache.hpp"
#include "framing/corpus.hpp"
#include "framing/evaluator.hpp"
#include "framing/features.hpp"
#include "framing/http_transport.hpp"
#include "framing/ngram_provider.hpp"
#include "framing/paired_completion.hpp"
#include "framing/parallel.hpp"
#include "framing/prompt_classifier.hpp"
#include "framing/run_config.hpp"
#include "framing/sampling.hpp"
#include "framing/scripted_provider.hpp"
#include "framing/split.hpp"

namespace framing {

// Whitespace tokens to provider tokens, for projections made before any call.
inline constexpr double kTokensPerWord = 1.3;

// ---- cells ------------------------------------------------------------------

struct CellKey {
  std::string method, model, topic, variant;
  int variant_index = 0;  // position in the configured variant list

  std::string label() const { return method + " / " + model + " / " + topic + " / " + variant; }

  // File-name stem: readable parts plus a digest that keeps distinct keys
  // distinct after sanitizing.
  std::string slug() const {
    auto clean = [](const std::string& s) {
      std::string out;
      for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
      return out;
    };
    const auto digest = sha256_hex(method + '\n' + model + '\n' + topic + '\n' + variant).substr(0, 10);
    return clean(method) + "__" + clean(model) + "__" + clean(topic) + "__" + clean(variant) + "__" + digest;
  }
};

inline bool operator<(const CellKey& a, const CellKey& b) {
  return std::tie(a.method, a.model, a.topic, a.variant_index, a.variant) <
         std::tie(b.method, b.model, b.topic, b.variant_index, b.variant);
}

// One evaluated cell. F1 is reported for both sides as the positive class;
// `f1_a` is the headline value. Metrics are empty when the cell failed.
struct CellResult {
  CellKey key;
  std::string status = "ok";  // ok | failed
  std::string error;
  std::int64_t n_test = 0;
  ConfusionMatrix confusion;
  std::optional<MetricWithCI> f1_a, f1_b;
  std::optional<BiasResult> bias;
  CostLedger ledger;
  nlohmann::json detail = nlohmann::json::object();
  std::string version;
  std::string config_sha256;

  bool ok() const { return status == "ok"; }
};

inline nlohmann::json to_json(const CellKey& k) {
  return {{"method", k.method}, {"model", k.model}, {"topic", k.topic}, {"variant", k.variant},
          {"variant_index", k.variant_index}};
}

inline nlohmann::json to_json(const CellResult& r) {
  auto opt = [](const auto& v) { return v ? to_json(*v) : nlohmann::json(nullptr); };
  return {{"key", to_json(r.key)},   {"status", r.status},     {"error", r.error},
          {"n_test", r.n_test},      {"confusion", to_json(r.confusion)},
          {"f1", opt(r.f1_a)},       {"f1_b", opt(r.f1_b)},    {"bias", opt(r.bias)},
          {"ledger", to_json(r.ledger)}, {"detail", r.detail}, {"version", r.version},
          {"config_sha256", r.config_sha256}};
}

inline CellResult cell_from_json(const nlohmann::json& j) {
  CellResult r;
  const auto& k = j.at("key");
  r.key = {k.at("method").get<std::string>(), k.at("model").get<std::string>(), k.at("topic").get<std::string>(),
           k.at("variant").get<std::string>(), k.at("variant_index").get<int>()};
  r.status = j.at("status").get<std::string>();
  r.error = j.value("error", std::string());
  r.n_test = j.at("n_test").get<std::int64_t>();
  r.confusion.counts = j.at("confusion").at("counts").get<decltype(r.confusion.counts)>();
  r.confusion.failures = j.at("confusion").at("failures").get<decltype(r.confusion.failures)>();
  auto metric = [](const nlohmann::json& m) -> std::optional<MetricWithCI> {
    if (m.is_null()) return std::nullopt;
    return MetricWithCI{m.at("point").get<double>(), m.at("ci_low").get<double>(), m.at("ci_high").get<double>(),
                        m.at("method").get<std::string>() == "replicate" ? CiMethod::replicate : CiMethod::bootstrap};
  };
  r.f1_a = metric(j.at("f1"));
  r.f1_b = metric(j.at("f1_b"));
  if (!j.at("bias").is_null()) {
    const auto& b = j.at("bias");
    r.bias = BiasResult{b.at("bias").get<double>(), b.at("ci_low").get<double>(), b.at("ci_high").get<double>(),
                        b.at("significant").get<bool>()};
  }
  const auto& l = j.at("ledger");
  r.ledger = {l.at("input_tokens").get<std::int64_t>(), l.at("output_tokens").get<std::int64_t>(),
              l.at("calls").get<std::int64_t>(), l.at("cost").get<double>()};
  r.detail = j.value("detail", nlohmann::json::object());
  r.version = j.value("version", std::string());
  r.config_sha256 = j.value("config_sha256", std::string());
  return r;
}

// ---- inputs -------------------------------------------------------------------

// A dataset and the held-out split every method on that topic shares.
struct TopicData {
  FramingCorpus corpus;
  EvalSplit split;
};

inline std::vector<TopicData> load_topics(const RunConfig& c) {
  std::vector<TopicData> out;
  std::set<std::string> topics;
  for (const auto& path : c.datasets) {
    auto corpus = load_corpus(path);
    validate(corpus);
    if (!topics.insert(corpus.topic).second) throw ConfigError("two datasets share the topic '" + corpus.topic + "'");
    EvalSplit split;
    try {
      split = make_split(corpus, c.test_per_side, c.seed);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string(e.what()) + " (dataset " + path.string() + ")");
    }
    out.push_back({std::move(corpus), std::move(split)});
  }
  return out;
}

// Named providers and word-vector tables for a run. Tests register stubs
// directly; `open_providers` builds them from a config.
class ProviderSet {
 public:
  void add(const ProviderConfig& cfg, std::unique_ptr<Provider> provider) {
    Provider& ref = *provider;
    owned_.push_back(std::move(provider));
    add(cfg, ref);
  }
  void add(const ProviderConfig& cfg, Provider& provider) {
    if (!entries_.emplace(cfg.name, Entry{cfg, &provider}).second) {
      throw ConfigError("provider '" + cfg.name + "' registered twice");
    }
  }
  void add_word_vectors(const std::string& name, WordVectorTable table) {
    if (!tables_.emplace(name, std::move(table)).second) throw ConfigError("word vectors '" + name + "' registered twice");
  }

  Provider& provider(const std::string& name) const { return *entry(name).provider; }
  const ProviderConfig& config(const std::string& name) const { return entry(name).config; }
  const WordVectorTable& word_vectors(const std::string& name) const {
    auto it = tables_.find(name);
    if (it == tables_.end()) throw ConfigError("no word vectors named '" + name + "'");
    return it->second;
  }

 private:
  struct Entry {
    ProviderConfig config;
    Provider* provider;
  };
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("no provider named '" + name + "'");
    return it->second;
  }

  std::vector<std::unique_ptr<Provider>> owned_;
  std::map<std::string, Entry> entries_;
  std::map<std::string, WordVectorTable> tables_;
};

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

// Builds every configured provider. Remote providers resolve their API key
// from the environment here, so a missing key stops the run before any call.
inline ProviderSet open_providers(const RunConfig& c, const std::vector<TopicData>& topics) {
  ProviderSet set;
  std::string alphabet;
  for (const auto& t : topics) {
    for (const auto& side : t.corpus.sides) {
      alphabet += side.label + side.summary;
      for (const auto* list : {&side.seeds, &side.distilled, &side.sentences}) {
        for (const auto& s : *list) alphabet += s;
      }
    }
  }
  for (const auto& p : c.providers) {
    const auto& cfg = p.config;
    if (cfg.kind == "openai") {
      set.add(cfg, make_remote_provider(cfg));
    } else if (cfg.kind == "ngram") {
      std::vector<std::string> docs;
      for (const auto& f : p.train_files) {
        for (auto& line : detail::read_lines(f)) docs.push_back(std::move(line));
      }
      if (p.train_on_pools) {
        for (const auto& t : topics) {
          for (const auto& pool : t.split.pool) {
            for (const auto& item : pool) docs.push_back(item.text);
          }
        }
      }
      set.add(cfg, std::make_unique<NgramProvider>(docs, p.order, p.alpha, alphabet, cfg.model_name));
    } else if (cfg.kind == "scripted") {
      set.add(cfg, ScriptedProvider::from_file(p.file.string()));
    } else if (cfg.kind == "word_vectors") {
      set.add_word_vectors(cfg.name, load_word_vectors(p.file));
    } else {
      throw ConfigError("provider '" + cfg.name + "': unknown kind '" + cfg.kind + "'");
    }
  }
  return set;
}

struct PlannedCell {
  CellKey key;
  const MethodSpec* method = nullptr;
  std::size_t topic = 0;
  std::size_t variant = 0;
};

// The full cartesian product methods x models x topics x variants, sorted
// by key.
inline std::vector<PlannedCell> plan_cells(const RunConfig& c, const std::vector<TopicData>& topics) {
  std::vector<PlannedCell> out;
  for (const auto& m : c.methods) {
    const auto variants = m.variant_names();
    for (const auto& model : m.models) {
      for (std::size_t t = 0; t < topics.size(); ++t) {
        for (std::size_t v = 0; v < variants.size(); ++v) {
          out.push_back({{to_string(m.family), model, topics[t].corpus.topic, variants[v], static_cast<int>(v)}, &m, t, v});
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (!(out[i - 1].key < out[i].key)) throw ConfigError("cell " + out[i].key.label() + " is configured twice");
  }
  return out;
}

inline PrimingSet priming_from(const FramingCorpus& corpus, const std::string& source) {
  PrimingSet p;
  p.label_a = corpus.sides[0].label;
  p.label_b = corpus.sides[1].label;
  auto texts = [&](const FramingSide& s) -> std::vector<std::string> {
    if (source == "seeds") return s.seeds;
    if (source == "distilled") return s.distilled;
    if (source == "summary") return {s.summary};
    if (source == "none") return {};
    throw ConfigError("unknown conditioner source '" + source + "'");
  };
  p.side_a = texts(corpus.sides[0]);
  p.side_b = texts(corpus.sides[1]);
  return p;
}

inline const char* prompt_context_source(PromptVariant v) {
  switch (v) {
    case PromptVariant::seeds: return "seeds";
    case PromptVariant::distilled: return "distilled";
    case PromptVariant::summary: return "summary";
    case PromptVariant::zero_shot: return "none";
  }
  return "none";
}

inline TargetBatch test_batch(const EvalSplit& split) {
  TargetBatch b;
  for (const auto& t : split.test) b.targets.push_back({t.id, t.text});
  return b;
}

// ---- evaluation -----------------------------------------------------------

namespace detail {

// Recounts F1 straight from the (truth, prediction) pairs and compares it
// with the confusion-matrix path, for both positive classes.
inline void check_f1(std::span<const Outcome> outcomes, const ConfusionMatrix& cm) {
  for (auto positive : {FramingLabel::A, FramingLabel::B}) {
    double tp = 0, fp = 0, fn = 0;
    for (const auto& o : outcomes) {
      const bool predicted_positive = o.predicted && *o.predicted == positive;
      if (o.truth == positive && predicted_positive) tp += 1;
      if (o.truth != positive && predicted_positive) fp += 1;
      if (o.truth == positive && !predicted_positive) fn += 1;
    }
    const std::optional<double> expected =
        tp + fp + fn == 0 ? std::nullopt : std::optional<double>(tp / (tp + 0.5 * (fp + fn)));
    if (f1(cm, positive) != expected) throw Error("internal check failed: F1 disagrees with the raw outcomes");
  }
}

inline std::optional<BiasResult> try_bias(std::span<const Outcome> outcomes, const BootstrapParams& p) {
  try {
    return bias_test(outcomes, p);
  } catch (const InvalidArgument&) {
    return std::nullopt;
  }
}

inline nlohmann::json truth_json(FramingLabel l) { return to_string(l); }

struct CellOutput {
  CellResult result;
  std::vector<nlohmann::json> records;
};

inline void fill_bootstrap_metrics(CellResult& r, std::span<const Outcome> outcomes, const BootstrapParams& p) {
  r.n_test = static_cast<std::int64_t>(outcomes.size());
  r.confusion = confusion(outcomes);
  check_f1(outcomes, r.confusion);
  r.f1_a = bootstrap_ci(outcomes, p, FramingLabel::A);
  r.f1_b = bootstrap_ci(outcomes, p, FramingLabel::B);
  r.bias = try_bias(outcomes, p);
}

inline CellOutput evaluate_baseline(const PlannedCell& cell, const TopicData& topic, const RunConfig& c,
                                    const ProviderSet& providers, Provider* embedder, const BootstrapParams& bp) {
  const auto& m = *cell.method;
  const auto method = m.family == MethodFamily::tfidf     ? BaselineMethod::tfidf
                      : m.family == MethodFamily::wordvec ? BaselineMethod::wordvec
                                                          : BaselineMethod::embed;
  BaselineResources res;
  if (method == BaselineMethod::wordvec) res.word_vectors = &providers.word_vectors(cell.key.model);
  res.embedder = embedder;
  const TrainPlan plan{m.n_train[cell.variant], m.replicates, c.seed, m.l2_lambda};
  const auto run = run_baseline(method, topic.split, plan, res);

  CellOutput out;
  auto& r = out.result;
  std::vector<double> f1s_a, f1s_b;
  std::vector<Outcome> pooled;
  auto replicates = nlohmann::json::array();
  for (const auto& rep : run.replicates) {
    std::vector<Outcome> outcomes;
    for (const auto& p : rep.predictions) {
      outcomes.push_back({p.truth, p.predicted});
      out.records.push_back({{"replicate", rep.replicate},
                             {"target_id", p.id},
                             {"truth", truth_json(p.truth)},
                             {"label", to_string(p.predicted)},
                             {"logit", p.logit}});
    }
    const auto cm = confusion(outcomes);
    check_f1(outcomes, cm);
    const auto fa = f1(cm, FramingLabel::A), fb = f1(cm, FramingLabel::B);
    if (fa) f1s_a.push_back(*fa);
    if (fb) f1s_b.push_back(*fb);
    replicates.push_back({{"replicate", rep.replicate},
                          {"f1", fa ? nlohmann::json(*fa) : nlohmann::json(nullptr)},
                          {"f1_b", fb ? nlohmann::json(*fb) : nlohmann::json(nullptr)},
                          {"train_ids", rep.train_ids},
                          {"training", to_json(rep.meta)}});
    pooled.insert(pooled.end(), outcomes.begin(), outcomes.end());
  }
  r.n_test = static_cast<std::int64_t>(topic.split.test.size());
  r.confusion = confusion(pooled);
  if (f1s_a.size() >= 2) r.f1_a = replicate_ci(f1s_a);
  if (f1s_b.size() >= 2) r.f1_b = replicate_ci(f1s_b);
  r.bias = try_bias(pooled, bp);
  r.detail = {{"n_train", plan.n_train},
              {"replicates", replicates},
              {"l2_lambda", plan.l2_lambda},
              {"confusion_pooled_over_replicates", true}};
  return out;
}

inline CellOutput evaluate_paired(const PlannedCell& cell, const TopicData& topic, const RunConfig& c, Provider& provider,
                                  const BootstrapParams& bp) {
  const auto& m = *cell.method;
  const auto priming = priming_from(topic.corpus, m.conditioners);
  const auto batch = test_batch(topic.split);
  const PairingPlan plan{m.k[cell.variant], m.repetitions, c.seed};
  const auto run = run_paired(priming, batch, plan, provider);

  CellOutput out;
  std::map<std::string, const TargetResult*> by_id;
  for (const auto& t : run.results) by_id.emplace(t.target_id, &t);
  std::map<std::string, const TargetFailure*> failed;
  for (const auto& f : run.failures) failed.emplace(f.target_id, &f);
  std::vector<Outcome> outcomes;
  int ties = 0;
  for (const auto& t : topic.split.test) {
    nlohmann::json rec;
    if (auto it = by_id.find(t.id); it != by_id.end()) {
      outcomes.push_back({t.truth, it->second->classification.label});
      ties += it->second->classification.tie;
      rec = to_record(*it->second, priming);
    } else {
      outcomes.push_back({t.truth, std::nullopt});
      rec = to_record(*failed.at(t.id));
    }
    rec["truth"] = truth_json(t.truth);
    out.records.push_back(std::move(rec));
  }
  fill_bootstrap_metrics(out.result, outcomes, bp);
  const auto est = estimate_calls(priming, batch, plan, kTokensPerWord);
  out.result.detail = {{"k", plan.k},
                       {"repetitions", plan.repetitions},
                       {"conditioners", m.conditioners},
                       {"ties", ties},
                       {"failures", run.failures.size()},
                       {"estimated_score_calls", est.num_score_calls}};
  return out;
}

inline CellOutput evaluate_prompt(const PlannedCell& cell, const TopicData& topic, Provider& provider,
                                  LabelTokenResolver& resolver, const BootstrapParams& bp) {
  const auto& m = *cell.method;
  const auto variant = m.variants[cell.variant];
  const auto tmpl = load_prompt_template(m.template_path, variant);
  const auto priming = priming_from(topic.corpus, prompt_context_source(variant));
  const auto labels = resolver.resolve(provider, priming.label_a, priming.label_b);
  const auto results = classify_batch_by_prompt(tmpl, priming, test_batch(topic.split), provider, labels);

  CellOutput out;
  std::vector<Outcome> outcomes;
  std::map<std::string, int> failure_modes;
  int bounded = 0, ties = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& t = topic.split.test[i];
    const auto& d = results[i].decision;
    outcomes.push_back({t.truth, d.label});
    if (d.failure_mode) ++failure_modes[*d.failure_mode];
    bounded += d.bounded;
    ties += d.tie;
    auto rec = to_record(results[i], priming);
    rec["truth"] = truth_json(t.truth);
    out.records.push_back(std::move(rec));
  }
  fill_bootstrap_metrics(out.result, outcomes, bp);
  out.result.detail = {{"prompt_variant", to_string(variant)},
                       {"template", tmpl.name},
                       {"label_tokens", {labels.label_a_first_token, labels.label_b_first_token}},
                       {"bounded", bounded},
                       {"ties", ties},
                       {"failure_modes", failure_modes}};
  return out;
}

}  // namespace detail

// Shared state for one run: the response cache and label-token memo.
struct CellContext {
  const RunConfig& config;
  const std::vector<TopicData>& topics;
  ProviderSet& providers;
  ResponseCache& cache;
  LabelTokenResolver& resolver;
};

// Evaluates one cell. Every language-model call goes through a per-cell
// meter placed under the shared cache, so the ledger counts only the calls
// this cell sent upstream.
inline detail::CellOutput evaluate_cell(const PlannedCell& cell, CellContext& ctx) {
  const auto& topic = ctx.topics[cell.topic];
  const BootstrapParams bp{ctx.config.bootstrap.replicates, ctx.config.bootstrap.sample_size,
                           mix_seed(ctx.config.seed, fnv1a(cell.key.slug()))};
  detail::CellOutput out;
  const auto family = cell.method->family;
  if (family == MethodFamily::tfidf || family == MethodFamily::wordvec) {
    out = detail::evaluate_baseline(cell, topic, ctx.config, ctx.providers, nullptr, bp);
  } else {
    MeteredProvider metered(ctx.providers.provider(cell.key.model));
    CachingProvider cached(metered, ctx.cache);
    if (family == MethodFamily::embed) {
      out = detail::evaluate_baseline(cell, topic, ctx.config, ctx.providers, &cached, bp);
    } else if (family == MethodFamily::paired) {
      out = detail::evaluate_paired(cell, topic, ctx.config, cached, bp);
    } else {
      out = detail::evaluate_prompt(cell, topic, cached, ctx.resolver, bp);
    }
    out.result.ledger = make_ledger(metered.stats(), ctx.providers.config(cell.key.model));
    out.result.detail["cache_hits"] = cached.hits();
  }
  out.result.key = cell.key;
  out.result.status = "ok";
  return out;
}

// ---- dry-run estimates ------------------------------------------------------

struct CellEstimate {
  CellKey key;
  std::int64_t calls = 0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double cost = 0.0;
  std::string note;
};

inline std::int64_t projected_tokens(std::int64_t words) {
  return static_cast<std::int64_t>(std::ceil(static_cast<double>(words) * kTokensPerWord));
}

// Projected upstream traffic for a cold cache, computed without building any
// provider. Paired completion counts are exact (distinct scoring texts);
// embeddings count exact distinct texts in 128-text batches; prompting counts
// one chat call per target plus label-token resolution (two echo scores once
// per model and label pair, charged to the first cell that needs it).
inline std::vector<CellEstimate> estimate_matrix(const RunConfig& c, const std::vector<TopicData>& topics) {
  std::vector<CellEstimate> out;
  std::set<std::string> resolved_labels;
  for (const auto& cell : plan_cells(c, topics)) {
    const auto& topic = topics[cell.topic];
    const auto& m = *cell.method;
    CellEstimate e;
    e.key = cell.key;
    const auto batch = test_batch(topic.split);
    switch (m.family) {
      case MethodFamily::tfidf:
      case MethodFamily::wordvec:
        e.note = "local";
        break;
      case MethodFamily::embed: {
        const TrainPlan plan{m.n_train[cell.variant], m.replicates, c.seed, m.l2_lambda};
        std::set<std::string> distinct;
        for (const auto& t : topic.split.test) distinct.insert(t.text);
        try {
          for (int r = 0; r < plan.replicates; ++r) {
            for (const auto& t : detail::sample_training(topic.split, plan, r)) distinct.insert(t.text);
          }
        } catch (const InvalidArgument& ex) {
          e.note = ex.what();
        }
        std::int64_t words = 0;
        for (const auto& t : distinct) words += static_cast<std::int64_t>(whitespace_tokens(t).size());
        e.calls = static_cast<std::int64_t>((distinct.size() + 127) / 128);
        e.input_tokens = projected_tokens(words);
        break;
      }
      case MethodFamily::paired: {
        const auto priming = priming_from(topic.corpus, m.conditioners);
        const auto est = estimate_calls(priming, batch, {m.k[cell.variant], m.repetitions, c.seed}, kTokensPerWord);
        e.calls = est.num_score_calls;
        e.input_tokens = est.est_tokens;
        break;
      }
      case MethodFamily::prompt: {
        const auto variant = m.variants[cell.variant];
        const auto tmpl = load_prompt_template(m.template_path, variant);
        const auto priming = priming_from(topic.corpus, prompt_context_source(variant));
        std::int64_t words = 0;
        for (const auto& t : batch.targets) {
          words += static_cast<std::int64_t>(whitespace_tokens(render_prompt(tmpl, priming, t.text).front().content).size());
        }
        e.calls = static_cast<std::int64_t>(batch.targets.size());
        e.output_tokens = 2 * e.calls;
        if (resolved_labels.insert(cell.key.model + '\n' + priming.label_a + '\n' + priming.label_b).second) {
          e.calls += 2;
          words += static_cast<std::int64_t>(whitespace_tokens(priming.label_a).size() +
                                             whitespace_tokens(priming.label_b).size());
        }
        e.input_tokens = projected_tokens(words);
        break;
      }
    }
    if (m.family != MethodFamily::tfidf) {
      const auto& cfg = c.provider(cell.key.model)->config;
      e.cost = token_cost(e.input_tokens, e.output_tokens, cfg.price_per_1k_input, cfg.price_per_1k_output);
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline nlohmann::json to_json(const CellEstimate& e) {
  nlohmann::json j{{"key", to_json(e.key)},
                   {"calls", e.calls},
                   {"input_tokens", e.input_tokens},
                   {"output_tokens", e.output_tokens},
                   {"cost", e.cost}};
  if (!e.note.empty()) j["note"] = e.note;
  return j;
}

// ---- running -------------------------------------------------------------------

namespace detail {

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << content;
    if (!out) throw Error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace detail

inline std::filesystem::path cells_dir(const std::filesystem::path& output_dir) { return output_dir / "cells"; }

struct MatrixRun {
  std::vector<CellResult> cells;  // sorted by key
  int evaluated = 0;
  int skipped = 0;  // completed by an earlier run
  int failed = 0;
};

// Evaluates every cell of the configured matrix, in parallel across cells.
// Each finished cell writes <slug>.json and <slug>.jsonl (per-target records)
// and then a <slug>.done marker; cells with a marker are loaded instead of
// re-run, which makes an interrupted run resumable. A failing cell is
// recorded without a marker and the matrix carries on.
inline MatrixRun run_matrix(const RunConfig& c, const std::vector<TopicData>& topics, ProviderSet& providers,
                            std::ostream* progress = nullptr) {
  namespace fs = std::filesystem;
  const auto resolved = to_json(c);
  const auto config_hash = sha256_hex(resolved.dump());
  const auto dir = cells_dir(c.output_dir);
  fs::create_directories(dir);
  detail::write_atomic(c.output_dir / "run.json",
                       nlohmann::json{{"version", version()}, {"config_sha256", config_hash}, {"config", resolved}}.dump(2) +
                           "\n");
  ResponseCache cache(c.effective_cache_file());
  LabelTokenResolver resolver;
  CellContext ctx{c, topics, providers, cache, resolver};

  const auto planned = plan_cells(c, topics);
  MatrixRun run;
  run.cells.resize(planned.size());
  std::vector<char> skipped(planned.size(), 0);
  std::mutex io;
  std::atomic<std::size_t> finished{0};

  parallel_for(planned.size(), c.max_parallel_cells, [&](std::size_t i) {
    const auto& cell = planned[i];
    const auto stem = dir / cell.key.slug();
    const auto json_path = fs::path(stem.string() + ".json");
    const auto marker = fs::path(stem.string() + ".done");
    CellResult result;
    bool reused = false;
    if (fs::exists(marker)) {
      try {
        result = cell_from_json(nlohmann::json::parse(detail::read_file(json_path)));
        reused = result.ok();
      } catch (const std::exception&) {
        reused = false;  // unreadable: evaluate again
      }
    }
    if (!reused) {
      std::error_code ec;
      fs::remove(marker, ec);
      std::vector<nlohmann::json> records;
      try {
        auto out = evaluate_cell(cell, ctx);
        result = std::move(out.result);
        records = std::move(out.records);
      } catch (const std::exception& e) {
        result = CellResult{};
        result.key = cell.key;
        result.status = "failed";
        result.error = e.what();
      }
      result.version = version();
      result.config_sha256 = config_hash;
      try {
        std::string lines;
        for (const auto& r : records) lines += r.dump() + "\n";
        detail::write_atomic(stem.string() + ".jsonl", lines);
        detail::write_atomic(json_path, to_json(result).dump(2) + "\n");
        if (result.ok()) detail::write_atomic(marker, config_hash + "\n");
      } catch (const std::exception& e) {
        result.status = "failed";
        result.error = std::string("writing cell output: ") + e.what();
      }
    }
    skipped[i] = reused;
    const auto n = ++finished;
    if (progress) {
      std::lock_guard lock(io);
      *progress << "[" << n << "/" << planned.size() << "] " << (reused ? "skip  " : result.ok() ? "ok    " : "FAILED")
                << " " << cell.key.label();
      if (result.ok() && result.f1_a) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", result.f1_a->point);
        *progress << "  f1=" << buf;
      }
      if (!result.ok()) *progress << "  " << result.error;
      *progress << "\n";
    }
    run.cells[i] = std::move(result);
  });
  for (std::size_t i = 0; i < planned.size(); ++i) {
    if (skipped[i]) {
      ++run.skipped;
    } else {
      ++run.evaluated;
    }
    if (!run.cells[i].ok()) ++run.failed;
  }
  return run;
}

// ---- reports --------------------------------------------------------------------

// Completed cells (those with a marker) under a run directory or its cells/
// subdirectory, sorted by key.
inline std::vector<CellResult> load_cells(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const auto root = fs::is_directory(cells_dir(dir)) ? cells_dir(dir) : dir;
  if (!fs::is_directory(root)) throw InvalidArgument("not a directory: " + dir.string());
  std::vector<fs::path> markers;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.path().extension() == ".done") markers.push_back(entry.path());
  }
  std::vector<CellResult> cells;
  for (const auto& m : markers) {
    auto json_path = m;
    json_path.replace_extension(".json");
    cells.push_back(cell_from_json(nlohmann::json::parse(detail::read_file(json_path))));
  }
  if (cells.empty()) throw InvalidArgument("empty report: no completed cells under " + dir.string());
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  return cells;
}

namespace detail {

inline std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace detail

// method,model,topic,variant,f1,ci_low,ci_high,bias,bias_significant,cost.
// The bias column is filled only where the bias is significant.
inline std::string summary_csv(const std::vector<CellResult>& cells) {
  std::string out = "method,model,topic,variant,f1,ci_low,ci_high,bias,bias_significant,cost\n";
  for (const auto& c : cells) {
    out += detail::csv_field(c.key.method) + "," + detail::csv_field(c.key.model) + "," + detail::csv_field(c.key.topic) +
           "," + detail::csv_field(c.key.variant) + ",";
    if (c.f1_a) {
      out += detail::fixed(c.f1_a->point) + "," + detail::fixed(c.f1_a->ci_low) + "," + detail::fixed(c.f1_a->ci_high);
    } else {
      out += ",,";
    }
    out += ",";
    const bool significant = c.bias && c.bias->significant;
    if (significant) out += detail::fixed(c.bias->bias);
    out += std::string(",") + (significant ? "true" : "false") + "," + detail::fixed(c.ledger.cost) + "\n";
  }
  return out;
}

// Cost against F1 per cell, and bias with its interval per cell.
inline nlohmann::json plot_data(const std::vector<CellResult>& cells) {
  auto cost_vs_f1 = nlohmann::json::array();
  auto bias = nlohmann::json::array();
  std::set<std::string> versions;
  for (const auto& c : cells) {
    versions.insert(c.version);
    auto key = to_json(c.key);
    key.erase("variant_index");
    if (c.f1_a) {
      auto p = key;
      p["f1"] = c.f1_a->point;
      p["ci_low"] = c.f1_a->ci_low;
      p["ci_high"] = c.f1_a->ci_high;
      p["cost"] = c.ledger.cost;
      p["calls"] = c.ledger.calls;
      cost_vs_f1.push_back(p);
    }
    if (c.bias) {
      auto p = key;
      p["bias"] = c.bias->bias;
      p["ci_low"] = c.bias->ci_low;
      p["ci_high"] = c.bias->ci_high;
      p["significant"] = c.bias->significant;
      bias.push_back(p);
    }
  }
  return {{"versions", versions}, {"cost_vs_f1", cost_vs_f1}, {"bias_intervals", bias}};
}

struct ReportFiles {
  std::filesystem::path summary_csv, plot_json, cells_jsonl;
};

// Writes summary.csv, plot.json and cells.jsonl (one line per cell) into
// `out_dir`. Output depends only on the cells, so reruns are byte-identical.
inline ReportFiles write_report(const std::vector<CellResult>& cells, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  ReportFiles f{out_dir / "summary.csv", out_dir / "plot.json", out_dir / "cells.jsonl"};
  detail::write_atomic(f.summary_csv, summary_csv(cells));
  detail::write_atomic(f.plot_json, plot_data(cells).dump(2) + "\n");
  std::string lines;
  for (const auto& c : cells) lines += to_json(c).dump() + "\n";
  detail::write_atomic(f.cells_jsonl, lines);
  return f;
}

}  // namespace framing
