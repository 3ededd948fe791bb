#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/baselines.hpp"
#include "framing/corpus.hpp"
#include "framing/error.hpp"
#include "framing/evaluator.hpp"
#include "framing/prompt_classifier.hpp"
#include "framing/provider.hpp"

#ifndef FRAMING_VERSION
#define FRAMING_VERSION "unknown"
#endif

namespace framing {

inline const char* version() { return FRAMING_VERSION; }

enum class MethodFamily { tfidf, wordvec, embed, paired, prompt };

inline const char* to_string(MethodFamily m) {
  switch (m) {
    case MethodFamily::tfidf: return "tfidf";
    case MethodFamily::wordvec: return "wordvec";
    case MethodFamily::embed: return "embed";
    case MethodFamily::paired: return "paired";
    case MethodFamily::prompt: return "prompt";
  }
  return "?";
}

inline MethodFamily parse_method_family(std::string_view s) {
  for (auto m : {MethodFamily::tfidf, MethodFamily::wordvec, MethodFamily::embed, MethodFamily::paired,
                 MethodFamily::prompt}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown method '" + std::string(s) + "' (expected tfidf, wordvec, embed, paired or prompt)");
}

// Model name used for the TF-IDF family, which needs no provider.
inline constexpr const char* kLocalModel = "local";

// A provider entry. `config` holds the fields shared by every kind; the rest
// apply to one kind each:
//   openai:        endpoint_url, model_name, api_key_env
//   ngram:         order, alpha, train_files, train_on_pools
//   scripted:      file (replay script)
//   word_vectors:  file (text vector table)
struct ProviderSpec {
  ProviderConfig config;
  int order = 3;
  double alpha = 0.1;
  std::vector<std::filesystem::path> train_files;
  bool train_on_pools = false;  // also train on every dataset's non-test sentences
  std::filesystem::path file;

  bool is_language_model() const { return config.kind != "word_vectors"; }
};

struct MethodSpec {
  MethodFamily family = MethodFamily::tfidf;
  std::vector<std::string> models;
  // tfidf, wordvec, embed
  std::vector<int> n_train;
  int replicates = 5;
  double l2_lambda = 1e-2;
  // paired
  std::vector<int> k;
  int repetitions = 3;
  std::string conditioners = "distilled";  // seeds | distilled | summary
  // prompt
  std::vector<PromptVariant> variants;
  std::filesystem::path template_path;

  // Variant labels in configured order.
  std::vector<std::string> variant_names() const {
    std::vector<std::string> out;
    switch (family) {
      case MethodFamily::tfidf:
      case MethodFamily::wordvec:
      case MethodFamily::embed:
        for (int n : n_train) out.push_back("n=" + std::to_string(n));
        break;
      case MethodFamily::paired:
        for (int v : k) out.push_back("k=" + std::to_string(v));
        break;
      case MethodFamily::prompt:
        for (auto v : variants) out.push_back(to_string(v));
        break;
    }
    return out;
  }
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::filesystem::path cache_file;  // empty: <output_dir>/cache.jsonl
  std::size_t test_per_side = 50;
  BootstrapParams bootstrap;
  int max_parallel_cells = 4;
  std::vector<std::filesystem::path> datasets;
  std::vector<ProviderSpec> providers;
  std::vector<MethodSpec> methods;

  const ProviderSpec* provider(const std::string& name) const {
    for (const auto& p : providers) {
      if (p.config.name == name) return &p;
    }
    return nullptr;
  }
  std::filesystem::path effective_cache_file() const {
    return cache_file.empty() ? output_dir / "cache.jsonl" : cache_file;
  }
};

namespace detail {

using nlohmann::json;

// Rejects keys the reader does not know, so typos fail before any spending.
inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

inline bool looks_like_secret(const std::string& key) {
  const auto k = to_lower(key);
  if (k == "api_key_env") return false;
  for (const char* s : {"api_key", "apikey", "secret", "token", "password", "authorization"}) {
    if (k.find(s) != std::string::npos) return true;
  }
  return false;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) throw ConfigError("empty path");
  std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

template <typename T>
T get(const json& obj, const char* key, const std::string& where, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": '" + key + "' has the wrong type");
  }
}

inline ProviderSpec parse_provider(const json& j, const std::filesystem::path& base, std::size_t index) {
  const std::string where = "providers[" + std::to_string(index) + "]";
  if (j.is_object()) {
    for (const auto& [key, _] : j.items()) {
      if (looks_like_secret(key)) {
        throw ConfigError(where + ": key '" + key +
                          "' looks like a secret; secrets are read only from environment variables (set api_key_env)");
      }
    }
  }
  check_keys(j, where,
             {"name", "kind", "endpoint_url", "model_name", "api_key_env", "max_parallel", "retry", "price_per_1k_input",
              "price_per_1k_output", "timeout_seconds", "order", "alpha", "train_files", "train_on_pools", "file"});
  ProviderSpec s;
  auto& c = s.config;
  c.name = get<std::string>(j, "name", where, "");
  if (trim(c.name).empty()) throw ConfigError(where + ": missing name");
  const std::string named = "provider '" + c.name + "'";
  c.kind = get<std::string>(j, "kind", named, "openai");
  c.endpoint_url = get<std::string>(j, "endpoint_url", named, "");
  c.model_name = get<std::string>(j, "model_name", named, c.name);
  c.api_key_env = get<std::string>(j, "api_key_env", named, "");
  c.max_parallel = get<int>(j, "max_parallel", named, c.kind == "openai" ? 4 : 1);
  c.price_per_1k_input = get<double>(j, "price_per_1k_input", named, 0.0);
  c.price_per_1k_output = get<double>(j, "price_per_1k_output", named, 0.0);
  c.timeout_seconds = get<double>(j, "timeout_seconds", named, 60.0);
  if (j.contains("retry")) {
    check_keys(j.at("retry"), named + " retry", {"max_attempts", "base_backoff_ms"});
    c.retry.max_attempts = get<int>(j.at("retry"), "max_attempts", named, c.retry.max_attempts);
    c.retry.base_backoff_ms = get<int>(j.at("retry"), "base_backoff_ms", named, c.retry.base_backoff_ms);
  }
  s.order = get<int>(j, "order", named, 3);
  s.alpha = get<double>(j, "alpha", named, 0.1);
  for (const auto& f : get<std::vector<std::string>>(j, "train_files", named, {})) s.train_files.push_back(resolve(base, f));
  s.train_on_pools = get<bool>(j, "train_on_pools", named, false);
  if (j.contains("file")) s.file = resolve(base, get<std::string>(j, "file", named, ""));
  return s;
}

inline MethodSpec parse_method(const json& j, const std::filesystem::path& base, std::size_t index) {
  const std::string where = "methods[" + std::to_string(index) + "]";
  check_keys(j, where,
             {"method", "models", "n_train", "replicates", "l2_lambda", "k", "repetitions", "conditioners", "variants",
              "template"});
  MethodSpec m;
  m.family = parse_method_family(get<std::string>(j, "method", where, ""));
  const std::string named = where + " (" + to_string(m.family) + ")";
  m.models = get<std::vector<std::string>>(j, "models", named, {});
  if (m.family == MethodFamily::tfidf && m.models.empty()) m.models = {kLocalModel};
  m.n_train = get<std::vector<int>>(j, "n_train", named, kDefaultTrainSizes);
  m.replicates = get<int>(j, "replicates", named, 5);
  m.l2_lambda = get<double>(j, "l2_lambda", named, 1e-2);
  m.k = get<std::vector<int>>(j, "k", named, {1, 2});
  m.repetitions = get<int>(j, "repetitions", named, 3);
  m.conditioners = get<std::string>(j, "conditioners", named, "distilled");
  for (const auto& v : get<std::vector<std::string>>(j, "variants", named, {"seeds", "distilled", "summary", "zero_shot"})) {
    m.variants.push_back(parse_prompt_variant(v));
  }
  m.template_path = j.contains("template") ? resolve(base, get<std::string>(j, "template", named, ""))
                                           : default_prompt_template_path();
  return m;
}

}  // namespace detail

// Structural checks plus file existence. Runs before any provider is built.
inline void validate(const RunConfig& c) {
  if (c.output_dir.empty()) throw ConfigError("output_dir is required");
  if (c.test_per_side < 1) throw ConfigError("test_per_side must be >= 1");
  if (c.max_parallel_cells < 1) throw ConfigError("max_parallel_cells must be >= 1");
  try {
    validate(c.bootstrap);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (c.datasets.empty()) throw ConfigError("at least one dataset is required");
  for (const auto& d : c.datasets) {
    if (!std::filesystem::is_regular_file(d)) throw ConfigError("dataset not found: " + d.string());
  }
  std::set<std::string> names;
  for (const auto& p : c.providers) {
    const auto& cfg = p.config;
    if (!names.insert(cfg.name).second) throw ConfigError("duplicate provider name '" + cfg.name + "'");
    if (cfg.name == kLocalModel) throw ConfigError("provider name '" + cfg.name + "' is reserved");
    validate(cfg);
    const std::string named = "provider '" + cfg.name + "'";
    if (cfg.kind == "openai") {
      if (cfg.endpoint_url.empty()) throw ConfigError(named + ": endpoint_url is required");
    } else if (cfg.kind == "ngram") {
      if (p.order < 1) throw ConfigError(named + ": order must be >= 1");
      if (!(p.alpha > 0)) throw ConfigError(named + ": alpha must be > 0");
      if (p.train_files.empty() && !p.train_on_pools) throw ConfigError(named + ": needs train_files or train_on_pools");
      for (const auto& f : p.train_files) {
        if (!std::filesystem::is_regular_file(f)) throw ConfigError(named + ": training file not found: " + f.string());
      }
    } else if (cfg.kind == "scripted" || cfg.kind == "word_vectors") {
      if (p.file.empty() || !std::filesystem::is_regular_file(p.file)) {
        throw ConfigError(named + ": file not found: " + p.file.string());
      }
    } else {
      throw ConfigError(named + ": unknown kind '" + cfg.kind + "' (expected openai, ngram, scripted or word_vectors)");
    }
  }
  if (c.methods.empty()) throw ConfigError("at least one method is required");
  for (const auto& m : c.methods) {
    const std::string named = std::string("method ") + to_string(m.family);
    if (m.models.empty()) throw ConfigError(named + ": models is empty");
    std::set<std::string> seen;
    for (const auto& model : m.models) {
      if (!seen.insert(model).second) throw ConfigError(named + ": model '" + model + "' listed twice");
      if (m.family == MethodFamily::tfidf) {
        if (model != kLocalModel) throw ConfigError(named + ": takes no models (found '" + model + "')");
        continue;
      }
      const auto* p = c.provider(model);
      if (p == nullptr) throw ConfigError(named + ": unknown provider '" + model + "'");
      if ((m.family == MethodFamily::wordvec) != (p->config.kind == "word_vectors")) {
        throw ConfigError(named + ": provider '" + model + "' has kind '" + p->config.kind + "'");
      }
    }
    switch (m.family) {
      case MethodFamily::tfidf:
      case MethodFamily::wordvec:
      case MethodFamily::embed:
        if (m.n_train.empty()) throw ConfigError(named + ": n_train is empty");
        for (int n : m.n_train) {
          if (n < 2 || n % 2 != 0) throw ConfigError(named + ": n_train values must be even and >= 2, got " + std::to_string(n));
        }
        if (m.replicates < 2) throw ConfigError(named + ": replicates must be >= 2 for a replicate interval");
        if (!(m.l2_lambda >= 0)) throw ConfigError(named + ": l2_lambda must be >= 0");
        break;
      case MethodFamily::paired:
        if (m.k.empty()) throw ConfigError(named + ": k is empty");
        for (int k : m.k) {
          if (k != 1 && k != 2) throw ConfigError(named + ": k must be 1 or 2, got " + std::to_string(k));
        }
        if (m.repetitions < 1) throw ConfigError(named + ": repetitions must be >= 1");
        if (m.conditioners != "seeds" && m.conditioners != "distilled" && m.conditioners != "summary") {
          throw ConfigError(named + ": conditioners must be seeds, distilled or summary");
        }
        break;
      case MethodFamily::prompt:
        if (m.variants.empty()) throw ConfigError(named + ": variants is empty");
        if (!std::filesystem::is_regular_file(m.template_path)) {
          throw ConfigError(named + ": template not found: " + m.template_path.string());
        }
        break;
    }
    const auto variants = m.variant_names();
    if (std::set<std::string>(variants.begin(), variants.end()).size() != variants.size()) {
      throw ConfigError(named + ": duplicate variants");
    }
  }
}

// Relative paths resolve against `base_dir` (the config file's directory).
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  using detail::get;
  detail::check_keys(j, "config",
                     {"seed", "output_dir", "cache_file", "test_per_side", "bootstrap", "max_parallel_cells", "datasets",
                      "providers", "methods"});
  RunConfig c;
  c.seed = get<std::uint64_t>(j, "seed", "config", 0);
  c.output_dir = detail::resolve(base_dir, get<std::string>(j, "output_dir", "config", "runs/latest"));
  if (j.contains("cache_file")) c.cache_file = detail::resolve(base_dir, get<std::string>(j, "cache_file", "config", ""));
  c.test_per_side = get<std::size_t>(j, "test_per_side", "config", 50);
  c.max_parallel_cells = get<int>(j, "max_parallel_cells", "config", 4);
  if (j.contains("bootstrap")) {
    detail::check_keys(j.at("bootstrap"), "bootstrap", {"replicates", "sample_size"});
    c.bootstrap.replicates = get<int>(j.at("bootstrap"), "replicates", "bootstrap", 100);
    c.bootstrap.sample_size = get<int>(j.at("bootstrap"), "sample_size", "bootstrap", 1000);
  }
  c.bootstrap.seed = c.seed;
  for (const auto& d : get<std::vector<std::string>>(j, "datasets", "config", {})) {
    c.datasets.push_back(detail::resolve(base_dir, d));
  }
  const auto providers = j.value("providers", nlohmann::json::array());
  for (std::size_t i = 0; i < providers.size(); ++i) c.providers.push_back(detail::parse_provider(providers[i], base_dir, i));
  const auto methods = j.value("methods", nlohmann::json::array());
  for (std::size_t i = 0; i < methods.size(); ++i) c.methods.push_back(detail::parse_method(methods[i], base_dir, i));
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  auto c = parse_run_config(j, std::filesystem::absolute(path).parent_path());
  validate(c);
  return c;
}

// The fully resolved configuration (defaults filled in, absolute paths),
// embedded in every run's outputs. Holds environment variable names only.
inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json providers = json::array();
  for (const auto& p : c.providers) {
    const auto& cfg = p.config;
    json e{{"name", cfg.name},
           {"kind", cfg.kind},
           {"model_name", cfg.model_name},
           {"max_parallel", cfg.max_parallel},
           {"price_per_1k_input", cfg.price_per_1k_input},
           {"price_per_1k_output", cfg.price_per_1k_output}};
    if (cfg.kind == "openai") {
      e["endpoint_url"] = cfg.endpoint_url;
      e["api_key_env"] = cfg.api_key_env;
      e["timeout_seconds"] = cfg.timeout_seconds;
      e["retry"] = {{"max_attempts", cfg.retry.max_attempts}, {"base_backoff_ms", cfg.retry.base_backoff_ms}};
    } else if (cfg.kind == "ngram") {
      e["order"] = p.order;
      e["alpha"] = p.alpha;
      json files = json::array();
      for (const auto& f : p.train_files) files.push_back(f.string());
      e["train_files"] = files;
      e["train_on_pools"] = p.train_on_pools;
    } else {
      e["file"] = p.file.string();
    }
    providers.push_back(e);
  }
  json methods = json::array();
  for (const auto& m : c.methods) {
    json e{{"method", to_string(m.family)}, {"models", m.models}, {"variants", m.variant_names()}};
    switch (m.family) {
      case MethodFamily::tfidf:
      case MethodFamily::wordvec:
      case MethodFamily::embed:
        e["replicates"] = m.replicates;
        e["l2_lambda"] = m.l2_lambda;
        break;
      case MethodFamily::paired:
        e["repetitions"] = m.repetitions;
        e["conditioners"] = m.conditioners;
        break;
      case MethodFamily::prompt:
        e["template"] = m.template_path.string();
        break;
    }
    methods.push_back(e);
  }
  json datasets = json::array();
  for (const auto& d : c.datasets) datasets.push_back(d.string());
  return {{"seed", c.seed},
          {"output_dir", c.output_dir.string()},
          {"cache_file", c.effective_cache_file().string()},
          {"test_per_side", c.test_per_side},
          {"bootstrap", {{"replicates", c.bootstrap.replicates}, {"sample_size", c.bootstrap.sample_size}}},
          {"max_parallel_cells", c.max_parallel_cells},
          {"datasets", datasets},
          {"providers", providers},
          {"methods", methods}};
}

}  // namespace framing
