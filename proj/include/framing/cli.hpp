#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/http_transport.hpp"
#include "framing/matrix.hpp"
#include "framing/run_config.hpp"
#include "framing/scripted_provider.hpp"
#include "framing/synthgen.hpp"

// The command implementations behind the `framing` executable. Each returns
// the process exit code and writes only to the streams it is given.
namespace framing::cli {

enum ExitCode : int { kOk = 0, kPartial = 1, kConfigError = 2 };

// Maps exceptions to exit codes: bad configuration or input is 2, anything
// that failed while doing the work is 1.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidArgument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kPartial;
  }
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// ---- synthgen -----------------------------------------------------------------

struct SynthgenArgs {
  std::string topic;
  std::string mock;  // scripted provider file; selects offline generation
  std::string endpoint_url = "https://api.openai.com";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string out;
  std::string prompts;  // generation prompt asset; default: bundled
  SynthOptions options;
};

inline void print_audit(const BalanceReport& r, std::ostream& out) {
  out << "balance audit:\n";
  for (const auto& s : r.sides) {
    out << "  " << s.label << ": " << s.count << " sentences, mean " << std::fixed << std::setprecision(1) << s.chars.mean
        << " chars, " << s.tokens.mean << " tokens, word length " << std::setprecision(2) << s.word_length.mean << "\n";
  }
  out << std::defaultfloat;
  if (r.flags.empty()) out << "  no imbalance flags\n";
  for (const auto& f : r.flags) out << "  FLAG: " << f << "\n";
}

inline int cmd_synthgen(const SynthgenArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (a.out.empty()) throw ConfigError("--out is required");
    std::unique_ptr<Provider> provider;
    if (!a.mock.empty()) {
      provider = ScriptedProvider::from_file(a.mock);
    } else {
      ProviderConfig cfg;
      cfg.name = "synthgen";
      cfg.endpoint_url = a.endpoint_url;
      cfg.model_name = a.model;
      cfg.api_key_env = a.api_key_env;
      if (cfg.api_key_env.empty()) throw ConfigError("a remote provider needs --api-key-env");
      provider = make_remote_provider(cfg);
    }
    const auto prompts = load_synth_prompts(a.prompts.empty() ? default_synth_prompts_path() : std::filesystem::path(a.prompts));
    auto opt = a.options;
    if (opt.timestamp.empty()) opt.timestamp = utc_timestamp();
    FramingCorpus corpus;
    try {
      corpus = synthesize_corpus(a.topic, *provider, prompts, opt);
    } catch (const GenerationError& e) {
      const auto path = a.out + ".failed-transcript.json";
      std::ofstream(path) << e.transcript() << "\n";
      err << "generation failed: " << e.what() << "\ntranscript: " << path << "\n";
      return static_cast<int>(kPartial);
    }
    save_corpus(corpus, a.out);
    out << "wrote " << a.out << " (" << corpus.sides[0].label << ": " << corpus.sides[0].sentences.size() << ", "
        << corpus.sides[1].label << ": " << corpus.sides[1].sentences.size() << " sentences)\n";
    try {
      print_audit(balance_audit(corpus), out);
    } catch (const InvalidArgument& e) {
      out << "balance audit skipped: " << e.what() << "\n";
    }
    return static_cast<int>(kOk);
  });
}

// ---- run / cost -----------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> models;  // keep only these models (and "local" for tfidf if listed)
  bool dry_run = false;
  bool json = false;  // cost: machine-readable output
  int max_parallel_cells = 0;  // 0: from config
};

inline RunConfig resolve_config(const RunArgs& a) {
  if (a.config.empty()) throw ConfigError("--config is required");
  auto c = load_run_config(a.config);
  if (a.output_dir) c.output_dir = std::filesystem::absolute(*a.output_dir).lexically_normal();
  if (a.seed) c.seed = c.bootstrap.seed = *a.seed;
  if (a.max_parallel_cells > 0) c.max_parallel_cells = a.max_parallel_cells;
  if (!a.models.empty()) {
    std::vector<MethodSpec> kept;
    for (auto m : c.methods) {
      std::vector<std::string> models;
      for (const auto& name : m.models) {
        if (std::find(a.models.begin(), a.models.end(), name) != a.models.end()) models.push_back(name);
      }
      m.models = std::move(models);
      if (!m.models.empty()) kept.push_back(std::move(m));
    }
    for (const auto& name : a.models) {
      if (name != kLocalModel && c.provider(name) == nullptr) throw ConfigError("--models: unknown provider '" + name + "'");
    }
    c.methods = std::move(kept);
  }
  validate(c);
  return c;
}

struct CostTotals {
  std::int64_t calls = 0, input_tokens = 0, output_tokens = 0;
  double cost = 0;
};

inline CostTotals totals(const std::vector<CellEstimate>& est) {
  CostTotals t;
  std::vector<double> costs;
  for (const auto& e : est) {
    t.calls += e.calls;
    t.input_tokens += e.input_tokens;
    t.output_tokens += e.output_tokens;
    costs.push_back(e.cost);
  }
  t.cost = exact_sum(costs);
  return t;
}

inline void print_estimates(const RunConfig& c, const std::vector<CellEstimate>& est, bool json, std::ostream& out) {
  const auto t = totals(est);
  if (json) {
    auto cells = nlohmann::json::array();
    for (const auto& e : est) cells.push_back(to_json(e));
    out << nlohmann::json{{"version", version()},
                          {"config", to_json(c)},
                          {"cells", cells},
                          {"totals",
                           {{"cells", est.size()},
                            {"calls", t.calls},
                            {"input_tokens", t.input_tokens},
                            {"output_tokens", t.output_tokens},
                            {"cost", t.cost}}}}
               .dump(2)
        << "\n";
    return;
  }
  char line[512];
  std::snprintf(line, sizeof line, "%-8s %-18s %-18s %-10s %8s %12s %10s %12s\n", "method", "model", "topic", "variant",
                "calls", "in_tokens", "out_tokens", "cost");
  out << line;
  for (const auto& e : est) {
    std::snprintf(line, sizeof line, "%-8s %-18s %-18s %-10s %8lld %12lld %10lld %12.6f\n", e.key.method.c_str(),
                  e.key.model.c_str(), e.key.topic.c_str(), e.key.variant.c_str(), static_cast<long long>(e.calls),
                  static_cast<long long>(e.input_tokens), static_cast<long long>(e.output_tokens), e.cost);
    out << line;
  }
  std::snprintf(line, sizeof line, "total: %zu cells, %lld calls, %lld input tokens, %lld output tokens, cost %.6f\n",
                est.size(), static_cast<long long>(t.calls), static_cast<long long>(t.input_tokens),
                static_cast<long long>(t.output_tokens), t.cost);
  out << line;
}

// Projected calls, tokens and cost per cell; builds no provider and makes no
// network call.
inline int cmd_cost(const RunArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto c = resolve_config(a);
    const auto topics = load_topics(c);
    print_estimates(c, estimate_matrix(c, topics), a.json, out);
    return static_cast<int>(kOk);
  });
}

inline int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  if (a.dry_run) return cmd_cost(a, out, err);
  return guarded(err, [&] {
    const auto c = resolve_config(a);
    const auto topics = load_topics(c);
    auto providers = open_providers(c, topics);
    const auto run = run_matrix(c, topics, providers, &err);
    std::vector<CellResult> done;
    for (const auto& cell : run.cells) {
      if (cell.ok()) done.push_back(cell);
    }
    out << "cells: " << run.cells.size() << " (" << run.evaluated << " evaluated, " << run.skipped << " already done, "
        << run.failed << " failed)\n";
    if (!done.empty()) {
      const auto files = write_report(done, c.output_dir);
      out << "summary: " << files.summary_csv.string() << "\n";
    }
    return static_cast<int>(run.failed > 0 ? kPartial : kOk);
  });
}

// ---- report -------------------------------------------------------------------------

struct ReportArgs {
  std::string cells;  // run directory or its cells/ subdirectory
  std::string out;    // default: the run directory
};

inline int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (a.cells.empty()) throw ConfigError("--cells is required");
    const auto cells = load_cells(a.cells);
    std::filesystem::path dest = a.out;
    if (dest.empty()) {
      dest = std::filesystem::path(a.cells).lexically_normal();
      if (dest.filename().empty()) dest = dest.parent_path();
      if (dest.filename() == "cells") dest = dest.parent_path();
    }
    const auto files = write_report(cells, dest);
    out << cells.size() << " cells\nsummary: " << files.summary_csv.string() << "\nplot data: " << files.plot_json.string()
        << "\n";
    return static_cast<int>(kOk);
  });
}

}  // namespace framing::cli
