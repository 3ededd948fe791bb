// framing: generate corpora, run the experiment matrix, and report.
//
//   framing synthgen --topic "dog ownership" --mock scripted.json --out dogs.json
//   framing run --config run.json [--dry-run]
//   framing cost --config run.json
//   framing report --cells runs/latest
//
// Exit codes: 0 success, 1 partial failure, 2 configuration error.

#include <iostream>

#include "CLI11.hpp"

#include "framing/cli.hpp"

int main(int argc, char** argv) {
  using namespace framing;
  CLI::App app{"Issue-framing detection: corpus generation, experiment matrix, reports"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  cli::SynthgenArgs sg;
  auto* synth = app.add_subcommand("synthgen", "Generate a two-sided synthetic corpus for a topic");
  synth->add_option("--topic", sg.topic, "Topic to generate")->required();
  synth->add_option("--out", sg.out, "Corpus JSON to write")->required();
  synth->add_option("--mock", sg.mock, "Scripted provider file (offline generation)")->check(CLI::ExistingFile);
  synth->add_option("--endpoint", sg.endpoint_url, "Chat endpoint base URL")->capture_default_str();
  synth->add_option("--model", sg.model, "Chat model name")->capture_default_str();
  synth->add_option("--api-key-env", sg.api_key_env, "Environment variable holding the API key")->capture_default_str();
  synth->add_option("--prompts", sg.prompts, "Generation prompt asset (default: bundled)");
  synth->add_option("--seeds", sg.options.seeds_per_side, "Seed texts per side")->capture_default_str();
  synth->add_option("--sentences", sg.options.sentences_per_side, "Bulk sentences per side")->capture_default_str();
  synth->add_option("--temperature", sg.options.temperature, "Sampling temperature")->capture_default_str();
  synth->add_option("--timestamp", sg.options.timestamp, "Timestamp recorded in the corpus (default: now, UTC)");

  cli::RunArgs ra;
  std::string output_dir;
  std::uint64_t seed = 0;
  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", ra.config, "Run configuration (JSON)")->required();
    cmd->add_option("--output-dir", output_dir, "Override output_dir");
    cmd->add_option("--seed", seed, "Override seed");
    cmd->add_option("--models", ra.models, "Only run these providers (\"local\" selects TF-IDF)")->delimiter(',');
  };
  auto* run = app.add_subcommand("run", "Evaluate every cell of the configured matrix (resumable)");
  add_run_options(run);
  run->add_flag("--dry-run", ra.dry_run, "Print projected calls and cost; make no calls");
  run->add_option("--parallel-cells", ra.max_parallel_cells, "Override max_parallel_cells");
  auto* cost = app.add_subcommand("cost", "Projected calls, tokens and cost per cell (no calls made)");
  add_run_options(cost);
  cost->add_flag("--json", ra.json, "Machine-readable output");

  cli::ReportArgs rp;
  auto* report = app.add_subcommand("report", "Summary CSV and plot data from completed cells");
  report->add_option("--cells", rp.cells, "Run directory or its cells/ subdirectory")->required();
  report->add_option("--out", rp.out, "Output directory (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfigError;
  }
  for (auto* cmd : {run, cost}) {
    if (cmd->parsed()) {
      if (cmd->count("--output-dir")) ra.output_dir = output_dir;
      if (cmd->count("--seed")) ra.seed = seed;
    }
  }
  if (synth->parsed()) return cli::cmd_synthgen(sg, std::cout, std::cerr);
  if (run->parsed()) return cli::cmd_run(ra, std::cout, std::cerr);
  if (cost->parsed()) return cli::cmd_cost(ra, std::cout, std::cerr);
  return cli::cmd_report(rp, std::cout, std::cerr);
}
