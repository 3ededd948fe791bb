// Acceptance checks: one PASS/FAIL line per criterion, tolerances pinned
// here. Exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "desk_corpus.hpp"
#include "framing/cache.hpp"
#include "framing/cli.hpp"
#include "framing/evaluator.hpp"
#include "framing/logistic.hpp"
#include "framing/ngram_provider.hpp"
#include "framing/paired_completion.hpp"
#include "framing/wire.hpp"
#include "matrix_fixture.hpp"
#include "oracle.hpp"
#include "separable_corpus.hpp"

namespace framing {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr double kDeltaOracleTolerance = 1e-9;
constexpr double kDeltaOracleSeconds = 10.0;
constexpr int kDeltaOracleTriples = 200;
constexpr int kInvarianceCases = 1000;
constexpr int kDeskTargets = 200;
// Longer contexts are sparser: with too little text, unseen contexts score
// both sides identically and the tie falls to B.
constexpr int kDeskDocsPerStyle = 3000;
constexpr double kDeskMinF1 = 0.90;
constexpr double kDeskSeconds = 60.0;
constexpr int kCallCountPlans = 20;
constexpr int kF1Matrices = 50;
constexpr int kCoverageTrials = 100;
constexpr int kCoverageMinHits = 93;
constexpr int kBiasMatrices = 100;
constexpr int kGradientInstances = 20;
constexpr double kGradientStep = 1e-5;
constexpr double kGradientRelTolerance = 1e-5;
constexpr double kSeparableMinF1 = 0.95;
constexpr std::size_t kMatrixCells = 192;
constexpr double kPriceLinearityRelTolerance = 1e-12;

struct Verdict {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- paired-completion Δ ----------------------------------------------------------

struct DeskModel {
  std::vector<std::string> corpus;
  std::unique_ptr<NgramProvider> lm;
};

DeskModel desk_model(int docs_per_style, int order, double alpha, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DeskModel m;
  m.corpus = desk::documents(desk::kStyleA, docs_per_style, rng);
  const auto b = desk::documents(desk::kStyleB, docs_per_style, rng);
  m.corpus.insert(m.corpus.end(), b.begin(), b.end());
  m.lm = std::make_unique<NgramProvider>(m.corpus, order, alpha);
  return m;
}

const desk::Style& any_style(std::mt19937_64& rng) { return rng() % 2 ? desk::kStyleA : desk::kStyleB; }

Verdict delta_oracle() {
  const double alpha = 0.1;
  const auto m = desk_model(80, 3, alpha, 1);
  std::mt19937_64 rng(2);
  double worst = 0, engine_seconds = 0;
  for (int i = 0; i < kDeltaOracleTriples; ++i) {
    const PrimingSet p{{desk::sentence(any_style(rng), rng)}, {desk::sentence(any_style(rng), rng)}, "s1", "s2"};
    if (p.side_a[0] == p.side_b[0]) continue;
    const TargetBatch batch{{{"x", desk::sentence(any_style(rng), rng)}}};
    const auto t0 = Clock::now();
    const auto run = run_paired(p, batch, {1, 1, static_cast<std::uint64_t>(i)}, *m.lm);
    engine_seconds += seconds_since(t0);
    const double got = run.results.at(0).records.at(0).delta;
    const double expected = oracle::ngram_delta(m.corpus, 3, alpha, m.lm->vocabulary().size(), p.side_a[0],
                                                p.side_b[0], batch.targets[0].text);
    worst = std::max(worst, std::fabs(got - expected));
  }
  return {worst <= kDeltaOracleTolerance && engine_seconds < kDeltaOracleSeconds,
          std::to_string(kDeltaOracleTriples) + " triples, max |Δ - oracle| = " + fmt("%.3g", worst) + ", engine " +
              fmt("%.2f", engine_seconds) + " s"};
}

Verdict antisymmetry_and_offset() {
  std::mt19937_64 rng(3);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * uniform_real(rng); };
  // Values on a 2^-20 grid so that every subtraction below is exact.
  auto grid = [](double v) { return std::ldexp(std::round(std::ldexp(v, 20)), -20); };
  int violations = 0;
  for (int i = 0; i < kInvarianceCases; ++i) {
    const double pa = grid(draw(-60, 0)), ja = grid(pa + draw(-200, 0));
    const double pb = grid(draw(-60, 0)), jb = grid(pb + draw(-200, 0));
    const auto d = delta(conditional_logprob(pa, ja, "x"), conditional_logprob(pb, jb, "x"), "s1", "s2");
    const auto d_swapped = delta(conditional_logprob(pb, jb, "x"), conditional_logprob(pa, ja, "x"), "s2", "s1");
    violations += d_swapped.delta != -d.delta;
    violations += swapped(d).delta != -d.delta;

    // The same constant added to every log-probability leaves Δ and the label unchanged.
    const double c = grid(draw(-64, 64));
    const auto d_off =
        delta(conditional_logprob(pa + c, ja + c, "x"), conditional_logprob(pb + c, jb + c, "x"), "s1", "s2");
    violations += d_off.delta != d.delta;
    const auto lp_shift = delta(conditional_logprob(pa, ja + c, "x"), conditional_logprob(pb, jb + c, "x"), "s1", "s2");
    violations += lp_shift.delta != d.delta;
    violations += classify(std::span(&lp_shift, 1)).label != classify(std::span(&d, 1)).label;
  }
  // The same properties end to end through the engine on the n-gram model.
  const auto m = desk_model(60, 3, 0.1, 4);
  std::vector<std::string> pool_a, pool_b;
  for (int i = 0; i < 8; ++i) {
    pool_a.push_back(desk::sentence(any_style(rng), rng));
    pool_b.push_back(desk::sentence(any_style(rng), rng));
  }
  TargetBatch batch;
  for (int i = 0; i < kInvarianceCases / 4; ++i) batch.targets.push_back({"t" + std::to_string(i), desk::sentence(any_style(rng), rng)});
  const PrimingSet p{pool_a, pool_b, "s1", "s2"};
  const auto fwd = run_paired(p, batch, {1, 4, 5}, *m.lm);
  const auto back = run_paired(swap_sides(p), batch, {1, 4, 5}, *m.lm);
  int engine_cases = 0;
  for (std::size_t i = 0; i < fwd.results.size(); ++i) {
    for (std::size_t r = 0; r < fwd.results[i].records.size(); ++r) {
      violations += back.results[i].records[r].delta != -fwd.results[i].records[r].delta;
      ++engine_cases;
    }
    violations += back.results[i].classification.aggregate_delta != -fwd.results[i].classification.aggregate_delta;
  }
  return {violations == 0, std::to_string(kInvarianceCases) + " algebraic + " + std::to_string(engine_cases) +
                               " engine cases, " + std::to_string(violations) + " violations"};
}

Verdict desk_separation() {
  const auto t0 = Clock::now();
  std::string detail;
  bool pass = true;
  // Two n-gram models of different order, each fitted on both styles.
  for (int order : {3, 4}) {
    const auto m = desk_model(kDeskDocsPerStyle, order, 0.1, 10 + order);
    std::mt19937_64 rng(20 + order);
    const PrimingSet p{desk::sentences(desk::kStyleA, 5, rng), desk::sentences(desk::kStyleB, 5, rng), "style-a",
                       "style-b"};
    TargetBatch batch;
    std::vector<FramingLabel> truth;
    for (int i = 0; i < kDeskTargets; ++i) {
      const bool a = uniform_index(rng, 2) == 0;
      batch.targets.push_back({"t" + std::to_string(i), desk::sentence(a ? desk::kStyleA : desk::kStyleB, rng)});
      truth.push_back(a ? FramingLabel::A : FramingLabel::B);
    }
    const auto run = run_paired(p, batch, {1, 3, 7}, *m.lm);
    std::vector<Outcome> outcomes;
    for (std::size_t i = 0; i < batch.targets.size(); ++i) {
      std::optional<FramingLabel> predicted;
      for (const auto& r : run.results) {
        if (r.target_id == batch.targets[i].id) predicted = r.classification.label;
      }
      outcomes.push_back({truth[i], predicted});
    }
    const double f = f1(confusion(outcomes)).value_or(0.0);
    pass = pass && f >= kDeskMinF1 && run.failures.empty();
    detail += "order " + std::to_string(order) + " F1 " + fmt("%.3f", f) + "; ";
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < kDeskSeconds;
  return {pass, detail + std::to_string(kDeskTargets) + " targets each, k=1, 3 repetitions, " + fmt("%.2f", secs) + " s"};
}

Verdict call_counts() {
  const auto m = desk_model(40, 3, 0.1, 30);
  std::mt19937_64 rng(31);
  int mismatches = 0;
  std::string detail;
  for (int trial = 0; trial < kCallCountPlans; ++trial) {
    const int pool = 2 + static_cast<int>(uniform_index(rng, 6));
    const int targets = 1 + static_cast<int>(uniform_index(rng, 15));
    const int reps = 1 + static_cast<int>(uniform_index(rng, 4));
    const PrimingSet p{desk::sentences(desk::kStyleA, pool, rng), desk::sentences(desk::kStyleB, pool, rng), "A", "B"};
    TargetBatch batch;
    for (int i = 0; i < targets; ++i) batch.targets.push_back({"t" + std::to_string(i), desk::sentence(any_style(rng), rng)});
    const PairingPlan plan{2, reps, rng()};
    ResponseCache cache;
    MeteredProvider metered(*m.lm);
    CachingProvider cached(metered, cache);
    run_paired(p, batch, plan, cached);
    const auto expected = estimate_calls(p, batch, plan).num_score_calls;
    mismatches += metered.stats().calls.load() != expected;
  }
  return {mismatches == 0, std::to_string(kCallCountPlans) + " k=2 plans, " + std::to_string(mismatches) + " mismatches"};
}

// ---- evaluator ----------------------------------------------------------------------

std::vector<Outcome> outcomes_from(std::int64_t aa, std::int64_t ab, std::int64_t ba, std::int64_t bb) {
  std::vector<Outcome> o;
  for (std::int64_t i = 0; i < aa; ++i) o.push_back({FramingLabel::A, FramingLabel::A});
  for (std::int64_t i = 0; i < ab; ++i) o.push_back({FramingLabel::A, FramingLabel::B});
  for (std::int64_t i = 0; i < ba; ++i) o.push_back({FramingLabel::B, FramingLabel::A});
  for (std::int64_t i = 0; i < bb; ++i) o.push_back({FramingLabel::B, FramingLabel::B});
  return o;
}

Verdict f1_fidelity() {
  std::mt19937_64 rng(40);
  int mismatches = 0;
  for (int i = 0; i < kF1Matrices; ++i) {
    auto o = outcomes_from(1 + uniform_index(rng, 60), uniform_index(rng, 60), uniform_index(rng, 60), uniform_index(rng, 60));
    std::shuffle(o.begin(), o.end(), rng);
    // Independent recount from the raw outcomes.
    double tp = 0, fp = 0, fn = 0;
    for (const auto& x : o) {
      tp += x.truth == FramingLabel::A && x.predicted == FramingLabel::A;
      fp += x.truth == FramingLabel::B && x.predicted == FramingLabel::A;
      fn += x.truth == FramingLabel::A && x.predicted == FramingLabel::B;
    }
    mismatches += f1(confusion(o)) != tp / (tp + 0.5 * (fp + fn));
  }
  const auto perfect = f1(confusion(outcomes_from(25, 0, 0, 25)));
  const bool perfect_ok = perfect && *perfect == 1.0;
  return {mismatches == 0 && perfect_ok, std::to_string(kF1Matrices) + " matrices, " + std::to_string(mismatches) +
                                             " mismatches at zero tolerance; perfect matrix F1 = " +
                                             (perfect ? fmt("%.17g", *perfect) : std::string("undefined"))};
}

Verdict bootstrap_checks() {
  const auto fixed = outcomes_from(40, 10, 12, 38);
  const auto a = bootstrap_ci(fixed, {100, 1000, 7});
  const auto b = bootstrap_ci(fixed, {100, 1000, 7});
  const bool deterministic = a && b && a->ci_low == b->ci_low && a->ci_high == b->ci_high;

  // Balanced classes, each item correct with probability q: the population
  // F1 for either class is exactly q. The vector length equals the
  // resampling size, so the interval describes the sample's own variability.
  std::mt19937_64 rng(41);
  const BootstrapParams params{100, 1000, 0};
  int covered = 0;
  for (int trial = 0; trial < kCoverageTrials; ++trial) {
    const double q = 0.55 + 0.4 * uniform_real(rng);
    std::vector<Outcome> o;
    for (int i = 0; i < params.sample_size; ++i) {
      const auto truth = i % 2 ? FramingLabel::B : FramingLabel::A;
      o.push_back({truth, uniform_real(rng) < q ? truth : other(truth)});
    }
    auto p = params;
    p.seed = static_cast<std::uint64_t>(trial);
    const auto ci = bootstrap_ci(o, p);
    covered += ci && ci->ci_low <= q && q <= ci->ci_high;
  }
  return {deterministic && covered >= kCoverageMinHits,
          std::string(deterministic ? "same seed, identical interval" : "intervals differ under the same seed") +
              "; analytic F1 inside 95% interval in " + std::to_string(covered) + "/" + std::to_string(kCoverageTrials) +
              " trials"};
}

Verdict bias_checks() {
  std::mt19937_64 rng(50);
  int violations = 0;
  for (int i = 0; i < kBiasMatrices; ++i) {
    const auto x = 1 + uniform_index(rng, 50), y = uniform_index(rng, 50);
    violations += bias(confusion(outcomes_from(x, y, y, x))) != 0.0;
    const auto aa = uniform_index(rng, 40), ab = uniform_index(rng, 40), ba = uniform_index(rng, 40),
               bb = uniform_index(rng, 40);
    if (aa + ab == 0 || ba + bb == 0) continue;
    // Relabelling swaps the classes: row and column order both reverse.
    violations += bias(confusion(outcomes_from(bb, ba, ab, aa))) != -bias(confusion(outcomes_from(aa, ab, ba, bb)));
  }
  const double constructed = bias(confusion(outcomes_from(8, 2, 0, 10)));
  return {violations == 0 && constructed == 0.2, std::to_string(kBiasMatrices) + " symmetric and relabelled matrices, " +
                                                     std::to_string(violations) + " violations; [[8,2],[0,10]] -> " +
                                                     fmt("%.17g", constructed)};
}

// ---- baselines ------------------------------------------------------------------------

Verdict logistic_checks() {
  std::mt19937_64 rng(60);
  std::normal_distribution<double> n01;
  double worst = 0;
  for (int trial = 0; trial < kGradientInstances; ++trial) {
    const std::size_t n = 3 + uniform_index(rng, 8), d = 1 + uniform_index(rng, 6);
    std::vector<DenseVector> X(n, DenseVector(d));
    std::vector<int> y(n);
    for (auto& row : X) {
      for (auto& v : row) v = n01(rng);
    }
    for (auto& v : y) v = static_cast<int>(uniform_index(rng, 2));
    DenseVector w(d);
    for (auto& v : w) v = n01(rng);
    const double b = n01(rng), lambda = 0.05 + uniform_real(rng);
    const auto [g, gb] = logistic_gradient<DenseVector>(X, y, w, b, lambda);
    for (std::size_t j = 0; j <= d; ++j) {
      auto wp = w, wm = w;
      double bp = b, bm = b;
      if (j < d) {
        wp[j] += kGradientStep;
        wm[j] -= kGradientStep;
      } else {
        bp += kGradientStep;
        bm -= kGradientStep;
      }
      const double fd =
          (logistic_loss<DenseVector>(X, y, wp, bp, lambda) - logistic_loss<DenseVector>(X, y, wm, bm, lambda)) /
          (2 * kGradientStep);
      const double an = j < d ? g[j] : gb;
      worst = std::max(worst, std::fabs(fd - an) / std::max(1.0, std::fabs(an)));
    }
  }
  const auto corpus = testdata::separable_corpus("pets", 300, 61);
  const auto split = make_split(corpus, 100, 62);
  const auto run = run_baseline(BaselineMethod::tfidf, split, {200, 3, 63});
  double min_f1 = 1.0;
  for (const auto& r : run.replicates) {
    std::vector<Outcome> o;
    for (const auto& p : r.predictions) o.push_back({p.truth, p.predicted});
    min_f1 = std::min(min_f1, f1(confusion(o)).value_or(0.0));
  }
  return {worst <= kGradientRelTolerance && min_f1 >= kSeparableMinF1,
          std::to_string(kGradientInstances) + " instances, max relative gradient error " + fmt("%.3g", worst) +
              "; separable corpus n_train=200 worst-replicate F1 " + fmt("%.3f", min_f1)};
}

// ---- matrix ---------------------------------------------------------------------------

Verdict matrix_shape() {
  testdata::Workspace ws("acceptance-matrix");
  const auto setup = testdata::write_table_matrix(ws);
  const auto c = load_run_config(setup.config_path);
  const auto topics = load_topics(c);
  const auto cells = plan_cells(c, topics);
  std::map<std::string, int> per_method;
  for (const auto& cell : cells) ++per_method[cell.key.method];
  const auto base = cli::totals(estimate_matrix(c, topics));
  bool linear = base.cost > 0;
  for (double k : {0.0, 0.5, 2.0, 10.0}) {
    auto scaled = setup.config;
    for (auto& p : scaled["providers"]) {
      for (const char* field : {"price_per_1k_input", "price_per_1k_output"}) {
        if (p.contains(field)) p[field] = p[field].get<double>() * k;
      }
    }
    auto sc = parse_run_config(scaled, ws.dir());
    validate(sc);
    const auto t = cli::totals(estimate_matrix(sc, topics));
    linear = linear && t.calls == base.calls &&
             std::fabs(t.cost - k * base.cost) <= kPriceLinearityRelTolerance * std::max(1.0, base.cost);
  }
  // Evaluate every cell against the stubs.
  auto providers = open_providers(c, topics);
  const auto run = run_matrix(c, topics, providers);
  std::size_t ok = 0;
  for (const auto& cell : run.cells) ok += cell.ok();
  std::string shape;
  for (const auto& [m, n] : per_method) shape += m + " " + std::to_string(n) + ", ";
  return {cells.size() == kMatrixCells && per_method["tfidf"] == 24 && per_method["wordvec"] == 24 &&
              per_method["embed"] == 48 && per_method["paired"] == 32 && per_method["prompt"] == 64 && linear && ok == kMatrixCells,
          shape + "total " + std::to_string(cells.size()) + ", " + std::to_string(ok) + " evaluated ok; dry-run cost " +
              (linear ? "linear" : "NOT linear") + " in prices (x0, x0.5, x2, x10)"};
}

// ---- wire protocol --------------------------------------------------------------------

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(FRAMING_FIXTURE_DIR) + "/" + name, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string parsed_fixtures() {
  json out;
  out["completions"] = wire::parse_completions_echo(json::parse(read_fixture("completions_echo.json")), "Dogs lower stress.");
  out["chat_logprobs"] = wire::parse_chat_logprobs(json::parse(read_fixture("chat_logprobs.json")));
  const auto emb = wire::parse_embeddings(json::parse(read_fixture("embeddings.json")), 2);
  out["embeddings"] = json{{"vectors", emb.vectors}, {"usage", json(emb.usage)}};
  return out.dump(2) + "\n";
}

Verdict wire_fixtures() {
  const auto first = parsed_fixtures();
  const auto second = parsed_fixtures();
  const auto golden = read_fixture("parsed/expected.json");
  const bool stable = first == second;
  const bool matches = first == golden;
  return {stable && matches, std::string("completions/chat/embeddings fixtures: ") +
                                 (stable ? "identical across parses" : "parses differ") + ", " +
                                 (matches ? "byte-identical to the recorded parse" : "differs from the recorded parse")};
}

}  // namespace
}  // namespace framing

int main() {
  using namespace framing;
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"delta-oracle-equivalence", delta_oracle},
      {"antisymmetry-and-offset-invariance", antisymmetry_and_offset},
      {"desk-scale-separation", desk_separation},
      {"k2-call-count-arithmetic", call_counts},
      {"f1-formula-fidelity", f1_fidelity},
      {"bootstrap-determinism-and-coverage", bootstrap_checks},
      {"bias-metric", bias_checks},
      {"logistic-gradient-and-separable-fit", logistic_checks},
      {"matrix-shape-and-cost-linearity", matrix_shape},
      {"wire-protocol-fixtures", wire_fixtures},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return failed == 0 ? 0 : 1;
}
