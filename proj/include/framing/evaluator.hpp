#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/error.hpp"
#include "framing/logprob.hpp"
#include "framing/numeric.hpp"
#include "framing/provider.hpp"
#include "framing/sampling.hpp"

namespace framing {

inline std::size_t index_of(FramingLabel l) { return l == FramingLabel::A ? 0 : 1; }

// One evaluated item: the true side and the prediction, or none when the
// method failed to produce a label.
struct Outcome {
  FramingLabel truth;
  std::optional<FramingLabel> predicted;
};

// counts[true][predicted]; failures[true] counts unlabelled items.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, 2>, 2> counts{};
  std::array<std::int64_t, 2> failures{};

  void add(const Outcome& o) {
    if (o.predicted) {
      ++counts[index_of(o.truth)][index_of(*o.predicted)];
    } else {
      ++failures[index_of(o.truth)];
    }
  }
  std::int64_t row_total(FramingLabel truth) const {
    const auto t = index_of(truth);
    return counts[t][0] + counts[t][1] + failures[t];
  }
  std::int64_t total() const { return row_total(FramingLabel::A) + row_total(FramingLabel::B); }
  std::int64_t total_failures() const { return failures[0] + failures[1]; }
};

inline ConfusionMatrix confusion(std::span<const Outcome> outcomes) {
  ConfusionMatrix cm;
  for (const auto& o : outcomes) cm.add(o);
  return cm;
}

// TP / (TP + (FP + FN) / 2) for `positive`. Failures on positive items count
// as false negatives. Undefined (nullopt) when TP + FP + FN = 0.
inline std::optional<double> f1(const ConfusionMatrix& cm, FramingLabel positive = FramingLabel::A) {
  const auto p = index_of(positive);
  const auto n = 1 - p;
  const auto tp = static_cast<double>(cm.counts[p][p]);
  const auto fp = static_cast<double>(cm.counts[n][p]);
  const auto fn = static_cast<double>(cm.counts[p][n] + cm.failures[p]);
  if (tp + fp + fn == 0) return std::nullopt;
  return tp / (tp + 0.5 * (fp + fn));
}

enum class CiMethod { replicate, bootstrap };

inline const char* to_string(CiMethod m) { return m == CiMethod::replicate ? "replicate" : "bootstrap"; }

// 95% interval. The percentile bootstrap does not force the point estimate
// inside [ci_low, ci_high].
struct MetricWithCI {
  double point = 0, ci_low = 0, ci_high = 0;
  CiMethod method = CiMethod::bootstrap;
};

struct BootstrapParams {
  int replicates = 100;
  int sample_size = 1000;
  std::uint64_t seed = 0;
};

inline void validate(const BootstrapParams& p) {
  if (p.replicates < 1 || p.sample_size < 1) throw InvalidArgument("bootstrap: replicates and sample_size must be >= 1");
}

namespace detail {

// Each replicate draws sample_size items with replacement and evaluates
// `stat` on them; replicates where stat is undefined are skipped.
template <typename Stat>
std::vector<double> bootstrap(std::span<const Outcome> outcomes, const BootstrapParams& p, Stat&& stat) {
  validate(p);
  std::mt19937_64 rng(p.seed);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(p.replicates));
  for (int r = 0; r < p.replicates; ++r) {
    ConfusionMatrix cm;
    for (int i = 0; i < p.sample_size; ++i) cm.add(outcomes[uniform_index(rng, outcomes.size())]);
    if (auto v = stat(cm)) values.push_back(*v);
  }
  std::sort(values.begin(), values.end());
  return values;
}

}  // namespace detail

inline std::optional<MetricWithCI> bootstrap_ci(std::span<const Outcome> outcomes, const BootstrapParams& p = {},
                                                FramingLabel positive = FramingLabel::A) {
  if (outcomes.empty()) throw InvalidArgument("bootstrap_ci: no outcomes");
  const auto point = f1(confusion(outcomes), positive);
  if (!point) return std::nullopt;
  const auto values = detail::bootstrap(outcomes, p, [&](const ConfusionMatrix& cm) { return f1(cm, positive); });
  if (values.empty()) return std::nullopt;
  return MetricWithCI{*point, percentile_sorted(values, 2.5), percentile_sorted(values, 97.5), CiMethod::bootstrap};
}

// mean +- 1.96 * s / sqrt(r), s the sample standard deviation.
inline MetricWithCI replicate_ci(std::span<const double> values) {
  if (values.size() < 2) throw InvalidArgument("replicate_ci: needs at least 2 replicates");
  const double mean = exact_mean(values);
  std::vector<double> sq;
  for (double v : values) sq.push_back((v - mean) * (v - mean));
  const double sd = std::sqrt(exact_sum(sq) / static_cast<double>(values.size() - 1));
  const double half = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  return {mean, mean - half, mean + half, CiMethod::replicate};
}

// norm[A->B] - norm[B->A], rows normalized by their true-class totals
// (failures included in the totals). Positive: A items drift to B more
// often than B items drift to A.
inline double bias(const ConfusionMatrix& cm) {
  const auto ta = cm.row_total(FramingLabel::A);
  const auto tb = cm.row_total(FramingLabel::B);
  if (ta == 0 || tb == 0) throw InvalidArgument("bias: a true class has no items");
  return static_cast<double>(cm.counts[0][1]) / static_cast<double>(ta) -
         static_cast<double>(cm.counts[1][0]) / static_cast<double>(tb);
}

struct BiasResult {
  double bias = 0, ci_low = 0, ci_high = 0;
  bool significant = false;  // the 95% interval excludes 0
};

inline BiasResult bias_test(std::span<const Outcome> outcomes, const BootstrapParams& p = {}) {
  const auto cm = confusion(outcomes);
  BiasResult r;
  r.bias = bias(cm);
  const auto values = detail::bootstrap(outcomes, p, [](const ConfusionMatrix& s) -> std::optional<double> {
    if (s.row_total(FramingLabel::A) == 0 || s.row_total(FramingLabel::B) == 0) return std::nullopt;
    return bias(s);
  });
  if (values.empty()) return r;
  r.ci_low = percentile_sorted(values, 2.5);
  r.ci_high = percentile_sorted(values, 97.5);
  r.significant = r.ci_low > 0.0 || r.ci_high < 0.0;
  return r;
}

struct CostLedger {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t calls = 0;
  double cost = 0.0;
};

inline double token_cost(std::int64_t input_tokens, std::int64_t output_tokens, double price_in_per_1k,
                         double price_out_per_1k) {
  return static_cast<double>(input_tokens) / 1000.0 * price_in_per_1k +
         static_cast<double>(output_tokens) / 1000.0 * price_out_per_1k;
}

inline CostLedger make_ledger(std::int64_t calls, std::int64_t input_tokens, std::int64_t output_tokens,
                              double price_in_per_1k, double price_out_per_1k) {
  return {input_tokens, output_tokens, calls, token_cost(input_tokens, output_tokens, price_in_per_1k, price_out_per_1k)};
}

inline CostLedger make_ledger(ProviderStats& stats, const ProviderConfig& prices) {
  return make_ledger(stats.calls.load(), stats.input_tokens.load(), stats.output_tokens.load(),
                     prices.price_per_1k_input, prices.price_per_1k_output);
}

inline nlohmann::json to_json(const ConfusionMatrix& cm) {
  return {{"counts", cm.counts}, {"failures", cm.failures}};
}

inline nlohmann::json to_json(const MetricWithCI& m) {
  return {{"point", m.point}, {"ci_low", m.ci_low}, {"ci_high", m.ci_high}, {"method", to_string(m.method)}};
}

inline nlohmann::json to_json(const BiasResult& b) {
  return {{"bias", b.bias}, {"ci_low", b.ci_low}, {"ci_high", b.ci_high}, {"significant", b.significant}};
}

inline nlohmann::json to_json(const CostLedger& l) {
  return {{"input_tokens", l.input_tokens}, {"output_tokens", l.output_tokens}, {"calls", l.calls}, {"cost", l.cost}};
}

}  // namespace framing
