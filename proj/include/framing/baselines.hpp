#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/features.hpp"
#include "framing/logistic.hpp"
#include "framing/sampling.hpp"
#include "framing/split.hpp"

namespace framing {

enum class BaselineMethod { tfidf, wordvec, embed };

inline const char* to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::tfidf: return "tfidf";
    case BaselineMethod::wordvec: return "wordvec";
    case BaselineMethod::embed: return "embed";
  }
  return "?";
}

inline const std::vector<int> kDefaultTrainSizes{10, 20, 50, 100, 200, 500};

struct TrainPlan {
  int n_train = 10;  // split evenly between the two sides
  int replicates = 5;
  std::uint64_t seed = 0;
  double l2_lambda = 1e-2;
};

inline void validate(const TrainPlan& p) {
  if (p.n_train < 2 || p.n_train % 2 != 0) {
    throw InvalidArgument("train plan: n_train must be even and >= 2, got " + std::to_string(p.n_train));
  }
  if (p.replicates < 1) throw InvalidArgument("train plan: replicates must be >= 1");
  if (!(p.l2_lambda >= 0)) throw InvalidArgument("train plan: l2_lambda must be >= 0");
}

// What each method needs besides the corpus.
struct BaselineResources {
  const WordVectorTable* word_vectors = nullptr;  // wordvec
  Provider* embedder = nullptr;                    // embed
};

struct Prediction {
  std::string id;
  FramingLabel truth;
  FramingLabel predicted;
  double logit;
};

struct ReplicateRun {
  int replicate = 0;
  std::vector<std::string> train_ids;
  std::vector<Prediction> predictions;  // one per test item, in test order
  TrainingMeta meta;
};

struct BaselineRun {
  BaselineMethod method;
  TrainPlan plan;
  std::vector<ReplicateRun> replicates;
};

namespace detail {

// n_train / 2 pool items per side, drawn per replicate from a stream keyed
// by (seed, replicate, side).
inline std::vector<LabelledText> sample_training(const EvalSplit& split, const TrainPlan& plan, int replicate) {
  const auto per_side = static_cast<std::size_t>(plan.n_train / 2);
  std::vector<LabelledText> out;
  for (int s = 0; s < 2; ++s) {
    const auto& pool = split.pool[s];
    if (pool.size() < per_side) {
      throw InvalidArgument("insufficient data: n_train = " + std::to_string(plan.n_train) + " needs " +
                            std::to_string(per_side) + " training sentences per side, side " + (s == 0 ? "A" : "B") +
                            " has " + std::to_string(pool.size()) + " outside the test set");
    }
    std::mt19937_64 rng(mix_seed(mix_seed(plan.seed, static_cast<std::uint64_t>(replicate)), static_cast<std::uint64_t>(s)));
    for (auto i : sample_without_replacement(rng, pool.size(), per_side)) out.push_back(pool[i]);
  }
  return out;
}

template <typename Row, typename Featurize>
ReplicateRun fit_and_predict(const std::vector<LabelledText>& train, const EvalSplit& split, const TrainPlan& plan,
                             int replicate, Featurize&& featurize) {
  std::vector<Row> X;
  std::vector<int> y;
  ReplicateRun run;
  run.replicate = replicate;
  for (const auto& t : train) {
    X.push_back(featurize(t.text));
    y.push_back(t.truth == FramingLabel::A ? 1 : 0);
    run.train_ids.push_back(t.id);
  }
  const auto model = logistic_train(X, y, {plan.l2_lambda, 5000, 1e-6, plan.seed});
  run.meta = model.meta;
  run.meta.loss_history.clear();
  for (const auto& t : split.test) {
    const auto x = featurize(t.text);
    const double z = model.logit(x);
    run.predictions.push_back({t.id, t.truth, z > 0.0 ? FramingLabel::A : FramingLabel::B, z});
  }
  return run;
}

}  // namespace detail

// Per replicate: sample the training set, fit features (TF-IDF is fitted on
// the training texts only), train, and predict the fixed test set.
inline BaselineRun run_baseline(BaselineMethod method, const EvalSplit& split, const TrainPlan& plan,
                                const BaselineResources& res = {}) {
  validate(plan);
  if (split.test.empty()) throw InvalidArgument("run_baseline: empty test set");
  BaselineRun out{method, plan, {}};

  std::vector<std::vector<LabelledText>> trains;
  for (int r = 0; r < plan.replicates; ++r) trains.push_back(detail::sample_training(split, plan, r));

  switch (method) {
    case BaselineMethod::tfidf:
      for (int r = 0; r < plan.replicates; ++r) {
        std::vector<std::string> docs;
        for (const auto& t : trains[r]) docs.push_back(t.text);
        const auto vec = tfidf_fit(docs);
        out.replicates.push_back(detail::fit_and_predict<SparseVector>(
            trains[r], split, plan, r, [&](const std::string& s) { return vec.transform(s); }));
      }
      break;
    case BaselineMethod::wordvec: {
      if (res.word_vectors == nullptr) throw ConfigError("wordvec baseline needs a word-vector table");
      for (int r = 0; r < plan.replicates; ++r) {
        out.replicates.push_back(detail::fit_and_predict<DenseVector>(
            trains[r], split, plan, r, [&](const std::string& s) { return pool_word_vectors(s, *res.word_vectors); }));
      }
      break;
    }
    case BaselineMethod::embed: {
      if (res.embedder == nullptr) throw ConfigError("embed baseline needs an embedding provider");
      std::vector<std::string> needed;
      std::set<std::string> seen;
      auto want = [&](const std::string& s) {
        if (seen.insert(s).second) needed.push_back(s);
      };
      for (const auto& t : split.test) want(t.text);
      for (const auto& tr : trains) {
        for (const auto& t : tr) want(t.text);
      }
      const auto vectors = fetch_embeddings(needed, *res.embedder);
      std::map<std::string, const DenseVector*> lookup;
      for (std::size_t i = 0; i < needed.size(); ++i) lookup.emplace(needed[i], &vectors[i]);
      for (int r = 0; r < plan.replicates; ++r) {
        out.replicates.push_back(detail::fit_and_predict<DenseVector>(
            trains[r], split, plan, r, [&](const std::string& s) { return *lookup.at(s); }));
      }
      break;
    }
  }
  return out;
}

}  // namespace framing
