#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "framing/corpus.hpp"
#include "framing/sampling.hpp"

namespace framing {

struct LabelledText {
  std::string id;  // "<side letter>-<sentence index>"
  std::string text;
  FramingLabel truth;
};

// A fixed held-out test set shared by every method on a topic, and the
// remaining sentences of each side as the training pool.
struct EvalSplit {
  std::vector<LabelledText> test;                   // side A items, then side B
  std::array<std::vector<LabelledText>, 2> pool;    // training candidates per side
};

inline EvalSplit make_split(const FramingCorpus& corpus, std::size_t test_per_side, std::uint64_t seed) {
  EvalSplit split;
  for (int s = 0; s < 2; ++s) {
    const auto& sentences = corpus.sides[s].sentences;
    if (sentences.size() <= test_per_side) {
      throw InvalidArgument("split: side '" + corpus.sides[s].label + "' of '" + corpus.topic + "' has " +
                            std::to_string(sentences.size()) + " sentences; " + std::to_string(test_per_side) +
                            " test items plus training data are required");
    }
    std::mt19937_64 rng(mix_seed(mix_seed(seed, fnv1a(corpus.topic)), static_cast<std::uint64_t>(s)));
    std::vector<std::size_t> order(sentences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(rng, order);
    const auto label = s == 0 ? FramingLabel::A : FramingLabel::B;
    const std::string prefix = s == 0 ? "a-" : "b-";
    for (std::size_t i = 0; i < order.size(); ++i) {
      LabelledText item{prefix + std::to_string(order[i]), sentences[order[i]], label};
      (i < test_per_side ? split.test : split.pool[s]).push_back(std::move(item));
    }
  }
  return split;
}

}  // namespace framing
