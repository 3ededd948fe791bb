#pragma once

// A two-sided corpus whose sides draw words from disjoint, small
// vocabularies, plus matching word-vector tables and embedding stubs in which
// the side is visible along the first axis.

#include <algorithm>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "framing/corpus.hpp"
#include "framing/features.hpp"
#include "framing/sampling.hpp"
#include "framing/scripted_provider.hpp"
#include "desk_corpus.hpp"

namespace framing::testdata {

inline std::vector<std::string> vocabulary(const desk::Style& style, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> words;
  while (static_cast<int>(words.size()) < size) {
    std::string w;
    const int len = 3 + static_cast<int>(rng() % 4);
    for (int i = 0; i < len; ++i) w += style.alphabet[rng() % style.alphabet.size()];
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  return words;
}

inline std::string sentence_from(const std::vector<std::string>& vocab, std::mt19937_64& rng) {
  const int n = 5 + static_cast<int>(rng() % 5);
  std::string s;
  for (int i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += vocab[rng() % vocab.size()];
  }
  return s + ".";
}

inline FramingCorpus separable_corpus(const std::string& topic, int per_side, std::uint64_t seed) {
  FramingCorpus c;
  c.topic = topic;
  const desk::Style* styles[2] = {&desk::kStyleA, &desk::kStyleB};
  const char* labels[2] = {"style-a", "style-b"};
  for (int s = 0; s < 2; ++s) {
    const auto vocab = vocabulary(*styles[s], 40, seed * 2 + static_cast<std::uint64_t>(s));
    std::mt19937_64 rng(seed * 7919 + static_cast<std::uint64_t>(s));
    auto& side = c.sides[s];
    side.label = labels[s];
    for (int i = 0; i < 5; ++i) side.seeds.push_back(sentence_from(vocab, rng));
    for (int i = 0; i < 5; ++i) side.distilled.push_back(sentence_from(vocab, rng));
    side.summary = sentence_from(vocab, rng);
    for (int i = 0; i < per_side; ++i) side.sentences.push_back(sentence_from(vocab, rng));
  }
  return c;
}

namespace detail {

// Side A words point along +x, side B words along -x, other axes are noise.
inline DenseVector word_vector(const std::string& word, std::size_t dim) {
  std::mt19937_64 rng(fnv1a(word));
  std::normal_distribution<double> n01;
  DenseVector v(dim);
  for (auto& x : v) x = n01(rng) * 0.5;
  const bool side_a = desk::kStyleA.alphabet.find(word[0]) != std::string::npos;
  v[0] += side_a ? 1.0 : -1.0;
  return v;
}

inline std::vector<std::string> words_of(const FramingCorpus& c) {
  std::vector<std::string> words;
  for (const auto& side : c.sides) {
    for (const auto& s : side.sentences) {
      std::istringstream in(s);
      std::string w;
      while (in >> w) {
        if (w.back() == '.') w.pop_back();
        if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
      }
    }
  }
  return words;
}

}  // namespace detail

inline WordVectorTable word_vectors_for(const FramingCorpus& c, std::size_t dim) {
  const auto words = detail::words_of(c);
  std::ostringstream file;
  file.precision(17);
  file << words.size() << ' ' << dim << '\n';
  for (const auto& w : words) {
    file << w;
    for (double x : detail::word_vector(w, dim)) file << ' ' << x;
    file << '\n';
  }
  std::istringstream in(file.str());
  return parse_word_vectors(in);
}

inline std::unique_ptr<ScriptedProvider> embedding_provider_for(const FramingCorpus& c, std::size_t dim) {
  const auto table = word_vectors_for(c, dim);
  nlohmann::json embed = nlohmann::json::object();
  for (const auto& side : c.sides) {
    for (const auto& s : side.sentences) embed[s] = pool_word_vectors(s, table);
  }
  return ScriptedProvider::from_json({{"model", "embed-stub"}, {"embed", embed}});
}

}  // namespace framing::testdata
