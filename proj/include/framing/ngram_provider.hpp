#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "framing/provider.hpp"

namespace framing {

// Character-level (byte) n-gram model with add-alpha smoothing.
//
// The context of position i is the previous min(i, order) characters, so the
// opening characters of a text are predicted from truncated contexts learned
// at the start of each training document. Unseen contexts fall back to the
// uniform distribution 1/|V|. Immutable after construction.
class NgramProvider final : public Provider {
 public:
  NgramProvider(const std::vector<std::string>& corpus, int order, double alpha,
                std::string_view extra_alphabet = {}, std::string name = {})
      : order_(order), alpha_(alpha), name_(std::move(name)) {
    if (order < 1) throw InvalidArgument("ngram_fit: order must be >= 1");
    if (!(alpha > 0.0)) throw InvalidArgument("ngram_fit: smoothing_alpha must be > 0");
    if (corpus.empty()) throw InvalidArgument("ngram_fit: empty corpus");
    if (name_.empty()) name_ = "ngram-o" + std::to_string(order);

    std::set<char> chars(extra_alphabet.begin(), extra_alphabet.end());
    for (const auto& doc : corpus) chars.insert(doc.begin(), doc.end());
    if (chars.empty()) throw InvalidArgument("ngram_fit: corpus has no characters");
    vocab_.assign(chars.begin(), chars.end());
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_[static_cast<unsigned char>(vocab_[i])] = static_cast<int>(i);

    for (const auto& doc : corpus) {
      for (std::size_t i = 0; i < doc.size(); ++i) {
        auto& ctx = counts_[context_at(doc, i)];
        if (ctx.next.empty()) ctx.next.assign(vocab_.size(), 0);
        ctx.next[static_cast<std::size_t>(index_[static_cast<unsigned char>(doc[i])])] += 1;
        ctx.total += 1;
      }
    }
  }

  std::string model() const override { return name_; }
  int max_parallel() const override { return 8; }

  int order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  const std::vector<char>& vocabulary() const noexcept { return vocab_; }

  bool in_vocabulary(char c) const { return index_[static_cast<unsigned char>(c)] >= 0; }

  // Contexts observed during fitting (each is reachable by construction).
  std::vector<std::string> observed_contexts() const {
    std::vector<std::string> out;
    out.reserve(counts_.size());
    for (const auto& [ctx, _] : counts_) out.push_back(ctx);
    std::sort(out.begin(), out.end());
    return out;
  }

  // Context used to predict text[i].
  std::string context_at(std::string_view text, std::size_t i) const {
    const std::size_t len = std::min(i, static_cast<std::size_t>(order_));
    return std::string(text.substr(i - len, len));
  }

  double log_prob(std::string_view context, char next) const {
    const int idx = index_[static_cast<unsigned char>(next)];
    if (idx < 0) {
      throw ProviderError(ProviderErrorKind::Permanent,
                          std::string("character '") + next + "' is outside the model vocabulary");
    }
    const double v = static_cast<double>(vocab_.size());
    auto it = counts_.find(std::string(context));
    if (it == counts_.end()) return -std::log(v);
    const double c = static_cast<double>(it->second.next[static_cast<std::size_t>(idx)]);
    return std::log((c + alpha_) / (static_cast<double>(it->second.total) + alpha_ * v));
  }

 protected:
  ScoredSequence do_score_text(std::string_view text) override {
    std::vector<Token> tokens;
    tokens.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      tokens.push_back({std::string(1, text[i]), log_prob(context_at(text, i), text[i])});
    }
    Usage usage{static_cast<std::int64_t>(text.size()), 0};
    stats_.record(usage);
    return make_scored_sequence(std::string(text), std::move(tokens), usage);
  }

  // Next-character distributions after the flattened transcript: position 1
  // from the transcript itself, position 2 after its most likely character.
  FirstTokenDistribution do_first_token_logprobs(const ChatTranscript& messages, int top_n) override {
    std::string context;
    for (const auto& m : messages) {
      if (!context.empty()) context += '\n';
      context += m.content;
    }
    FirstTokenDistribution dist;
    std::string tail = context;
    for (int pos = 0; pos < 2; ++pos) {
      const auto ctx = context_at(tail, tail.size());
      std::vector<std::pair<double, char>> ranked;
      for (char c : vocab_) ranked.emplace_back(log_prob(ctx, c), c);
      std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      std::map<std::string, double> entries;
      for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(top_n); ++i) {
        entries[std::string(1, ranked[i].second)] = ranked[i].first;
      }
      dist.positions.push_back(std::move(entries));
      tail.push_back(ranked.front().second);
    }
    dist.usage = {static_cast<std::int64_t>(context.size()), 2};
    stats_.record(dist.usage);
    return dist;
  }

  // Relative character frequencies over the vocabulary; a cheap stand-in for
  // an embedding endpoint in offline runs.
  EmbeddingBatch do_embed(std::span<const std::string> texts) override {
    EmbeddingBatch batch;
    for (const auto& text : texts) {
      DenseVector v(vocab_.size(), 0.0);
      double n = 0;
      for (char c : text) {
        const int idx = index_[static_cast<unsigned char>(c)];
        if (idx >= 0) {
          v[static_cast<std::size_t>(idx)] += 1.0;
          n += 1.0;
        }
      }
      if (n > 0) for (auto& x : v) x /= n;
      batch.vectors.push_back(std::move(v));
      batch.usage.input_tokens += static_cast<std::int64_t>(text.size());
    }
    stats_.record(batch.usage);
    return batch;
  }

 private:
  struct ContextCounts {
    std::vector<long> next;
    long total = 0;
  };

  int order_;
  double alpha_;
  std::string name_;
  std::vector<char> vocab_;
  std::array<int, 256> index_ = make_unset_index();
  std::unordered_map<std::string, ContextCounts> counts_;

  static std::array<int, 256> make_unset_index() {
    std::array<int, 256> a{};
    a.fill(-1);
    return a;
  }
};

inline std::unique_ptr<NgramProvider> ngram_fit(const std::vector<std::string>& corpus, int order,
                                                double smoothing_alpha, std::string_view extra_alphabet = {}) {
  return std::make_unique<NgramProvider>(corpus, order, smoothing_alpha, extra_alphabet);
}

}  // namespace framing
