#pragma once

#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include <openssl/evp.h>

#include "json.hpp"

#include "framing/provider.hpp"

namespace framing {

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

// Content-addressed key over (endpoint, model, normalized request). Object
// keys serialize sorted, so equal requests hash equally.
inline std::string cache_key(const std::string& endpoint, const std::string& model, const nlohmann::json& request) {
  return sha256_hex(endpoint + "\n" + model + "\n" + request.dump());
}

// Response store with an optional append-only backing file of
// {"key": <hex>, "response": <json>} lines. Concurrent readers, serialized
// writers. Concurrent misses on one key share a single computation.
class ResponseCache {
 public:
  ResponseCache() = default;

  explicit ResponseCache(std::filesystem::path file) : file_(std::move(file)) {
    std::ifstream in(*file_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        auto rec = nlohmann::json::parse(line);
        entries_[rec.at("key").get<std::string>()] = rec.at("response");
      } catch (const nlohmann::json::exception&) {
        // Torn final line from an interrupted run; the entry is recomputed.
      }
    }
  }

  std::optional<nlohmann::json> get(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& key, const nlohmann::json& response) {
    std::unique_lock lock(mu_);
    if (!entries_.emplace(key, response).second) return;
    if (file_) {
      std::ofstream out(*file_, std::ios::app);
      out << nlohmann::json{{"key", key}, {"response", response}}.dump() << '\n';
    }
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  // Returns the cached response, or runs `compute` (once per key even under
  // concurrency) and stores its result. `computed` reports which happened.
  template <typename Compute>
  nlohmann::json get_or_compute(const std::string& key, Compute&& compute, bool& computed) {
    computed = false;
    if (auto hit = get(key)) return *hit;

    std::shared_future<nlohmann::json> pending;
    std::promise<nlohmann::json> promise;
    {
      std::lock_guard lock(inflight_mu_);
      if (auto hit = get(key)) return *hit;
      auto it = inflight_.find(key);
      if (it != inflight_.end()) {
        pending = it->second;
      } else {
        inflight_.emplace(key, promise.get_future().share());
      }
    }
    if (pending.valid()) return pending.get();

    try {
      nlohmann::json result = compute();
      put(key, result);
      promise.set_value(result);
      std::lock_guard lock(inflight_mu_);
      inflight_.erase(key);
      computed = true;
      return result;
    } catch (...) {
      promise.set_exception(std::current_exception());
      std::lock_guard lock(inflight_mu_);
      inflight_.erase(key);
      throw;
    }
  }

 private:
  std::optional<std::filesystem::path> file_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, nlohmann::json> entries_;
  std::mutex inflight_mu_;
  std::map<std::string, std::shared_future<nlohmann::json>> inflight_;
};

// Forwards everything to another provider.
class ForwardingProvider : public Provider {
 public:
  explicit ForwardingProvider(Provider& inner) : inner_(inner) {}
  std::string model() const override { return inner_.model(); }
  std::string endpoint() const override { return inner_.endpoint(); }
  int max_parallel() const override { return inner_.max_parallel(); }

 protected:
  ScoredSequence do_score_text(std::string_view text) override { return inner_.score_text(text); }
  FirstTokenDistribution do_first_token_logprobs(const ChatTranscript& m, int top_n) override {
    return inner_.first_token_logprobs(m, top_n);
  }
  Completion do_generate(const ChatTranscript& m, double t) override { return inner_.generate(m, t); }
  EmbeddingBatch do_embed(std::span<const std::string> texts) override { return inner_.embed(texts); }

  Provider& inner_;
};

// Counts the calls and token usage that pass through it. Placed under a
// cache, it sees exactly the upstream traffic of one consumer.
class MeteredProvider final : public ForwardingProvider {
 public:
  using ForwardingProvider::ForwardingProvider;

 protected:
  ScoredSequence do_score_text(std::string_view text) override {
    auto r = inner_.score_text(text);
    stats_.record(r.usage);
    return r;
  }
  FirstTokenDistribution do_first_token_logprobs(const ChatTranscript& m, int top_n) override {
    auto r = inner_.first_token_logprobs(m, top_n);
    stats_.record(r.usage);
    return r;
  }
  Completion do_generate(const ChatTranscript& m, double t) override {
    auto r = inner_.generate(m, t);
    stats_.record(r.usage);
    return r;
  }
  EmbeddingBatch do_embed(std::span<const std::string> texts) override {
    auto r = inner_.embed(texts);
    stats_.record(r.usage);
    return r;
  }
};

// Serves score_text, first_token_logprobs and embed from a ResponseCache.
// Generation is sampling and always goes upstream. Hits report zero usage.
class CachingProvider final : public ForwardingProvider {
 public:
  CachingProvider(Provider& inner, ResponseCache& cache) : ForwardingProvider(inner), cache_(cache) {}

  std::int64_t hits() const { return hits_; }
  std::int64_t misses() const { return misses_; }

 protected:
  ScoredSequence do_score_text(std::string_view text) override {
    nlohmann::json req{{"op", "score"}, {"text", text}};
    auto j = lookup(req, [&] { return nlohmann::json(inner_.score_text(text)); });
    return j.get<ScoredSequence>();
  }

  FirstTokenDistribution do_first_token_logprobs(const ChatTranscript& m, int top_n) override {
    nlohmann::json req{{"op", "first_token"}, {"messages", m}, {"top_n", top_n}};
    auto j = lookup(req, [&] { return nlohmann::json(inner_.first_token_logprobs(m, top_n)); });
    return j.get<FirstTokenDistribution>();
  }

  // Per-text entries; the distinct misses go upstream as one batch.
  EmbeddingBatch do_embed(std::span<const std::string> texts) override {
    EmbeddingBatch out;
    out.vectors.resize(texts.size());
    std::vector<std::string> missing;
    std::map<std::string, std::vector<std::size_t>> slots;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const auto key = embed_key(texts[i]);
      if (auto hit = cache_.get(key)) {
        out.vectors[i] = hit->get<DenseVector>();
        ++hits_;
        continue;
      }
      auto& s = slots[texts[i]];
      if (s.empty()) missing.push_back(texts[i]);
      s.push_back(i);
    }
    if (!missing.empty()) {
      ++misses_;
      auto fresh = inner_.embed(missing);
      out.usage = fresh.usage;
      for (std::size_t m = 0; m < missing.size(); ++m) {
        cache_.put(embed_key(missing[m]), fresh.vectors[m]);
        for (auto i : slots[missing[m]]) out.vectors[i] = fresh.vectors[m];
      }
    }
    return out;
  }

 private:
  template <typename Compute>
  nlohmann::json lookup(const nlohmann::json& request, Compute&& compute) {
    bool computed = false;
    auto j = cache_.get_or_compute(cache_key(endpoint(), model(), request), compute, computed);
    if (computed) {
      ++misses_;
    } else {
      ++hits_;
      j["usage"] = Usage{};
    }
    return j;
  }

  std::string embed_key(const std::string& text) const {
    return cache_key(endpoint(), model(), {{"op", "embed"}, {"text", text}});
  }

  ResponseCache& cache_;
  std::atomic<std::int64_t> hits_{0};
  std::atomic<std::int64_t> misses_{0};
};

}  // namespace framing
