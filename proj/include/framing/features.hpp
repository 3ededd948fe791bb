#pragma once

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "framing/error.hpp"
#include "framing/numeric.hpp"
#include "framing/provider.hpp"
#include "framing/text.hpp"

namespace framing {

// Index-sorted (index, weight) pairs over a space of `dim` features.
struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::pair<std::size_t, double>> entries;
};

inline std::size_t dimension(const SparseVector& v) { return v.dim; }
inline std::size_t dimension(const DenseVector& v) { return v.size(); }

inline double squared_norm(const SparseVector& v) {
  double s = 0;
  for (const auto& [_, x] : v.entries) s += x * x;
  return s;
}

inline double squared_norm(const DenseVector& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s;
}

inline double dot(const DenseVector& w, const DenseVector& x) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
  return s;
}

inline double dot(const DenseVector& w, const SparseVector& x) {
  double s = 0;
  for (const auto& [i, v] : x.entries) s += w[i] * v;
  return s;
}

// g += scale * x
inline void add_scaled(DenseVector& g, const DenseVector& x, double scale) {
  for (std::size_t i = 0; i < x.size(); ++i) g[i] += scale * x[i];
}

inline void add_scaled(DenseVector& g, const SparseVector& x, double scale) {
  for (const auto& [i, v] : x.entries) g[i] += scale * v;
}

// ---- TF-IDF ---------------------------------------------------------------

// Vocabulary from lowercased, punctuation-stripped, whitespace-split
// unigrams; idf(t) = ln((1 + N) / (1 + df(t))) + 1.
struct TfidfVectorizer {
  std::map<std::string, std::size_t> vocabulary;  // term -> feature index (sorted terms)
  std::vector<double> idf;
  std::size_t documents = 0;

  std::size_t dim() const { return idf.size(); }

  // tf * idf over in-vocabulary terms, L2-normalized; the zero vector when
  // no term is known.
  SparseVector transform(std::string_view text) const {
    std::map<std::size_t, double> tf;
    for (const auto& tok : word_tokens(text)) {
      if (auto it = vocabulary.find(tok); it != vocabulary.end()) tf[it->second] += 1.0;
    }
    SparseVector v{dim(), {}};
    double norm2 = 0;
    for (const auto& [i, count] : tf) {
      const double w = count * idf[i];
      v.entries.emplace_back(i, w);
      norm2 += w * w;
    }
    if (norm2 > 0) {
      const double norm = std::sqrt(norm2);
      for (auto& [_, w] : v.entries) w /= norm;
    }
    return v;
  }
};

inline TfidfVectorizer tfidf_fit(const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw InvalidArgument("tfidf_fit: empty corpus");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    const auto toks = word_tokens(doc);
    for (const auto& t : std::set<std::string>(toks.begin(), toks.end())) ++df[t];
  }
  TfidfVectorizer v;
  v.documents = corpus.size();
  const double n = static_cast<double>(corpus.size());
  for (const auto& [term, count] : df) {
    v.vocabulary.emplace(term, v.idf.size());
    v.idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return v;
}

// ---- pre-trained word vectors --------------------------------------------

struct WordVectorTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, DenseVector> vectors;
};

// Text format: a "count dim" header, then one "token v1 ... v_dim" per line.
inline WordVectorTable parse_word_vectors(std::istream& in, const std::string& source = "word vectors") {
  WordVectorTable table;
  std::string line;
  std::size_t count = 0;
  {
    if (!std::getline(in, line)) throw ConfigError(source + ": missing 'count dim' header");
    std::istringstream header(line);
    if (!(header >> count >> table.dim) || table.dim == 0) {
      throw ConfigError(source + ": bad header '" + line + "', expected 'count dim'");
    }
  }
  std::size_t lineno = 1, rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    DenseVector v;
    v.reserve(table.dim);
    double x;
    while (row >> x) {
      if (!std::isfinite(x)) throw ConfigError(source + ": non-finite value on line " + std::to_string(lineno));
      v.push_back(x);
    }
    if (!row.eof()) throw ConfigError(source + ": unparseable number on line " + std::to_string(lineno));
    if (v.size() != table.dim) {
      throw ConfigError(source + ": line " + std::to_string(lineno) + " has " + std::to_string(v.size()) +
                        " components, header says " + std::to_string(table.dim));
    }
    ++rows;
    table.vectors.emplace(std::move(token), std::move(v));  // first occurrence wins
  }
  if (rows != count) {
    throw ConfigError(source + ": header announces " + std::to_string(count) + " vectors, file has " +
                      std::to_string(rows));
  }
  return table;
}

inline WordVectorTable load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read word vectors " + path.string());
  return parse_word_vectors(in, path.string());
}

// Mean of the vectors of in-table tokens (punctuation stripped; exact case
// first, then lowercase); the zero vector when none is found.
inline DenseVector pool_word_vectors(std::string_view text, const WordVectorTable& table) {
  if (table.vectors.empty()) throw InvalidArgument("pool_word_vectors: empty table");
  std::string cleaned;
  for (char c : text) {
    if (!std::ispunct(static_cast<unsigned char>(c))) cleaned.push_back(c);
  }
  std::vector<const DenseVector*> hits;
  for (const auto& tok : whitespace_tokens(cleaned)) {
    auto it = table.vectors.find(tok);
    if (it == table.vectors.end()) it = table.vectors.find(to_lower(tok));
    if (it != table.vectors.end()) hits.push_back(&it->second);
  }
  DenseVector out(table.dim, 0.0);
  if (hits.empty()) return out;
  std::vector<double> column(hits.size());
  for (std::size_t d = 0; d < table.dim; ++d) {
    for (std::size_t h = 0; h < hits.size(); ++h) column[h] = (*hits[h])[d];
    out[d] = exact_mean(column);  // order-independent, so pooling is permutation-invariant
  }
  return out;
}

// ---- contextual embeddings -------------------------------------------------

// One vector per input text, in input order. Distinct texts are sent once,
// in batches; wrap the provider in a CachingProvider to reuse across calls.
inline std::vector<DenseVector> fetch_embeddings(const std::vector<std::string>& texts, Provider& provider,
                                                 std::size_t batch_size = 128) {
  if (texts.empty()) return {};
  std::vector<std::string> distinct;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& t : texts) {
    if (slot.emplace(t, distinct.size()).second) distinct.push_back(t);
  }
  std::vector<DenseVector> vectors;
  vectors.reserve(distinct.size());
  for (std::size_t start = 0; start < distinct.size(); start += batch_size) {
    const auto end = std::min(distinct.size(), start + batch_size);
    auto batch = provider.embed(std::span<const std::string>(distinct.data() + start, end - start));
    for (auto& v : batch.vectors) vectors.push_back(std::move(v));
  }
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size() || v.empty()) {
      throw ProviderError(ProviderErrorKind::Permanent, "embedding dimensions are inconsistent");
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw ProviderError(ProviderErrorKind::Permanent, "non-finite embedding component");
    }
  }
  std::vector<DenseVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(vectors[slot.at(t)]);
  return out;
}

}  // namespace framing
