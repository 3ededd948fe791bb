#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/cache.hpp"
#include "framing/corpus.hpp"
#include "framing/error.hpp"
#include "framing/numeric.hpp"
#include "framing/provider.hpp"
#include "framing/text.hpp"

namespace framing {

// ---- numbered-list grammar --------------------------------------------------
//
//   document := blank* section+ blank*            (with headers)
//             | blank* item+ blank*               (plain list)
//   section  := header NL blank* item+ blank*
//   header   := "Perspective" SP ("A" | "B") ":"
//   item     := INT ("." | ")") SP text NL        numbering starts at 1, +1 each
//   text     := any non-empty line remainder
//
// Anything else is a parse error.

class ListParseError : public Error {
 public:
  using Error::Error;
};

namespace detail {

class ListParser {
 public:
  explicit ListParser(std::string_view input) {
    std::size_t start = 0;
    while (start <= input.size()) {
      auto end = input.find('\n', start);
      if (end == std::string_view::npos) end = input.size();
      lines_.emplace_back(trim(input.substr(start, end - start)));
      start = end + 1;
    }
  }

  std::vector<std::string> plain_list() {
    skip_blank();
    auto items = item_list();
    skip_blank();
    expect_end();
    return items;
  }

  std::vector<std::pair<std::string, std::vector<std::string>>> sections() {
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    skip_blank();
    while (!at_end()) {
      auto name = header();
      skip_blank();
      out.emplace_back(std::move(name), item_list());
      skip_blank();
    }
    if (out.empty()) fail("expected a 'Perspective A:' header");
    return out;
  }

 private:
  bool at_end() const { return pos_ >= lines_.size(); }
  void skip_blank() {
    while (!at_end() && lines_[pos_].empty()) ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ListParseError("line " + std::to_string(pos_ + 1) + ": " + what);
  }
  void expect_end() const {
    if (!at_end()) fail("unexpected text '" + lines_[pos_] + "'");
  }

  std::string header() {
    const auto& line = lines_[pos_];
    static constexpr std::string_view kPrefix = "Perspective ";
    if (line.size() != kPrefix.size() + 2 || line.compare(0, kPrefix.size(), kPrefix) != 0 || line.back() != ':' ||
        (line[kPrefix.size()] != 'A' && line[kPrefix.size()] != 'B')) {
      fail("expected 'Perspective A:' or 'Perspective B:', got '" + line + "'");
    }
    ++pos_;
    return std::string(1, line[kPrefix.size()]);
  }

  // Returns the item text, or nullopt if the line is not an item.
  static std::optional<std::string> item(const std::string& line, int expected, std::string& error) {
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == 0 || i > 6) return std::nullopt;
    if (i >= line.size() || (line[i] != '.' && line[i] != ')')) return std::nullopt;
    if (i + 1 >= line.size() || line[i + 1] != ' ') return std::nullopt;
    const int number = std::stoi(line.substr(0, i));
    if (number != expected) {
      error = "item numbered " + std::to_string(number) + ", expected " + std::to_string(expected);
      return std::nullopt;
    }
    std::string text(trim(std::string_view(line).substr(i + 2)));
    if (text.empty()) {
      error = "empty item " + std::to_string(number);
      return std::nullopt;
    }
    return text;
  }

  std::vector<std::string> item_list() {
    std::vector<std::string> items;
    while (!at_end() && !lines_[pos_].empty()) {
      std::string error;
      auto text = item(lines_[pos_], static_cast<int>(items.size()) + 1, error);
      if (!text) {
        if (!error.empty()) fail(error);
        if (items.empty()) fail("expected '1. <text>', got '" + lines_[pos_] + "'");
        break;  // a header or other line ends the list
      }
      items.push_back(std::move(*text));
      ++pos_;
    }
    if (items.empty()) fail("expected a numbered item");
    return items;
  }

  std::vector<std::string> lines_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::string> parse_numbered_list(std::string_view text) {
  return detail::ListParser(text).plain_list();
}

struct PerspectivePair {
  std::vector<std::string> a;
  std::vector<std::string> b;
};

// Exactly one "Perspective A:" section followed by one "Perspective B:".
inline PerspectivePair parse_perspectives(std::string_view text) {
  auto sections = detail::ListParser(text).sections();
  if (sections.size() != 2 || sections[0].first != "A" || sections[1].first != "B") {
    throw ListParseError("expected exactly the sections 'Perspective A:' then 'Perspective B:'");
  }
  return {std::move(sections[0].second), std::move(sections[1].second)};
}

// ---- generation -------------------------------------------------------------

struct SynthPrompts {
  std::string version;
  std::string hash;  // sha256 of the asset text
  std::string system, seeds, sentences, refill, distill, summary, name;
};

inline SynthPrompts load_synth_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read generation prompts " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  SynthPrompts p;
  try {
    const auto j = nlohmann::json::parse(ss.str());
    p.version = j.at("version").get<std::string>();
    p.system = j.at("system").get<std::string>();
    p.seeds = j.at("seeds").get<std::string>();
    p.sentences = j.at("sentences").get<std::string>();
    p.refill = j.at("refill").get<std::string>();
    p.distill = j.at("distill").get<std::string>();
    p.summary = j.at("summary").get<std::string>();
    p.name = j.at("name").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("generation prompts " + path.string() + ": " + e.what());
  }
  p.hash = sha256_hex(ss.str());
  return p;
}

inline std::filesystem::path default_synth_prompts_path() {
  return std::filesystem::path(FRAMING_ASSET_DIR) / "synthgen_prompts_v1.json";
}

struct SynthOptions {
  double temperature = 0.5;
  int seeds_per_side = 5;
  int sentences_per_side = 50;
  int batch_size = 25;   // sentences requested per call
  int max_attempts = 3;  // consecutive unparseable replies tolerated per step
  int max_refills = 5;   // extra calls allowed to make up for duplicates
  std::string timestamp;  // recorded verbatim; injectable for reproducibility
};

inline void validate(const SynthOptions& o) {
  if (!(o.temperature >= 0.0)) throw ConfigError("synthgen: temperature must be >= 0");
  if (o.seeds_per_side < 1 || o.sentences_per_side < 1 || o.batch_size < 1) {
    throw ConfigError("synthgen: seeds_per_side, sentences_per_side and batch_size must be >= 1");
  }
  if (o.max_attempts < 1 || o.max_refills < 0) throw ConfigError("synthgen: bad attempt limits");
}

// Every request and reply of one generation step.
struct Transcript {
  std::string step;
  std::vector<ChatMessage> exchanges;  // user prompt, assistant reply, ...

  nlohmann::json to_json() const { return {{"step", step}, {"exchanges", exchanges}}; }
  std::string flat() const {
    std::string out;
    for (const auto& m : exchanges) out += m.role + ": " + m.content + "\n";
    return out;
  }
};

namespace detail {

inline std::string bullet_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += '\n';
    out += "- " + s;
  }
  return out;
}

// Sends `prompt` until `parse` accepts the reply or attempts run out.
template <typename Parse>
auto generate_parsed(Provider& provider, const SynthPrompts& prompts, const std::string& prompt, double temperature,
                     int max_attempts, Transcript& transcript, Parse&& parse) {
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    const auto reply = provider.generate({{"system", prompts.system}, {"user", prompt}}, temperature);
    transcript.exchanges.push_back({"user", prompt});
    transcript.exchanges.push_back({"assistant", reply.text});
    try {
      return parse(reply.text);
    } catch (const ListParseError& e) {
      last_error = e.what();
    }
  }
  throw GenerationError(transcript.step + ": no parseable reply after " + std::to_string(max_attempts) +
                            " attempts (" + last_error + ")",
                        transcript.flat());
}

}  // namespace detail

struct SeedSets {
  std::vector<std::string> a;
  std::vector<std::string> b;
  Transcript transcript;
};

inline SeedSets gen_seeds(const std::string& topic, Provider& provider, const SynthPrompts& prompts,
                          const SynthOptions& opt = {}) {
  validate(opt);
  SeedSets out;
  out.transcript.step = "seeds";
  const auto prompt = fill_placeholders(prompts.seeds, {{"topic", topic}, {"n", std::to_string(opt.seeds_per_side)}});
  const auto n = static_cast<std::size_t>(opt.seeds_per_side);
  auto pair = detail::generate_parsed(provider, prompts, prompt, opt.temperature, opt.max_attempts, out.transcript,
                                      [&](const std::string& reply) {
                                        auto p = parse_perspectives(reply);
                                        if (p.a.size() < n || p.b.size() < n) {
                                          throw ListParseError("fewer than " + std::to_string(n) +
                                                               " seeds in a perspective");
                                        }
                                        p.a.resize(n);
                                        p.b.resize(n);
                                        return p;
                                      });
  out.a = std::move(pair.a);
  out.b = std::move(pair.b);
  return out;
}

struct SentenceSet {
  std::vector<std::string> sentences;
  Transcript transcript;
};

// Exactly `count` sentences, unique after lowercasing and whitespace
// collapse. Duplicates (including of seeds) are dropped and refilled.
inline SentenceSet gen_sentences(const std::string& topic, const std::vector<std::string>& seeds, int count,
                                 Provider& provider, const SynthPrompts& prompts, const SynthOptions& opt = {}) {
  validate(opt);
  if (seeds.empty()) throw InvalidArgument("gen_sentences: no seeds");
  if (count < 1) throw InvalidArgument("gen_sentences: count must be >= 1");
  SentenceSet out;
  out.transcript.step = "sentences";
  std::set<std::string> seen;
  for (const auto& s : seeds) seen.insert(dedup_key(s));

  const auto seed_block = detail::bullet_list(seeds);
  int round = 0;
  int refills_used = 0;
  while (static_cast<int>(out.sentences.size()) < count) {
    const int remaining = count - static_cast<int>(out.sentences.size());
    const int ask = std::min(remaining, opt.batch_size);
    const bool first_pass_done = round * opt.batch_size >= count;
    if (first_pass_done) {
      if (refills_used == opt.max_refills) {
        throw GenerationError("sentences: only " + std::to_string(out.sentences.size()) + " unique of " +
                                  std::to_string(count) + " after " + std::to_string(opt.max_refills) + " refills",
                              out.transcript.flat());
      }
      ++refills_used;
    }
    ++round;
    const auto& pattern = first_pass_done ? prompts.refill : prompts.sentences;
    const auto prompt = fill_placeholders(
        pattern, {{"topic", topic}, {"seeds", seed_block}, {"n", std::to_string(ask)}, {"round", std::to_string(round)}});
    const auto items = detail::generate_parsed(provider, prompts, prompt, opt.temperature, opt.max_attempts,
                                               out.transcript, [](const std::string& r) { return parse_numbered_list(r); });
    for (const auto& s : items) {
      if (static_cast<int>(out.sentences.size()) == count) break;
      if (seen.insert(dedup_key(s)).second) out.sentences.push_back(s);
    }
  }
  return out;
}

struct Derivatives {
  std::vector<std::string> distilled;
  std::string summary;
  std::string name;
  Transcript transcript;
};

inline constexpr std::size_t kMaxNameTokens = 3;

// Strips wrapping quotes, trailing punctuation, and a "Name:" prefix.
inline std::string clean_name(std::string_view raw) {
  std::string s(trim(raw));
  if (auto colon = s.find(':'); colon != std::string::npos && to_lower(s.substr(0, colon)) == "name") {
    s = std::string(trim(std::string_view(s).substr(colon + 1)));
  }
  auto strip = [](char c) { return c == '"' || c == '\'' || c == '*' || c == '.' || c == '!' || c == '`'; };
  while (!s.empty() && strip(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && strip(s[i])) ++i;
  return std::string(trim(std::string_view(s).substr(i)));
}

// Distillation, summary and name, prompted from the seeds alone.
inline Derivatives gen_derivatives(const std::string& topic, const std::vector<std::string>& seeds, Provider& provider,
                                   const SynthPrompts& prompts, const SynthOptions& opt = {}) {
  validate(opt);
  if (seeds.empty()) throw InvalidArgument("gen_derivatives: no seeds");
  Derivatives out;
  out.transcript.step = "derivatives";
  const std::map<std::string, std::string> values{{"topic", topic}, {"seeds", detail::bullet_list(seeds)}};

  out.distilled = detail::generate_parsed(provider, prompts, fill_placeholders(prompts.distill, values),
                                          opt.temperature, opt.max_attempts, out.transcript, [](const std::string& r) {
                                            auto items = parse_numbered_list(r);
                                            if (items.size() != kDistilledSize) {
                                              throw ListParseError("distillation has " + std::to_string(items.size()) +
                                                                   " items, expected 5");
                                            }
                                            return items;
                                          });
  out.summary = detail::generate_parsed(provider, prompts, fill_placeholders(prompts.summary, values), opt.temperature,
                                        opt.max_attempts, out.transcript, [](const std::string& r) {
                                          std::string s(trim(r));
                                          if (s.empty()) throw ListParseError("empty summary");
                                          return s;
                                        });
  out.name = detail::generate_parsed(provider, prompts, fill_placeholders(prompts.name, values), opt.temperature,
                                     opt.max_attempts, out.transcript, [](const std::string& r) {
                                       const std::string_view t = trim(r);
                                       if (t.find('\n') != std::string_view::npos) {
                                         throw ListParseError("name spans several lines");
                                       }
                                       auto name = clean_name(t);
                                       const auto words = whitespace_tokens(name).size();
                                       if (words == 0 || words > kMaxNameTokens) {
                                         throw ListParseError("name '" + name + "' is not 1-3 words");
                                       }
                                       return name;
                                     });
  return out;
}

// Seeds for both sides, then per side: bulk sentences and derivatives.
inline FramingCorpus synthesize_corpus(const std::string& topic, Provider& provider, const SynthPrompts& prompts,
                                       const SynthOptions& opt = {}) {
  validate(opt);
  if (trim(topic).empty()) throw InvalidArgument("synthgen: empty topic");
  FramingCorpus corpus;
  corpus.topic = std::string(trim(topic));
  auto seeds = gen_seeds(corpus.topic, provider, prompts, opt);
  nlohmann::json transcripts = nlohmann::json::array({seeds.transcript.to_json()});

  const std::vector<std::string>* side_seeds[2] = {&seeds.a, &seeds.b};
  for (int i = 0; i < 2; ++i) {
    auto& side = corpus.sides[i];
    side.seeds = *side_seeds[i];
    auto bulk = gen_sentences(corpus.topic, side.seeds, opt.sentences_per_side, provider, prompts, opt);
    auto deriv = gen_derivatives(corpus.topic, side.seeds, provider, prompts, opt);
    side.sentences = std::move(bulk.sentences);
    side.distilled = std::move(deriv.distilled);
    side.summary = std::move(deriv.summary);
    side.label = std::move(deriv.name);
    auto bt = bulk.transcript.to_json();
    auto dt = deriv.transcript.to_json();
    bt["side"] = i == 0 ? "A" : "B";
    dt["side"] = i == 0 ? "A" : "B";
    transcripts.push_back(bt);
    transcripts.push_back(dt);
  }
  if (dedup_key(corpus.sides[0].label) == dedup_key(corpus.sides[1].label)) {
    throw GenerationError("both perspectives were named '" + corpus.sides[0].label + "'", transcripts.dump(2));
  }
  corpus.meta = {{"model_name", provider.model()},
                 {"temperature", opt.temperature},
                 {"prompts_version", prompts.version},
                 {"prompts_sha256", prompts.hash},
                 {"timestamp", opt.timestamp},
                 {"generator_version", FRAMING_VERSION},
                 {"transcripts", transcripts}};
  validate(corpus);
  return corpus;
}

// ---- balance audit ----------------------------------------------------------

struct Distribution {
  double mean = 0, sd = 0, min = 0, max = 0;
};

inline Distribution describe(const std::vector<double>& xs) {
  Distribution d;
  if (xs.empty()) return d;
  d.min = *std::min_element(xs.begin(), xs.end());
  d.max = *std::max_element(xs.begin(), xs.end());
  d.mean = exact_mean(xs);
  std::vector<double> sq;
  sq.reserve(xs.size());
  for (double x : xs) sq.push_back((x - d.mean) * (x - d.mean));
  d.sd = xs.size() > 1 ? std::sqrt(exact_sum(sq) / static_cast<double>(xs.size() - 1)) : 0.0;
  return d;
}

struct SideProfile {
  std::string label;
  std::size_t count = 0;
  Distribution chars, tokens, word_length;
};

struct BalanceReport {
  std::array<SideProfile, 2> sides;
  // Relative difference of side means: |a - b| / mean(a, b).
  double chars_divergence = 0, tokens_divergence = 0, word_length_divergence = 0;
  std::vector<std::string> flags;
};

inline constexpr double kBalanceThreshold = 0.15;
inline constexpr std::size_t kMinAuditSentences = 20;

inline BalanceReport balance_audit(const FramingCorpus& corpus) {
  BalanceReport r;
  for (int i = 0; i < 2; ++i) {
    const auto& side = corpus.sides[i];
    if (side.sentences.size() < kMinAuditSentences) {
      throw InvalidArgument("balance audit: side '" + side.label + "' has " + std::to_string(side.sentences.size()) +
                            " sentences, needs >= 20");
    }
    std::vector<double> chars, tokens, word_len;
    for (const auto& s : side.sentences) {
      const auto words = whitespace_tokens(s);
      chars.push_back(static_cast<double>(s.size()));
      tokens.push_back(static_cast<double>(words.size()));
      std::size_t letters = 0;
      for (const auto& w : words) letters += w.size();
      word_len.push_back(words.empty() ? 0.0 : static_cast<double>(letters) / static_cast<double>(words.size()));
    }
    r.sides[i] = {side.label, side.sentences.size(), describe(chars), describe(tokens), describe(word_len)};
  }
  auto divergence = [](double a, double b) {
    const double m = (a + b) / 2.0;
    return m == 0.0 ? 0.0 : std::fabs(a - b) / m;
  };
  r.chars_divergence = divergence(r.sides[0].chars.mean, r.sides[1].chars.mean);
  r.tokens_divergence = divergence(r.sides[0].tokens.mean, r.sides[1].tokens.mean);
  r.word_length_divergence = divergence(r.sides[0].word_length.mean, r.sides[1].word_length.mean);
  auto flag = [&](const char* what, double d) {
    if (d > kBalanceThreshold) {
      std::ostringstream os;
      os << what << " differs by " << std::lround(d * 100) << "% between sides (threshold 15%)";
      r.flags.push_back(os.str());
    }
  };
  flag("mean character length", r.chars_divergence);
  flag("mean token count", r.tokens_divergence);
  flag("mean word length", r.word_length_divergence);
  return r;
}

inline nlohmann::json to_json(const Distribution& d) {
  return {{"mean", d.mean}, {"sd", d.sd}, {"min", d.min}, {"max", d.max}};
}

inline nlohmann::json to_json(const BalanceReport& r) {
  nlohmann::json sides = nlohmann::json::array();
  for (const auto& s : r.sides) {
    sides.push_back({{"label", s.label},
                     {"count", s.count},
                     {"chars", to_json(s.chars)},
                     {"tokens", to_json(s.tokens)},
                     {"word_length", to_json(s.word_length)}});
  }
  return {{"sides", sides},
          {"divergence",
           {{"chars", r.chars_divergence}, {"tokens", r.tokens_divergence}, {"word_length", r.word_length_divergence}}},
          {"flags", r.flags}};
}

}  // namespace framing
