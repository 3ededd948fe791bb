#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/error.hpp"
#include "framing/logprob.hpp"
#include "framing/text.hpp"

namespace framing {

inline constexpr std::size_t kDistilledSize = 5;

struct FramingSide {
  std::string label;  // short name, usable as a classification label
  std::vector<std::string> seeds;
  std::vector<std::string> distilled;  // exactly kDistilledSize
  std::string summary;
  std::vector<std::string> sentences;  // bulk, all carrying this side's label
};

// Side A is sides[0], side B is sides[1]. `meta` records how the corpus was
// produced (model, temperature, prompt hash, timestamp, transcripts).
struct FramingCorpus {
  std::string topic;
  nlohmann::json meta = nlohmann::json::object();
  std::array<FramingSide, 2> sides;

  const FramingSide& side(FramingLabel l) const { return sides[l == FramingLabel::A ? 0 : 1]; }
};

inline void validate(const FramingCorpus& c) {
  if (trim(c.topic).empty()) throw ConfigError("corpus: empty topic");
  if (c.sides[0].label == c.sides[1].label) throw ConfigError("corpus '" + c.topic + "': side labels must differ");
  for (const auto& s : c.sides) {
    const std::string where = "corpus '" + c.topic + "' side '" + s.label + "'";
    if (trim(s.label).empty()) throw ConfigError("corpus '" + c.topic + "': empty side label");
    if (s.distilled.size() != kDistilledSize) {
      throw ConfigError(where + ": distilled must hold exactly 5 texts, has " + std::to_string(s.distilled.size()));
    }
    if (trim(s.summary).empty()) throw ConfigError(where + ": empty summary");
    for (const auto* list : {&s.seeds, &s.distilled, &s.sentences}) {
      for (const auto& t : *list) {
        if (trim(t).empty()) throw ConfigError(where + ": empty text");
      }
    }
  }
}

inline nlohmann::json to_json(const FramingCorpus& c) {
  nlohmann::json sides = nlohmann::json::array();
  for (const auto& s : c.sides) {
    sides.push_back({{"label", s.label},
                     {"seeds", s.seeds},
                     {"distilled", s.distilled},
                     {"summary", s.summary},
                     {"sentences", s.sentences}});
  }
  return {{"topic", c.topic}, {"meta", c.meta}, {"sides", sides}};
}

inline FramingCorpus corpus_from_json(const nlohmann::json& j) {
  FramingCorpus c;
  try {
    c.topic = j.at("topic").get<std::string>();
    c.meta = j.value("meta", nlohmann::json::object());
    const auto& sides = j.at("sides");
    if (!sides.is_array() || sides.size() != 2) throw ConfigError("corpus: 'sides' must hold exactly two entries");
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& s = sides[i];
      c.sides[i].label = s.at("label").get<std::string>();
      c.sides[i].seeds = s.value("seeds", std::vector<std::string>{});
      c.sides[i].distilled = s.at("distilled").get<std::vector<std::string>>();
      c.sides[i].summary = s.at("summary").get<std::string>();
      c.sides[i].sentences = s.at("sentences").get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corpus: ") + e.what());
  }
  validate(c);
  return c;
}

inline FramingCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read corpus file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corpus file " + path.string() + ": " + e.what());
  }
  return corpus_from_json(j);
}

inline void save_corpus(const FramingCorpus& c, const std::filesystem::path& path) {
  validate(c);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file " + path.string());
  out << to_json(c).dump(2) << '\n';
}

}  // namespace framing
