#pragma once

// A temporary workspace holding four separable topic corpora, stub provider
// files, and a run configuration shaped like the full experiment matrix:
// 3 logistic-regression families over 6 training sizes, paired completion
// with k in {1, 2}, and prompting with 4 variants.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/corpus.hpp"
#include "separable_corpus.hpp"

namespace framing::testdata {

class Workspace {
 public:
  explicit Workspace(const std::string& name)
      : dir_(std::filesystem::temp_directory_path() /
             ("framing-" + name + "-" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  ~Workspace() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path write(const std::string& name, const std::string& content) const {
    const auto p = dir_ / name;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }

 private:
  std::filesystem::path dir_;
};

inline const std::vector<std::string> kTopics{"dog-ownership", "climate-change", "domestic-violence", "misogyny"};

inline std::string word_vector_file(const std::vector<FramingCorpus>& corpora, std::size_t dim) {
  std::vector<std::string> words;
  for (const auto& c : corpora) {
    for (const auto& w : detail::words_of(c)) {
      if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }
  }
  std::ostringstream file;
  file.precision(17);
  file << words.size() << ' ' << dim << '\n';
  for (const auto& w : words) {
    file << w;
    for (double x : detail::word_vector(w, dim)) file << ' ' << x;
    file << '\n';
  }
  return file.str();
}

struct MatrixSetup {
  nlohmann::json config;
  std::filesystem::path config_path;
};

// Writes corpora and stub files into `ws` and returns the configuration.
// `per_side` sentences per side; 500 training sentences need per_side >=
// 250 + test_per_side.
inline MatrixSetup write_table_matrix(const Workspace& ws, int per_side = 300, int test_per_side = 40,
                                      int replicates = 3) {
  std::vector<FramingCorpus> corpora;
  nlohmann::json datasets = nlohmann::json::array();
  for (std::size_t t = 0; t < kTopics.size(); ++t) {
    corpora.push_back(separable_corpus(kTopics[t], per_side, 100 + t));
    const auto path = ws.dir() / "corpora" / (kTopics[t] + ".json");
    std::filesystem::create_directories(path.parent_path());
    save_corpus(corpora.back(), path);
    datasets.push_back(path.string());
  }
  const auto vectors = ws.write("vectors.txt", word_vector_file(corpora, 8));
  const nlohmann::json chat_script{
      {"model", "chat-stub"},
      {"first_token", {{{"contains", ""}, {"positions", {{{"style-a", -0.4}, {"style-b", -1.1}, {"The", -3.0}}}}}}}};
  const auto chat = ws.write("chat_stub.json", chat_script.dump(2));

  nlohmann::json providers = nlohmann::json::array();
  providers.push_back({{"name", "vectors-stub"}, {"kind", "word_vectors"}, {"file", vectors.string()}});
  for (int i = 1; i <= 2; ++i) {
    providers.push_back({{"name", "embed-" + std::to_string(i)},
                         {"kind", "ngram"},
                         {"order", i},
                         {"train_on_pools", true},
                         {"price_per_1k_input", 0.0001 * i}});
  }
  for (int i = 1; i <= 4; ++i) {
    providers.push_back({{"name", "completion-" + std::to_string(i)},
                         {"kind", "ngram"},
                         {"order", i + 1},
                         {"alpha", 0.1},
                         {"train_on_pools", true},
                         {"price_per_1k_input", 0.001 * i},
                         {"price_per_1k_output", 0.002 * i}});
    providers.push_back({{"name", "chat-" + std::to_string(i)},
                         {"kind", "scripted"},
                         {"file", chat.string()},
                         {"price_per_1k_input", 0.01 * i},
                         {"price_per_1k_output", 0.03 * i}});
  }
  const nlohmann::json sizes{10, 20, 50, 100, 200, 500};
  nlohmann::json config{
      {"seed", 11},
      {"output_dir", (ws.dir() / "run").string()},
      {"test_per_side", test_per_side},
      {"max_parallel_cells", 2},
      {"bootstrap", {{"replicates", 100}, {"sample_size", 1000}}},
      {"datasets", datasets},
      {"providers", providers},
      {"methods",
       {{{"method", "tfidf"}, {"n_train", sizes}, {"replicates", replicates}},
        {{"method", "wordvec"}, {"models", {"vectors-stub"}}, {"n_train", sizes}, {"replicates", replicates}},
        {{"method", "embed"}, {"models", {"embed-1", "embed-2"}}, {"n_train", sizes}, {"replicates", replicates}},
        {{"method", "paired"},
         {"models", {"completion-1", "completion-2", "completion-3", "completion-4"}},
         {"k", {1, 2}},
         {"repetitions", 3}},
        {{"method", "prompt"},
         {"models", {"chat-1", "chat-2", "chat-3", "chat-4"}},
         {"variants", {"seeds", "distilled", "summary", "zero_shot"}}}}}};
  const auto path = ws.write("run.json", config.dump(2));
  return {config, path};
}

}  // namespace framing::testdata
