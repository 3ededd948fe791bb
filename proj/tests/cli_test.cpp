#include "framing/cli.hpp"

#include <gtest/gtest.h>

#include <regex>
#include <sstream>

#include "matrix_fixture.hpp"

namespace framing {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const fs::path kMockScript = fs::path(FRAMING_EXAMPLE_DIR) / "scripted_synthgen.json";

cli::SynthgenArgs mock_args(const fs::path& mock, const fs::path& out) {
  cli::SynthgenArgs a;
  a.topic = "dog ownership";
  a.mock = mock.string();
  a.out = out.string();
  a.options.timestamp = "2026-01-01T00:00:00Z";
  return a;
}

TEST(Synthgen, MockRunWritesCorpusAndPrintsAudit) {
  testdata::Workspace ws("cli-synth");
  std::ostringstream out, err;
  const auto path = ws.dir() / "dogs.json";
  ASSERT_EQ(cli::cmd_synthgen(mock_args(kMockScript, path), out, err), cli::kOk) << err.str();
  const auto corpus = load_corpus(path);
  EXPECT_EQ(corpus.topic, "dog ownership");
  EXPECT_EQ(corpus.sides[0].seeds.size(), 5u);
  EXPECT_EQ(corpus.sides[1].distilled.size(), 5u);
  EXPECT_NE(out.str().find("balance audit:"), std::string::npos);
  EXPECT_NE(out.str().find("no imbalance flags"), std::string::npos) << out.str();
  // The bundled example corpus was produced by exactly this command.
  EXPECT_EQ(detail::read_file(path), detail::read_file(fs::path(FRAMING_EXAMPLE_DIR) / "corpora" / "dog_ownership.json"));
}

TEST(Synthgen, LengthImbalanceIsFlagged) {
  testdata::Workspace ws("cli-flag");
  auto script = json::parse(detail::read_file(kMockScript));
  // Make every bulk sentence on the second side roughly three times longer.
  const std::regex item(R"((\d+\. )(.*))");
  for (auto& rule : script["generate"]) {
    if (rule["contains"] != "Owning a dog costs far more money than people expect.") continue;
    for (auto& reply : rule["replies"]) {
      std::string text = reply.get<std::string>(), rewritten;
      std::istringstream lines(text);
      for (std::string line; std::getline(lines, line);) {
        std::smatch m;
        if (std::regex_match(line, m, item)) {
          std::string body = m[2];
          body.pop_back();
          line = m[1].str() + body + ", and honestly that has worn everyone in our household down over the years.";
        }
        rewritten += line + "\n";
      }
      reply = rewritten;
    }
  }
  const auto mock = ws.write("imbalanced.json", script.dump(2));
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_synthgen(mock_args(mock, ws.dir() / "dogs.json"), out, err), cli::kOk) << err.str();
  EXPECT_NE(out.str().find("FLAG: "), std::string::npos) << out.str();
}

TEST(Synthgen, GenerationFailureLeavesTranscript) {
  testdata::Workspace ws("cli-fail");
  const auto mock = ws.write("broken.json", json{{"model", "broken"},
                                                  {"generate", {{{"contains", ""}, {"replies", {"no list here"}}}}}}
                                                 .dump());
  const auto out_path = ws.dir() / "dogs.json";
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_synthgen(mock_args(mock, out_path), out, err), cli::kPartial);
  EXPECT_FALSE(fs::exists(out_path));
  EXPECT_TRUE(fs::exists(out_path.string() + ".failed-transcript.json"));
  EXPECT_NE(err.str().find("generation failed"), std::string::npos);
}

TEST(Synthgen, RemoteWithoutKeyIsAConfigError) {
  testdata::Workspace ws("cli-nokey");
  cli::SynthgenArgs a;
  a.topic = "dog ownership";
  a.out = (ws.dir() / "x.json").string();
  a.api_key_env = "FRAMING_TEST_SYNTH_UNSET";
  ::unsetenv("FRAMING_TEST_SYNTH_UNSET");
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_synthgen(a, out, err), cli::kConfigError);
  EXPECT_NE(err.str().find("FRAMING_TEST_SYNTH_UNSET"), std::string::npos) << err.str();
}

TEST(Report, MissingDirectoryExitsWithTwo) {
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_report({"/nonexistent/framing-run", ""}, out, err), cli::kConfigError);
}

TEST(Cost, JsonOutputTotalsMatchCells) {
  testdata::Workspace ws("cli-cost");
  const auto setup = testdata::write_table_matrix(ws, 300, 40, 2);
  cli::RunArgs a{setup.config_path.string()};
  a.json = true;
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_cost(a, out, err), cli::kOk) << err.str();
  const auto j = json::parse(out.str());
  ASSERT_EQ(j.at("cells").size(), 192u);
  std::int64_t calls = 0;
  for (const auto& c : j.at("cells")) calls += c.at("calls").get<std::int64_t>();
  EXPECT_EQ(j.at("totals").at("calls"), calls);
  EXPECT_EQ(j.at("config"), to_json(load_run_config(setup.config_path)));
  EXPECT_FALSE(fs::exists(ws.dir() / "run"));
}

}  // namespace
}  // namespace framing
