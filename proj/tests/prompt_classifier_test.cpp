#include "framing/prompt_classifier.hpp"

#include <gtest/gtest.h>

#include <random>

#include "framing/ngram_provider.hpp"
#include "framing/scripted_provider.hpp"

namespace framing {
namespace {

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

PrimingSet five_per_side() {
  PrimingSet p;
  p.label_a = "equality";
  p.label_b = "mis";
  for (int i = 0; i < 5; ++i) {
    p.side_a.push_back("Fair pay is owed to worker " + std::to_string(i) + ".");
    p.side_b.push_back("Quotas hurt team " + std::to_string(i) + ".");
  }
  return p;
}

PromptTemplate shipped(PromptVariant v) { return load_prompt_template(default_prompt_template_path(), v); }

FirstTokenDistribution dist(std::map<std::string, double> first, std::map<std::string, double> second = {}) {
  FirstTokenDistribution d;
  d.positions = {std::move(first), std::move(second)};
  return d;
}

TEST(RenderPrompt, ShippedTemplateDropsCommentsAndHasAllPlaceholders) {
  const auto t = shipped(PromptVariant::seeds);
  EXPECT_EQ(t.instruction.find('#'), std::string::npos);
  EXPECT_EQ(t.name, "prompt_template_v1.txt");
}

TEST(RenderPrompt, SeedsVariantShowsEveryContextVerbatimBeforeTheTarget) {
  const auto p = five_per_side();
  const auto msgs = render_prompt(shipped(PromptVariant::seeds), p, "Pay gaps persist.");
  ASSERT_EQ(msgs.size(), 1u);
  const auto& text = msgs[0].content;
  std::size_t last_context = 0;
  for (const auto* side : {&p.side_a, &p.side_b}) {
    for (const auto& s : *side) {
      const auto pos = text.find(s);
      ASSERT_NE(pos, std::string::npos) << s;
      last_context = std::max(last_context, pos);
    }
  }
  EXPECT_GT(text.find("Pay gaps persist."), last_context);
  EXPECT_EQ(count(text, "equality"), 1u);
  EXPECT_EQ(count(text, "mis"), 1u);
}

TEST(RenderPrompt, ZeroShotOmitsContexts) {
  auto p = five_per_side();
  const auto text = render_prompt(shipped(PromptVariant::zero_shot), p, "Pay gaps persist.")[0].content;
  for (const auto& s : p.side_a) EXPECT_EQ(text.find(s), std::string::npos);
  EXPECT_NE(text.find("equality"), std::string::npos);
  EXPECT_NE(text.find("mis"), std::string::npos);
  EXPECT_NE(text.find("Pay gaps persist."), std::string::npos);
  p.side_a.clear();
  p.side_b.clear();
  EXPECT_NO_THROW(render_prompt(shipped(PromptVariant::zero_shot), p, "x"));
  EXPECT_THROW(render_prompt(shipped(PromptVariant::summary), p, "x"), InvalidArgument);
}

TEST(RenderPrompt, IsDeterministicAndDoesNotReexpandSubstitutions) {
  auto p = five_per_side();
  p.side_a[0] = "A context mentioning {target} literally.";
  const auto t = shipped(PromptVariant::distilled);
  const auto a = render_prompt(t, p, "Target text.");
  const auto b = render_prompt(t, p, "Target text.");
  EXPECT_EQ(a[0].content, b[0].content);
  EXPECT_NE(a[0].content.find("{target} literally"), std::string::npos);
}

TEST(RenderPrompt, MissingPlaceholderIsAConfigError) {
  PromptTemplate t{"Sets {context_a} / {context_b}; answer {label_a} or {label_b}.", PromptVariant::seeds, "bad"};
  EXPECT_THROW(render_prompt(t, five_per_side(), "x"), ConfigError);
  EXPECT_THROW(parse_prompt_variant("few_shot"), ConfigError);
}

TEST(Decide, LabelExampleFromScriptedDistribution) {
  const auto d = decide_from_distribution(dist({{"equality", -0.2}, {"mis", -1.8}}), {"equality", "mis"});
  ASSERT_TRUE(d.label);
  EXPECT_EQ(*d.label, FramingLabel::A);
  EXPECT_NEAR(d.delta_equiv, 1.6, 1e-12);
  EXPECT_FALSE(d.failure_mode);
}

TEST(Decide, NoLabelTokenIsAFailure) {
  const auto d = decide_from_distribution(dist({{"The", -0.1}, {"I", -2.0}}, {{"answer", -0.3}}), {"equality", "mis"});
  EXPECT_FALSE(d.label);
  ASSERT_TRUE(d.failure_mode);
  EXPECT_EQ(*d.failure_mode, "no_label_token");
}

TEST(Decide, EqualLogprobsTieToB) {
  const auto d = decide_from_distribution(dist({{"equality", -0.7}, {"mis", -0.7}}), {"equality", "mis"});
  EXPECT_EQ(*d.label, FramingLabel::B);
  EXPECT_TRUE(d.tie);
  EXPECT_EQ(d.delta_equiv, 0.0);
}

TEST(Decide, SecondPositionOnlyConsultedWhenAbsentFromFirst) {
  // "equality" is in position one, so its position-two value is ignored.
  const auto d = decide_from_distribution(dist({{"[", -0.1}, {"equality", -3.0}}, {{"equality", -0.1}, {"mis", -0.5}}),
                                          {"equality", "mis"});
  EXPECT_NEAR(d.delta_equiv, -3.0 - (-0.5), 1e-12);
  EXPECT_EQ(*d.label, FramingLabel::B);
}

TEST(Decide, SpacingVariantsOfOneTokenPool) {
  const auto d = decide_from_distribution(dist({{"Pro", std::log(0.3)}, {" Pro", std::log(0.2)}, {"Anti", std::log(0.1)}}),
                                          {"Pro", "Anti"});
  EXPECT_NEAR(d.delta_equiv, std::log(0.5 / 0.1), 1e-12);
}

TEST(Decide, OneMissingLabelIsBoundedByTheListFloor) {
  const auto d = decide_from_distribution(dist({{"Pro", -0.5}, {"The", -4.0}}), {"Pro", "Anti"});
  EXPECT_EQ(*d.label, FramingLabel::A);
  EXPECT_TRUE(d.bounded);
  EXPECT_NEAR(d.delta_equiv, 3.5, 1e-12);
}

TEST(Decide, RejectsIdenticalLabelTokens) {
  EXPECT_THROW(decide_from_distribution(dist({{"a", -1}}), {"a", " a "}), ConfigError);
}

TEST(Decide, LabelSwapFlipsLabelAndNegatesDelta) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-8.0, 0.0);
  for (int i = 0; i < 500; ++i) {
    std::map<std::string, double> p1{{"x", u(rng)}, {"y", u(rng)}, {"z", u(rng)}};
    std::map<std::string, double> p2{{"y", u(rng)}, {"w", u(rng)}};
    if (rng() % 3 == 0) p1.erase("y");
    const auto d = dist(p1, p2);
    const auto fwd = decide_from_distribution(d, {"x", "y"});
    const auto rev = decide_from_distribution(d, {"y", "x"});
    EXPECT_EQ(rev.delta_equiv, -fwd.delta_equiv);
    if (!fwd.tie) EXPECT_EQ(*rev.label, other(*fwd.label));
  }
}

TEST(ClassifyByPrompt, EndToEndWithScriptedModel) {
  ScriptedProvider model;
  model.add_first_token("Pay gaps", dist({{"equality", -0.2}, {"mis", -1.8}}));
  model.add_first_token("Quotas", dist({{"equality", -2.0}, {"mis", -0.1}}));
  model.add_first_token("", dist({{"Sorry", -0.1}}));
  const auto p = five_per_side();
  const auto tmpl = shipped(PromptVariant::seeds);
  const LabelTokenMap labels{"equality", "mis"};

  TargetBatch batch{{{"t0", "Pay gaps persist."}, {"t1", "Quotas again."}, {"t2", "Weather report."}}};
  // Rules match on the whole prompt, so make the target the only distinguishing text.
  PrimingSet neutral = p;
  for (auto& s : neutral.side_a) s = "Context one.";
  for (auto& s : neutral.side_b) s = "Context two.";
  const auto results = classify_batch_by_prompt(tmpl, neutral, batch, model, labels);
  ASSERT_EQ(results.size(), 3u);
  EXPECT_EQ(*results[0].decision.label, FramingLabel::A);
  EXPECT_EQ(*results[1].decision.label, FramingLabel::B);
  EXPECT_EQ(*results[2].decision.failure_mode, "no_label_token");
  EXPECT_EQ(to_record(results[0], neutral)["label_name"], "equality");
  EXPECT_TRUE(to_record(results[2], neutral)["label"].is_null());
  for (const auto& r : model.requests()) EXPECT_EQ(r.op, "first_token");
}

TEST(LabelTokens, ResolvedFromTheProviderTokenizer) {
  NgramProvider lm({"pro anti neutral"}, 2, 0.5);
  const auto m = resolve_label_tokens(lm, "pro", "anti");
  EXPECT_EQ(m.label_a_first_token, "p");
  EXPECT_EQ(m.label_b_first_token, "a");
  EXPECT_THROW(resolve_label_tokens(lm, "pro", "prior"), ConfigError);
}

TEST(LabelTokens, FallBackToFirstWordWithoutEchoScoring) {
  ScriptedProvider chat_only;
  const auto m = resolve_label_tokens(chat_only, "Equality first", "Merit first");
  EXPECT_EQ(m.label_a_first_token, "Equality");
  EXPECT_EQ(m.label_b_first_token, "Merit");
}

TEST(LabelTokens, ResolverCachesPerModel) {
  ScriptedProvider model;
  model.add_score("pro", {{"pro", std::nullopt}});
  model.add_score("anti", {{"an", std::nullopt}, {"ti", -1.0}});
  LabelTokenResolver resolver;
  const auto a = resolver.resolve(model, "pro", "anti");
  const auto b = resolver.resolve(model, "pro", "anti");
  EXPECT_EQ(a.label_b_first_token, "an");
  EXPECT_EQ(b.label_b_first_token, "an");
  EXPECT_EQ(model.requests().size(), 2u);
}

}  // namespace
}  // namespace framing
