#include <gtest/gtest.h>

#include <fmt/format.h>

#include "agentrec/policy.hpp"
#include "support.hpp"

using namespace agentrec;
using agentrec::testing::make_trajectory;
using agentrec::testing::synthetic_candidates;

namespace {

ParsedStep parsed(std::string_view text) {
    auto r = parse_step(text);
    if (auto* e = std::get_if<ParseError>(&r)) throw std::runtime_error("unexpected parse error: " + e->message);
    return std::get<ParsedStep>(r);
}

bool rejects(std::string_view text) { return std::holds_alternative<ParseError>(parse_step(text)); }

}  // namespace

TEST(ParseStep, ToolCallExample) {
    auto s = parsed(R"(<think>need history</think><tool_call>{"name":"user_history_search","arguments":{"m":1}}</tool_call>)");
    EXPECT_EQ(s.reasoning, "need history");
    const auto* call = std::get_if<ToolCall>(&s.action);
    ASSERT_NE(call, nullptr);
    EXPECT_EQ(call->name, "user_history_search");
    EXPECT_EQ(call->arguments, json({{"m", 1}}));
}

TEST(ParseStep, AnswerExampleWithBareIds) {
    auto s = parsed("<think>done</think><answer>[3,1,2,10,4,5,6,7,8,9]</answer>");
    const auto* ranking = std::get_if<FinalRanking>(&s.action);
    ASSERT_NE(ranking, nullptr);
    ASSERT_EQ(ranking->items.size(), 10u);
    EXPECT_EQ(ranking->items[0], ItemId("3"));
    EXPECT_EQ(ranking->items[3], ItemId("10"));
    auto quoted = parsed(R"(<think>x</think> <answer>["B01", "B02"]</answer>)");
    EXPECT_EQ(std::get<FinalRanking>(quoted.action).items, (std::vector<ItemId>{ItemId("B01"), ItemId("B02")}));
}

TEST(ParseStep, Rejections) {
    const std::string call = R"(<tool_call>{"name":"user_profile_search","arguments":{}}</tool_call>)";
    EXPECT_TRUE(rejects("<think>a</think>" + call + call));                              // two actions
    EXPECT_TRUE(rejects(call));                                                          // no think block
    EXPECT_TRUE(rejects("<think>a</think>"));                                            // no action
    EXPECT_TRUE(rejects("<think>a</think><tool_call>{name: x}</tool_call>"));            // malformed record
    EXPECT_TRUE(rejects(R"(<think>a</think><tool_call>{"arguments":{}}</tool_call>)"));  // no name
    EXPECT_TRUE(rejects("<think>a</think><answer>[1, two words]</answer>"));             // non-identifier
    EXPECT_TRUE(rejects("<think>a</think><answer>[1, 2.5e]</answer>x"));
    EXPECT_TRUE(rejects("<think>a</think><answer>[1,2]</answer> trailing"));
    EXPECT_TRUE(rejects("<think>a <think>b</think></think><answer>[1]</answer>"));
    EXPECT_TRUE(rejects("gibberish"));
    EXPECT_TRUE(rejects(""));
}

TEST(ParseStep, RenderRoundTrip) {
    Rng rng(77);
    const std::vector<std::string> names{tools::kUserProfile, tools::kUserHistory, tools::kItemInfo,
                                         tools::kSimilarUsers, tools::kKnowledgeGraph};
    for (int i = 0; i < 500; ++i) {
        ParsedStep step;
        step.reasoning = fmt::format("reason {} with \"quotes\" & <angle> text", rng.below(1000));
        if (rng.below(2)) {
            json args = json::object();
            if (rng.below(2)) args["m"] = rng.below(5) + 1;
            if (rng.below(2)) args["user_id"] = fmt::format("u{}", rng.below(9));
            step.action = ToolCall{names[rng.below(names.size())], args};
        } else {
            FinalRanking r;
            const auto n = 1 + rng.below(10);
            for (std::size_t k = 0; k < n; ++k) r.items.emplace_back(fmt::format("it-{}.{}", rng.below(50), k));
            step.action = r;
        }
        EXPECT_EQ(parsed(render_step(step)), step) << render_step(step);
    }
}

TEST(RenderPrompt, FreshEpisodeHasSystemAndUser) {
    const auto& p = agentrec::testing::ml20();
    const auto& c = p.candidates.front();
    auto msgs = render_prompt(c.user, c, p.corpus.catalog, p.toolbox->registry());
    ASSERT_EQ(msgs.size(), 2u);
    EXPECT_EQ(msgs[0].role, Role::system);
    EXPECT_EQ(msgs[1].role, Role::user);
    for (const auto& spec : p.toolbox->registry().specs()) {
        EXPECT_NE(msgs[0].content.find(spec.name), std::string::npos);
    }
    EXPECT_NE(msgs[0].content.find("<think>"), std::string::npos);
}

TEST(RenderPrompt, OneToolStepAddsAssistantAndTool) {
    const auto& p = agentrec::testing::ml20();
    const auto& c = p.candidates.front();
    std::vector<PromptTurn> turns{{"<think>x</think><tool_call>{}</tool_call>", "observation text"}};
    auto msgs = render_prompt(c.user, c, p.corpus.catalog, p.toolbox->registry(), turns);
    ASSERT_EQ(msgs.size(), 4u);
    EXPECT_EQ(msgs[2].role, Role::assistant);
    EXPECT_EQ(msgs[3].role, Role::tool);
    EXPECT_EQ(msgs[3].content, "observation text");
    EXPECT_NO_THROW(check_roles(msgs));
}

TEST(RenderPrompt, EveryCandidateTitleAppears) {
    for (const auto* pipeline : {&agentrec::testing::ml20(), &agentrec::testing::amazon_small()}) {
        for (const auto& c : pipeline->candidates) {
            auto msgs = render_prompt(c.user, c, pipeline->corpus.catalog, pipeline->toolbox->registry());
            EXPECT_NE(msgs[1].content.find(c.user.str()), std::string::npos);
            for (const auto& id : c.candidates) {
                EXPECT_NE(msgs[1].content.find(item_title(pipeline->corpus.catalog, id)), std::string::npos)
                    << c.case_id << " " << id.str();
            }
            auto facts = read_prompt(msgs);
            EXPECT_EQ(facts.user, c.user);
            EXPECT_EQ(facts.candidates, c.candidates);
        }
    }
}

TEST(Roles, ToolMustFollowAssistant) {
    std::vector<Message> bad{{Role::system, "s"}, {Role::user, "u"}, {Role::tool, "t"}};
    EXPECT_THROW(check_roles(bad), Error);
}

TEST(SamplingParams, Defaults) {
    SamplingParams p;
    EXPECT_DOUBLE_EQ(p.temperature, 1.0);
    EXPECT_DOUBLE_EQ(p.top_p, 0.95);
    EXPECT_NO_THROW(p.validate());
    EXPECT_THROW((SamplingParams{-1.0, 0.9, 10}.validate()), Error);
    EXPECT_THROW((SamplingParams{1.0, 0.0, 10}.validate()), Error);
}

TEST(ValidateFormat, Examples) {
    auto c = synthetic_candidates();
    EXPECT_TRUE(validate_format(make_trajectory(c, c.candidates, 2), c));

    auto nine = std::vector<ItemId>(c.candidates.begin(), c.candidates.end() - 1);
    EXPECT_FALSE(validate_format(make_trajectory(c, nine, 2), c));

    auto outsider = c.candidates;
    outsider[4] = ItemId("elsewhere");
    EXPECT_FALSE(validate_format(make_trajectory(c, outsider, 2), c));

    auto too_long = make_trajectory(c, c.candidates, kMaxTurns);
    EXPECT_FALSE(validate_format(too_long, c));
    EXPECT_TRUE(validate_format(make_trajectory(c, c.candidates, kMaxTurns - 1), c));
}

TEST(ValidateFormat, PropertyValidImpliesPermutation) {
    auto c = synthetic_candidates();
    Rng rng(5);
    std::size_t valid = 0;
    for (int i = 0; i < 2000; ++i) {
        auto ranking = c.candidates;
        rng.shuffle(ranking);
        switch (rng.below(5)) {
            case 0: ranking.pop_back(); break;
            case 1: ranking[rng.below(10)] = ranking[rng.below(10)]; break;
            case 2: ranking.push_back(c.candidates[rng.below(10)]); break;
            case 3: ranking[rng.below(10)] = ItemId(fmt::format("x{}", rng.below(3))); break;
            default: break;
        }
        auto t = make_trajectory(c, ranking, rng.below(4));
        if (rng.below(6) == 0) t.outcome = Outcome::format_error;
        if (rng.below(6) == 0 && t.steps.size() > 1) t.steps.front().raw = "not the same text";
        const bool ok = validate_format(t, c);
        valid += ok;
        if (ok) {
            EXPECT_TRUE(is_permutation_of(*t.final_ranking, c.candidates));
            EXPECT_EQ(t.outcome, Outcome::ranked);
        }
    }
    EXPECT_GT(valid, 100u);
}

TEST(ValidateFormat, StepAfterRankingIsInvalid) {
    auto c = synthetic_candidates();
    auto t = make_trajectory(c, c.candidates, 1);
    t.steps.push_back(t.steps.front());
    EXPECT_FALSE(validate_format(t, c));
}

TEST(ScriptedPolicies, OracleAnswersGoldFirst) {
    const auto& p = agentrec::testing::ml20();
    OraclePolicy oracle(p.candidates);
    const auto& c = p.candidates.front();
    std::vector<PromptTurn> turns{{"a", "obs1"}, {"b", "obs2"}};
    auto msgs = render_prompt(c.user, c, p.corpus.catalog, p.toolbox->registry(), turns);
    auto step = parsed(oracle.complete(msgs, {}, 1));
    const auto& ranking = std::get<FinalRanking>(step.action);
    EXPECT_EQ(ranking.items.front(), c.positive());
    EXPECT_TRUE(is_permutation_of(ranking, c.candidates));
}

TEST(ScriptedPolicies, RandomIsPureInMessagesAndSeed) {
    const auto& p = agentrec::testing::ml20();
    const auto& c = p.candidates.front();
    auto msgs = render_prompt(c.user, c, p.corpus.catalog, p.toolbox->registry());
    RandomPolicy a(0), b(0);
    EXPECT_EQ(a.complete(msgs, {}, 99), b.complete(msgs, {}, 99));
    bool differs = false;
    for (std::uint64_t s = 0; s < 10 && !differs; ++s) differs = a.complete(msgs, {}, s) != a.complete(msgs, {}, s + 100);
    EXPECT_TRUE(differs);
}

TEST(RemotePolicy, DeadEndpointIsPolicyUnavailable) {
    RemotePolicyConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    cfg.retry.max_attempts = 2;
    cfg.retry.initial_delay = std::chrono::milliseconds(1);
    cfg.timeout = std::chrono::milliseconds(500);
    RemotePolicy policy(cfg);
    std::vector<Message> msgs{{Role::system, "s"}, {Role::user, "u"}};
    try {
        policy.complete(msgs, {}, 0);
        FAIL();
    } catch (const PolicyUnavailable& e) {
        EXPECT_NE(std::string(e.what()).find("policy unavailable"), std::string::npos);
    }
}

TEST(RemotePolicy, RequestBodyCarriesSamplingParams) {
    std::vector<Message> msgs{{Role::system, "s"}, {Role::user, "u"}, {Role::assistant, "a"}, {Role::tool, "obs"}};
    auto body = RemotePolicy::request_body("m", msgs, {0.7, 0.9, 128}, 5);
    EXPECT_EQ(body["model"], "m");
    EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.7);
    EXPECT_DOUBLE_EQ(body["top_p"].get<double>(), 0.9);
    EXPECT_EQ(body["max_tokens"], 128);
    ASSERT_EQ(body["messages"].size(), 4u);
    EXPECT_EQ(body["messages"][3]["role"], "user");
    EXPECT_NE(body["messages"][3]["content"].get<std::string>().find("<observation>"), std::string::npos);
}
