#include <gtest/gtest.h>

#include <atomic>
#include <mutex>
#include <thread>

#include "agentrec/agent.hpp"
#include "support.hpp"

using namespace agentrec;

namespace {

std::vector<CandidateSet> first_test_cases(std::size_t n) {
    auto cases = agentrec::testing::ml20().role(SplitRole::test);
    cases.resize(std::min(n, cases.size()));
    return cases;
}

const Toolbox& tools_ml20() { return *agentrec::testing::ml20().toolbox; }

std::string profile_call() {
    return render_step({"look", ToolCall{tools::kUserProfile, json::object()}});
}

class AlwaysToolPolicy final : public Policy {
public:
    std::string name() const override { return "always-tool"; }
    std::string complete(std::span<const Message>, const SamplingParams&, std::uint64_t) override {
        ++calls;
        return profile_call();
    }
    std::atomic<int> calls{0};
};

class SlowToolPolicy final : public Policy {
public:
    std::string name() const override { return "slow"; }
    std::string complete(std::span<const Message>, const SamplingParams&, std::uint64_t) override {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        return profile_call();
    }
};

class OverflowPolicy final : public Policy {
public:
    std::string name() const override { return "overflow"; }
    std::string complete(std::span<const Message>, const SamplingParams&, std::uint64_t) override {
        throw ContextLengthExceeded("context length exceeded");
    }
};

/// Wraps a policy and records the tool messages it was shown at every turn.
class RecordingPolicy final : public Policy {
public:
    explicit RecordingPolicy(Policy& inner) : inner_(inner) {}
    std::string name() const override { return "recording"; }
    std::string complete(std::span<const Message> messages, const SamplingParams& params,
                         std::uint64_t seed) override {
        std::vector<std::string> seen;
        for (const auto& m : messages) {
            if (m.role == Role::tool) seen.push_back(m.content);
        }
        std::lock_guard lock(mu_);
        shown.push_back(seen);
        return inner_.complete(messages, params, seed);
    }
    std::vector<std::vector<std::string>> shown;

private:
    Policy& inner_;
    std::mutex mu_;
};

}  // namespace

TEST(RunEpisode, OracleRanksGoldFirstAfterTwoTools) {
    auto cases = first_test_cases(1);
    OraclePolicy oracle(cases);
    auto t = run_episode(oracle, tools_ml20(), cases[0]);
    EXPECT_EQ(t.outcome, Outcome::ranked);
    ASSERT_TRUE(t.final_ranking.has_value());
    EXPECT_EQ(t.final_ranking->items.front(), cases[0].positive());
    EXPECT_EQ(t.n_tool_calls, 2u);
    EXPECT_EQ(t.count_tool_calls(), t.n_tool_calls);
    ASSERT_EQ(t.steps.size(), 3u);
    for (const auto& s : t.steps) EXPECT_EQ(s.observation.has_value(), s.is_tool_call());
    EXPECT_TRUE(validate_format(t, cases[0]));
}

TEST(RunEpisode, GibberishIsAFormatErrorWithNoSteps) {
    auto cases = first_test_cases(1);
    agentrec::testing::ScriptPolicy policy({"I think item 3 is best."});
    auto t = run_episode(policy, tools_ml20(), cases[0]);
    EXPECT_EQ(t.outcome, Outcome::format_error);
    EXPECT_TRUE(t.steps.empty());
    EXPECT_EQ(t.rejected_text, "I think item 3 is best.");
    EXPECT_FALSE(t.final_ranking.has_value());
}

TEST(RunEpisode, ToolOnlyPolicyHitsTurnLimit) {
    auto cases = first_test_cases(1);
    AlwaysToolPolicy policy;
    EpisodeLimits limits;
    limits.max_turns = 6;
    auto t = run_episode(policy, tools_ml20(), cases[0], limits);
    EXPECT_EQ(t.outcome, Outcome::limit_exceeded);
    EXPECT_EQ(policy.calls.load(), 6);
    EXPECT_EQ(t.steps.size(), 6u);
    EXPECT_EQ(t.n_tool_calls, 6u);
    EXPECT_NE(t.error->find("no ranking within 6 turns"), std::string::npos);
}

TEST(RunEpisode, WallTimeLimit) {
    auto cases = first_test_cases(1);
    SlowToolPolicy policy;
    EpisodeLimits limits;
    limits.max_wall_time = std::chrono::milliseconds(30);
    auto t = run_episode(policy, tools_ml20(), cases[0], limits);
    EXPECT_EQ(t.outcome, Outcome::limit_exceeded);
    EXPECT_LT(t.steps.size(), limits.max_turns);
    EXPECT_NE(t.error->find("wall time"), std::string::npos);
}

TEST(RunEpisode, ContextOverflowIsALimitNotAPolicyError) {
    auto cases = first_test_cases(1);
    OverflowPolicy policy;
    EXPECT_EQ(run_episode(policy, tools_ml20(), cases[0]).outcome, Outcome::limit_exceeded);
}

TEST(RunEpisode, ContextFidelity) {
    auto cases = first_test_cases(5);
    RandomPolicy random(4);
    RecordingPolicy recorder(random);
    for (const auto& c : cases) {
        recorder.shown.clear();
        auto t = run_episode(recorder, tools_ml20(), c, {}, {}, 11);
        ASSERT_EQ(recorder.shown.size(), t.steps.size());
        for (std::size_t turn = 0; turn < t.steps.size(); ++turn) {
            std::vector<std::string> expected;
            for (std::size_t k = 0; k < turn; ++k) expected.push_back(t.steps[k].observation->payload);
            EXPECT_EQ(recorder.shown[turn], expected) << c.case_id << " turn " << turn + 1;
        }
    }
}

TEST(RunEpisode, ReplayReproducesTrajectories) {
    auto cases = first_test_cases(10);
    RandomPolicy random(3);
    BatchOptions opts;
    opts.seed = 5;
    auto original = run_batch(random, tools_ml20(), cases, opts);
    auto replay = ReplayPolicy::from_trajectories(original, cases);
    auto again = run_batch(replay, tools_ml20(), cases, opts);
    EXPECT_EQ(again, original);
}

TEST(RunEpisode, ReplayDetectsDivergedObservations) {
    auto cases = first_test_cases(1);
    RandomPolicy random(2);
    auto t = run_episode(random, tools_ml20(), cases[0]);
    ASSERT_GE(t.steps.size(), 2u);
    t.steps[0].observation->payload += " (edited)";
    std::vector<Trajectory> recorded{t};
    auto replay = ReplayPolicy::from_trajectories(recorded, cases);
    auto again = run_episode(replay, tools_ml20(), cases[0]);
    EXPECT_EQ(again.outcome, Outcome::policy_error);
    EXPECT_NE(again.error->find("replay divergence"), std::string::npos);
}

TEST(RunBatch, OracleOverTenCases) {
    auto cases = first_test_cases(10);
    OraclePolicy oracle(cases);
    auto out = run_batch(oracle, tools_ml20(), cases);
    ASSERT_EQ(out.size(), 10u);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ(out[i].outcome, Outcome::ranked);
        EXPECT_EQ(out[i].case_id, cases[i].case_id);
    }
}

TEST(RunBatch, ParallelismDoesNotChangeResults) {
    auto cases = agentrec::testing::ml20().candidates;
    RandomPolicy random(2);
    BatchOptions serial;
    serial.parallelism = 1;
    serial.repeats = 3;
    serial.seed = 21;
    BatchOptions parallel = serial;
    parallel.parallelism = 8;
    auto a = run_batch(random, tools_ml20(), cases, serial);
    auto b = run_batch(random, tools_ml20(), cases, parallel);
    EXPECT_EQ(a, b);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].repeat, i % 3);
        EXPECT_EQ(a[i].seed, episode_seed(21, cases[i / 3].case_id, i % 3));
    }
}

TEST(RunBatch, OneFailingCaseDoesNotAbortTheBatch) {
    auto cases = first_test_cases(10);
    agentrec::testing::FlakyPolicy flaky(cases, cases[4].user.str());
    BatchOptions opts;
    opts.parallelism = 4;
    auto out = run_batch(flaky, tools_ml20(), cases, opts);
    std::size_t ranked = 0, errors = 0;
    for (const auto& t : out) {
        ranked += t.outcome == Outcome::ranked;
        errors += t.outcome == Outcome::policy_error;
    }
    EXPECT_EQ(ranked, 9u);
    EXPECT_EQ(errors, 1u);
    EXPECT_EQ(out[4].outcome, Outcome::policy_error);
    EXPECT_NE(out[4].error->find("policy unavailable"), std::string::npos);
}

TEST(RunBatch, EveryEpisodeTerminatesWithinTurnLimit) {
    auto cases = agentrec::testing::ml20().candidates;
    RandomPolicy random(20);
    BatchOptions opts;
    opts.limits.max_turns = 8;
    for (const auto& t : run_batch(random, tools_ml20(), cases, opts)) {
        EXPECT_LE(t.steps.size(), 8u);
        EXPECT_EQ(t.outcome, Outcome::limit_exceeded);
        EXPECT_EQ(t.count_tool_calls(), t.n_tool_calls);
    }
}

TEST(Truncation, OldestObservationsGoFirst) {
    std::vector<Message> msgs{{Role::system, std::string(40, 's')},
                              {Role::user, std::string(40, 'u')},
                              {Role::assistant, "a1"},
                              {Role::tool, std::string(400, 'x')},
                              {Role::assistant, "a2"},
                              {Role::tool, std::string(400, 'y')}};
    EXPECT_EQ(estimate_tokens(msgs), (40 + 40 + 2 + 400 + 2 + 400 + 3) / 4);
    ASSERT_TRUE(truncate_observations(msgs, 150));
    EXPECT_EQ(msgs[3].content, kTruncatedMarker);
    EXPECT_EQ(msgs[5].content, std::string(400, 'y'));
    EXPECT_EQ(msgs[0].content, std::string(40, 's'));
    EXPECT_EQ(msgs[1].content, std::string(40, 'u'));

    ASSERT_TRUE(truncate_observations(msgs, 30));
    EXPECT_EQ(msgs[5].content, kTruncatedMarker);
    EXPECT_FALSE(truncate_observations(msgs, 5));
    EXPECT_EQ(msgs[0].content, std::string(40, 's'));
}

TEST(Truncation, TightBudgetStillRunsEpisodes) {
    auto cases = first_test_cases(3);
    OraclePolicy oracle(cases);
    const auto& c = cases[0];
    auto base = render_prompt(c.user, c, tools_ml20().indices().catalog, tools_ml20().registry());
    EpisodeLimits limits;
    limits.max_prompt_tokens = estimate_tokens(base) + 150;
    auto t = run_episode(oracle, tools_ml20(), c, limits);
    EXPECT_EQ(t.outcome, Outcome::ranked);
    limits.max_prompt_tokens = estimate_tokens(base) - 1;
    EXPECT_EQ(run_episode(oracle, tools_ml20(), c, limits).outcome, Outcome::limit_exceeded);
}

TEST(LeakGuard, ScriptedEpisodesNeverSeeHeldOutItem) {
    const auto& p = agentrec::testing::ml20();
    RandomPolicy random(6);
    BatchOptions opts;
    opts.repeats = 2;
    auto out = run_batch(random, *p.toolbox, p.candidates, opts);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& c = p.candidates[i / 2];
        EXPECT_TRUE(leaking_steps(out[i], c.positive()).empty()) << out[i].ref();
    }
}

TEST(LeakGuard, ScanFlagsReferencesButNotBareNumbers) {
    auto c = agentrec::testing::synthetic_candidates();
    auto t = agentrec::testing::make_trajectory(c, c.candidates, 3);
    t.steps[0].observation->payload = "rating: 5 | positions: 1-5";
    t.steps[1].observation->payload = "- item_id: 5 | title: Film 5";
    t.steps[2].observation = Observation::success(tools::kItemInfo, "item_id: 5");
    EXPECT_EQ(leaking_steps(t, ItemId("5")), std::vector<std::size_t>{1});
}

TEST(TrajectoryJson, RoundTrip) {
    auto cases = first_test_cases(4);
    RandomPolicy random(2);
    auto out = run_batch(random, tools_ml20(), cases);
    agentrec::testing::TempDir dir;
    write_trajectories(dir.file("t.jsonl"), out);
    EXPECT_EQ(read_trajectories(dir.file("t.jsonl")), out);
    auto j = json(out[0]);
    for (const char* key : {"case_id", "seed", "outcome", "steps", "n_tool_calls", "final_ranking"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
}
