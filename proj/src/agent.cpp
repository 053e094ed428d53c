#include "agentrec/agent.hpp"

#include <atomic>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace agentrec {

void EpisodeLimits::validate() const {
    if (max_turns == 0) throw Error("max_turns must be >= 1");
    if (max_wall_time.count() <= 0) throw Error("max_wall_time must be positive");
    if (max_prompt_tokens == 0) throw Error("max_prompt_tokens must be >= 1");
}

std::size_t estimate_tokens(std::span<const Message> messages) {
    std::size_t chars = 0;
    for (const auto& m : messages) chars += m.content.size();
    return (chars + 3) / 4;
}

bool truncate_observations(std::vector<Message>& messages, std::size_t max_tokens) {
    for (auto& m : messages) {
        if (estimate_tokens(messages) <= max_tokens) return true;
        if (m.role == Role::tool && m.content != kTruncatedMarker) m.content = std::string(kTruncatedMarker);
    }
    return estimate_tokens(messages) <= max_tokens;
}

std::uint64_t episode_seed(std::uint64_t seed, const std::string& case_id, std::size_t repeat) {
    return derive_seed(seed, case_id, repeat);
}

Trajectory run_episode(Policy& policy, const Toolbox& toolbox, const CandidateSet& candidates,
                       const EpisodeLimits& limits, const SamplingParams& params, std::uint64_t seed,
                       std::size_t repeat) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();

    Trajectory traj;
    traj.case_id = candidates.case_id;
    traj.user = candidates.user;
    traj.seed = seed;
    traj.repeat = repeat;

    const ToolContext context{candidates.user, candidates.role, candidates.positive(), seed};
    std::vector<PromptTurn> turns;

    auto finish = [&traj](Outcome outcome, std::optional<std::string> error = std::nullopt) {
        traj.outcome = outcome;
        traj.error = std::move(error);
        traj.n_tool_calls = traj.count_tool_calls();
        return traj;
    };

    for (std::size_t t = 1; t <= limits.max_turns; ++t) {
        if (clock::now() - start > limits.max_wall_time) {
            return finish(Outcome::limit_exceeded, fmt::format("wall time limit of {} ms exceeded",
                                                               limits.max_wall_time.count()));
        }
        auto messages = render_prompt(candidates.user, candidates, toolbox.indices().catalog, toolbox.registry(),
                                      turns, limits.max_turns);
        if (!truncate_observations(messages, limits.max_prompt_tokens)) {
            return finish(Outcome::limit_exceeded,
                          fmt::format("prompt exceeds {} tokens after truncation", limits.max_prompt_tokens));
        }

        std::string text;
        try {
            text = policy.complete(messages, params, derive_seed(seed, "turn", t));
        } catch (const ContextLengthExceeded& e) {
            return finish(Outcome::limit_exceeded, e.what());
        } catch (const std::exception& e) {
            spdlog::debug("episode {}: policy failed: {}", traj.ref(), e.what());
            return finish(Outcome::policy_error, e.what());
        }

        auto parsed = parse_step(text);
        if (auto* err = std::get_if<ParseError>(&parsed)) {
            traj.rejected_text = text;
            return finish(Outcome::format_error, err->message);
        }
        auto& step = std::get<ParsedStep>(parsed);
        Step record{t, text, std::move(step.reasoning), std::move(step.action), std::nullopt};

        if (const auto* ranking = std::get_if<FinalRanking>(&record.action)) {
            traj.final_ranking = *ranking;
            traj.steps.push_back(std::move(record));
            return finish(Outcome::ranked);
        }
        record.observation = toolbox.dispatch(std::get<ToolCall>(record.action), context);
        turns.push_back({text, record.observation->payload});
        traj.steps.push_back(std::move(record));
    }
    return finish(Outcome::limit_exceeded, fmt::format("no ranking within {} turns", limits.max_turns));
}

std::vector<Trajectory> run_batch(Policy& policy, const Toolbox& toolbox, std::span<const CandidateSet> cases,
                                  const BatchOptions& options) {
    options.limits.validate();
    if (options.repeats == 0) throw Error("repeats must be >= 1");
    const std::size_t total = cases.size() * options.repeats;
    std::vector<Trajectory> results(total);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t job = next++; job < total; job = next++) {
            const auto& c = cases[job / options.repeats];
            const std::size_t r = job % options.repeats;
            results[job] = run_episode(policy, toolbox, c, options.limits, options.params,
                                       episode_seed(options.seed, c.case_id, r), r);
        }
    };

    const std::size_t threads = std::clamp<std::size_t>(options.parallelism, 1, std::max<std::size_t>(total, 1));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    }
    return results;
}

std::vector<std::size_t> leaking_steps(const Trajectory& trajectory, const ItemId& held_out) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
        const auto& s = trajectory.steps[i];
        if (!s.observation || s.observation->tool == tools::kItemInfo) continue;
        const auto& text = s.observation->payload;
        if (contains_token(text, "item_id: " + held_out.str()) || contains_token(text, "item " + held_out.str())) {
            out.push_back(i);
        }
    }
    return out;
}

}  // namespace agentrec
