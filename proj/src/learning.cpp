#include "agentrec/learning.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "agentrec/evaluation.hpp"

namespace agentrec {

CandidateIndex index_candidates(std::span<const CandidateSet> candidates) {
    CandidateIndex out;
    for (const auto& c : candidates) out[c.case_id] = c;
    return out;
}

const CandidateSet& candidates_for(const CandidateIndex& index, const std::string& case_id) {
    auto it = index.find(case_id);
    if (it == index.end()) throw LearningError("no candidate set for case " + case_id);
    return it->second;
}

bool gold_at_top(const Trajectory& trajectory, const CandidateSet& candidates) {
    return trajectory.outcome == Outcome::ranked && trajectory.final_ranking &&
           !trajectory.final_ranking->items.empty() && trajectory.final_ranking->items.front() == candidates.positive();
}

std::vector<Trajectory> filter_sft(std::span<const Trajectory> trajectories, const CandidateIndex& candidates,
                                   std::size_t max_turns) {
    std::vector<Trajectory> out;
    for (const auto& t : trajectories) {
        const auto& c = candidates_for(candidates, t.case_id);
        if (gold_at_top(t, c) && validate_format(t, c, max_turns)) out.push_back(t);
    }
    return out;
}

std::string_view origin_name(Origin o) { return o == Origin::agent ? "agent" : "env"; }

std::string SftSample::transcript() const {
    std::string out = prompt;
    for (const auto& s : segments) out += s.text;
    return out;
}

void to_json(json& j, const SftSample& s) {
    json segments = json::array();
    for (const auto& seg : s.segments) segments.push_back({{"text", seg.text}, {"origin", origin_name(seg.origin)}});
    j = json{{"case_id", s.case_id}, {"prompt", s.prompt}, {"segments", segments}, {"mask", s.mask}};
}

void from_json(const json& j, SftSample& s) {
    s = {};
    s.case_id = j.at("case_id").get<std::string>();
    s.prompt = j.at("prompt").get<std::string>();
    for (const auto& seg : j.at("segments")) {
        auto origin = seg.at("origin").get<std::string>();
        if (origin != "agent" && origin != "env") throw LearningError("unknown segment origin '" + origin + "'");
        s.segments.push_back({seg.at("text").get<std::string>(), origin == "agent" ? Origin::agent : Origin::env});
    }
    s.mask = j.at("mask").get<std::vector<int>>();
}

std::vector<Message> episode_messages(const Trajectory& trajectory, const CandidateSet& candidates,
                                      const Catalog& catalog, const ToolRegistry& registry, std::size_t max_turns) {
    auto messages = render_prompt(candidates.user, candidates, catalog, registry, {}, max_turns);
    for (const auto& s : trajectory.steps) {
        messages.push_back({Role::assistant, s.raw});
        if (s.observation) messages.push_back({Role::tool, s.observation->payload});
    }
    return messages;
}

SftSample assemble_sft_sample(const Trajectory& trajectory, const CandidateSet& candidates, const Catalog& catalog,
                              const ToolRegistry& registry, std::size_t max_turns) {
    if (trajectory.outcome != Outcome::ranked) {
        throw LearningError(fmt::format("cannot build an SFT sample from a {} trajectory ({})",
                                        outcome_name(trajectory.outcome), trajectory.ref()));
    }
    auto prompt = render_prompt(candidates.user, candidates, catalog, registry, {}, max_turns);
    SftSample sample;
    sample.case_id = trajectory.case_id;
    sample.prompt = render_transcript(prompt) + "\n" + transcript_header(Role::assistant);
    for (const auto& s : trajectory.steps) {
        sample.segments.push_back({s.raw, Origin::agent});
        if (s.observation) {
            sample.segments.push_back({"\n" + transcript_header(Role::tool) + s.observation->payload + "\n" +
                                           transcript_header(Role::assistant),
                                       Origin::env});
        }
    }
    for (const auto& seg : sample.segments) sample.mask.push_back(seg.origin == Origin::agent ? 1 : 0);
    return sample;
}

std::vector<std::string> agent_turns(const SftSample& sample) {
    std::vector<std::string> out;
    for (const auto& seg : sample.segments) {
        if (seg.origin == Origin::agent) out.push_back(seg.text);
    }
    return out;
}

void to_json(json& j, const RewardBreakdown& r) {
    j = json{{"r_acc", r.r_acc},       {"r_fmt", r.r_fmt},       {"r_tool", r.r_tool},
             {"combined", r.combined}, {"lambda1", r.lambda1}, {"lambda2", r.lambda2},
             {"n_tool_calls", r.n_tool_calls}};
}

double reward_accuracy(const FinalRanking& ranking, const ItemId& gold) {
    return ndcg_at_k(ranking.items, gold, std::min<std::size_t>(10, ranking.items.size()));
}

double reward_format(const Trajectory& trajectory, const CandidateSet& candidates, std::size_t max_turns) {
    return validate_format(trajectory, candidates, max_turns) ? 0.0 : -1.0;
}

double reward_tool(std::int64_t n) {
    if (n < 0) throw LearningError("tool-call count must be >= 0");
    const double x = static_cast<double>(n);
    if (n == 0) return -1.0;
    if (n < 3) return x / 3.0;
    if (n <= 8) return 1.0;
    if (n <= 12) return 1.0 - 3.0 / 8.0 * (x - 8.0);
    return -0.5 - 0.3 * (x - 12.0);
}

RewardBreakdown combined_reward(const Trajectory& trajectory, const CandidateSet& candidates, RewardWeights weights,
                                std::size_t max_turns) {
    RewardBreakdown r;
    r.lambda1 = weights.lambda1;
    r.lambda2 = weights.lambda2;
    r.n_tool_calls = trajectory.count_tool_calls();
    r.r_tool = reward_tool(static_cast<std::int64_t>(r.n_tool_calls));
    r.r_fmt = reward_format(trajectory, candidates, max_turns);
    if (r.r_fmt < 0.0) {
        r.combined = -1.0;
        return r;
    }
    r.r_acc = reward_accuracy(*trajectory.final_ranking, candidates.positive());
    r.combined = weights.lambda1 * r.r_acc + weights.lambda2 * r.r_tool;
    return r;
}

GroupAdvantages group_advantages(std::span<const double> rewards, double std_floor) {
    if (rewards.size() < 2) throw LearningError("a GRPO group needs at least two rewards");
    if (!(std_floor > 0.0)) throw LearningError("advantage std floor must be positive");
    GroupAdvantages g;
    g.rewards.assign(rewards.begin(), rewards.end());
    const double n = static_cast<double>(rewards.size());
    // Offsets from the first reward keep an all-equal group exactly at zero.
    const double pivot = rewards.front();
    double offset = 0.0;
    for (double r : rewards) offset += r - pivot;
    g.mean = pivot + offset / n;
    double ss = 0.0;
    for (double r : rewards) ss += (r - g.mean) * (r - g.mean);
    g.stddev = std::sqrt(ss / n);
    const double denom = std::max(g.stddev, std_floor);
    for (double r : rewards) g.advantages.push_back((r - g.mean) / denom);
    return g;
}

double grpo_surrogate(std::span<const double> ratios, std::span<const double> advantages, double clip_eps,
                      std::span<const double> kl, double beta) {
    if (ratios.size() != advantages.size() || (!kl.empty() && kl.size() != ratios.size())) {
        throw LearningError("ratios, advantages and kl must have equal lengths");
    }
    if (ratios.empty()) throw LearningError("empty group");
    if (clip_eps < 0.0) throw LearningError("clip epsilon must be >= 0");
    double total = 0.0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        const double rho = ratios[i];
        if (!(rho > 0.0)) throw LearningError(fmt::format("ratio {} at index {} is not positive", rho, i));
        const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
        const double term = std::min(rho * advantages[i], clipped * advantages[i]);
        total += term - beta * (kl.empty() ? 0.0 : kl[i]);
    }
    return -total / static_cast<double>(ratios.size());
}

void to_json(json& j, const RlCase& c) {
    json rollouts = json::array();
    for (const auto& r : c.rollouts) rollouts.push_back({{"trajectory_ref", r.trajectory_ref}, {"reward_breakdown", r.reward}});
    j = json{{"case_id", c.case_id},
             {"rollout_count", c.rollout_count},
             {"success_count", c.success_count},
             {"success_rate", c.success_rate},
             {"rollouts", rollouts}};
}

RlSampling sample_rl_cases(Policy& policy, const Toolbox& toolbox, std::span<const CandidateSet> cases,
                           const std::set<std::string>& sft_cases, const RlSamplingOptions& options) {
    if (options.rollouts < 2) throw LearningError("RL sampling needs at least two rollouts per case");
    if (!(options.band_lo >= 0.0 && options.band_lo < options.band_hi && options.band_hi <= 1.0)) {
        throw LearningError(fmt::format("invalid success band ({}, {}]", options.band_lo, options.band_hi));
    }
    std::vector<CandidateSet> pool;
    for (const auto& c : cases) {
        if (!sft_cases.contains(c.case_id)) pool.push_back(c);
    }
    auto batch = options.batch;
    batch.repeats = options.rollouts;

    RlSampling out;
    out.trajectories = run_batch(policy, toolbox, pool, batch);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        RlCase rc{pool[i].case_id, options.rollouts, 0, 0.0, {}};
        for (std::size_t r = 0; r < options.rollouts; ++r) {
            const auto& t = out.trajectories[i * options.rollouts + r];
            if (gold_at_top(t, pool[i])) ++rc.success_count;
            rc.rollouts.push_back({t.ref(), combined_reward(t, pool[i], options.weights, batch.limits.max_turns)});
        }
        rc.success_rate = static_cast<double>(rc.success_count) / static_cast<double>(rc.rollout_count);
        const bool in_band = rc.success_rate > options.band_lo && rc.success_rate <= options.band_hi;
        (in_band ? out.selected : out.rejected).push_back(std::move(rc));
    }
    return out;
}

}  // namespace agentrec
