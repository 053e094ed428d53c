#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "agentrec/agent.hpp"
#include "agentrec/corpus.hpp"
#include "agentrec/policy.hpp"
#include "agentrec/trajectory.hpp"

namespace agentrec {

class LearningError : public Error {
public:
    using Error::Error;
};

using CandidateIndex = std::map<std::string, CandidateSet>;
CandidateIndex index_candidates(std::span<const CandidateSet> candidates);
const CandidateSet& candidates_for(const CandidateIndex& index, const std::string& case_id);

/// I_acc: the trajectory ranked and put the gold item first.
bool gold_at_top(const Trajectory& trajectory, const CandidateSet& candidates);

/// Keeps trajectories with I_acc and I_fmt, in input order.
std::vector<Trajectory> filter_sft(std::span<const Trajectory> trajectories, const CandidateIndex& candidates,
                                   std::size_t max_turns = kMaxTurns);

enum class Origin { agent, env };
std::string_view origin_name(Origin o);

struct Segment {
    std::string text;
    Origin origin = Origin::agent;

    friend bool operator==(const Segment&, const Segment&) = default;
};

/// Masked training sequence. `prompt` (system and user turns plus the first
/// assistant header) is context, never supervised; `segments` alternate
/// agent turns and environment responses.
struct SftSample {
    std::string case_id;
    std::string prompt;
    std::vector<Segment> segments;
    std::vector<int> mask;

    /// prompt followed by every segment.
    std::string transcript() const;
};

void to_json(json& j, const SftSample& s);
void from_json(const json& j, SftSample& s);

/// Full chat of a finished episode: the prompt, then one assistant message per
/// step and one tool message per observation.
std::vector<Message> episode_messages(const Trajectory& trajectory, const CandidateSet& candidates,
                                      const Catalog& catalog, const ToolRegistry& registry,
                                      std::size_t max_turns = kMaxTurns);

/// Throws LearningError unless the trajectory ranked.
SftSample assemble_sft_sample(const Trajectory& trajectory, const CandidateSet& candidates, const Catalog& catalog,
                              const ToolRegistry& registry, std::size_t max_turns = kMaxTurns);

/// Agent segments of a sample, in order; the turns a replay policy re-emits.
std::vector<std::string> agent_turns(const SftSample& sample);

struct RewardWeights {
    double lambda1 = 1.0;
    double lambda2 = 0.1;
};

struct RewardBreakdown {
    double r_acc = 0.0;
    double r_fmt = 0.0;
    double r_tool = 0.0;
    double combined = 0.0;
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    std::size_t n_tool_calls = 0;
};

void to_json(json& j, const RewardBreakdown& r);

/// NDCG@10 of the gold item; throws if gold is absent.
double reward_accuracy(const FinalRanking& ranking, const ItemId& gold);

/// 0 when the trajectory is format-valid, else -1.
double reward_format(const Trajectory& trajectory, const CandidateSet& candidates, std::size_t max_turns = kMaxTurns);

/// Piecewise tool-use reward on [1,3), [3,8], (8,12], (12,inf) plus n = 0.
double reward_tool(std::int64_t n);

RewardBreakdown combined_reward(const Trajectory& trajectory, const CandidateSet& candidates,
                                RewardWeights weights = {}, std::size_t max_turns = kMaxTurns);

inline constexpr double kAdvantageStdFloor = 1e-8;

struct GroupAdvantages {
    std::vector<double> rewards;
    std::vector<double> advantages;
    double mean = 0.0;
    double stddev = 0.0;  // population
};

GroupAdvantages group_advantages(std::span<const double> rewards, double std_floor = kAdvantageStdFloor);

/// Negated clipped surrogate, averaged over the group. Empty `kl` means zeros.
double grpo_surrogate(std::span<const double> ratios, std::span<const double> advantages, double clip_eps = 0.2,
                      std::span<const double> kl = {}, double beta = 0.0);

struct RlRollout {
    std::string trajectory_ref;
    RewardBreakdown reward;
};

struct RlCase {
    std::string case_id;
    std::size_t rollout_count = 0;
    std::size_t success_count = 0;
    double success_rate = 0.0;
    std::vector<RlRollout> rollouts;
};

void to_json(json& j, const RlCase& c);

struct RlSamplingOptions {
    std::size_t rollouts = 8;
    double band_lo = 0.0;  // exclusive
    double band_hi = 0.25;  // inclusive
    RewardWeights weights;
    BatchOptions batch;  // `repeats` is replaced by `rollouts`
};

struct RlSampling {
    std::vector<RlCase> selected;
    std::vector<RlCase> rejected;
    std::vector<Trajectory> trajectories;
};

/// Rolls out every case not in `sft_cases` and keeps those whose success
/// rate falls in (band_lo, band_hi]. Success means gold at rank 1.
RlSampling sample_rl_cases(Policy& policy, const Toolbox& toolbox, std::span<const CandidateSet> cases,
                           const std::set<std::string>& sft_cases, const RlSamplingOptions& options);

}  // namespace agentrec
