#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "agentrec/agent.hpp"
#include "agentrec/corpus.hpp"
#include "agentrec/trajectory.hpp"

namespace agentrec {

/// 1-based position of `gold` in `ranking`; throws if absent.
std::size_t rank_of(std::span<const ItemId> ranking, const ItemId& gold);

/// Single-relevant-item NDCG: 1/log2(rank+1) when rank <= k, else 0.
double ndcg_at_k(std::span<const ItemId> ranking, const ItemId& gold, std::size_t k);

inline constexpr std::array<std::size_t, 3> kCutoffs = {1, 5, 10};

/// NDCG@{1,5,10} of one episode; zeros unless the trajectory is format-valid.
std::array<double, 3> episode_ndcg(const Trajectory& trajectory, const CandidateSet& candidates,
                                   std::size_t max_turns = kMaxTurns);

struct CaseMetrics {
    std::string case_id;
    std::size_t repeat = 0;
    std::string outcome;  // outcome name, or "invalid_ranking" for a ranked but format-invalid answer
    std::array<double, 3> ndcg{};
};

struct MetricsReport {
    std::size_t repeats = 0;
    std::size_t episodes = 0;
    std::array<double, 3> mean{};
    std::array<double, 3> ci95{};  // half-width, normal approximation
    std::map<std::string, std::size_t> failures;
    std::vector<CaseMetrics> per_case;
};

void to_json(json& j, const MetricsReport& r);

/// Aggregates episode scores; failures score 0 on every cutoff.
MetricsReport summarize(std::span<const Trajectory> trajectories, std::span<const CandidateSet> candidates,
                        std::size_t repeats, std::size_t max_turns = kMaxTurns);

struct EvaluationResult {
    MetricsReport report;
    std::vector<Trajectory> trajectories;
};

/// Runs the test cases `options.repeats` times and scores them.
EvaluationResult evaluate(Policy& policy, const Toolbox& toolbox, std::span<const CandidateSet> cases,
                          const BatchOptions& options);

struct ToolUsageStats {
    std::size_t trajectories = 0;
    std::map<std::string, double> fraction;    // trajectories calling the tool at least once
    std::map<std::string, double> mean_calls;  // per trajectory
    double mean_total_calls = 0.0;
};

void to_json(json& j, const ToolUsageStats& s);

/// Throws on an empty input. Every registered tool gets an entry.
ToolUsageStats tool_usage_stats(std::span<const Trajectory> trajectories);

/// Aligned plain-text tables.
std::string render_metrics_table(const MetricsReport& report, const std::string& label);
std::string render_tool_usage_table(const ToolUsageStats& stats);

}  // namespace agentrec
