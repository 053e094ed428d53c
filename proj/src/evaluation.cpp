#include "agentrec/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace agentrec {

std::size_t rank_of(std::span<const ItemId> ranking, const ItemId& gold) {
    auto it = std::find(ranking.begin(), ranking.end(), gold);
    if (it == ranking.end()) throw Error(fmt::format("gold item {} is not in the ranking", gold.str()));
    return static_cast<std::size_t>(it - ranking.begin()) + 1;
}

double ndcg_at_k(std::span<const ItemId> ranking, const ItemId& gold, std::size_t k) {
    if (k == 0 || k > ranking.size()) {
        throw Error(fmt::format("cutoff k={} outside [1, {}]", k, ranking.size()));
    }
    const auto rank = rank_of(ranking, gold);
    return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

std::array<double, 3> episode_ndcg(const Trajectory& trajectory, const CandidateSet& candidates,
                                   std::size_t max_turns) {
    std::array<double, 3> out{};
    if (!validate_format(trajectory, candidates, max_turns)) return out;
    const auto& ranking = trajectory.final_ranking->items;
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
        out[i] = ndcg_at_k(ranking, candidates.positive(), std::min(kCutoffs[i], ranking.size()));
    }
    return out;
}

void to_json(json& j, const MetricsReport& r) {
    json per_case = json::array();
    for (const auto& c : r.per_case) {
        per_case.push_back({{"case_id", c.case_id},
                            {"repeat", c.repeat},
                            {"outcome", c.outcome},
                            {"ndcg@1", c.ndcg[0]},
                            {"ndcg@5", c.ndcg[1]},
                            {"ndcg@10", c.ndcg[2]}});
    }
    json means, cis;
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
        means[fmt::format("ndcg@{}", kCutoffs[i])] = r.mean[i];
        cis[fmt::format("ndcg@{}", kCutoffs[i])] = r.ci95[i];
    }
    j = json{{"repeats", r.repeats}, {"episodes", r.episodes}, {"mean", means},
             {"ci95", cis},          {"failures", r.failures}, {"per_case", per_case}};
}

MetricsReport summarize(std::span<const Trajectory> trajectories, std::span<const CandidateSet> candidates,
                        std::size_t repeats, std::size_t max_turns) {
    std::map<std::string, const CandidateSet*> by_case;
    for (const auto& c : candidates) by_case[c.case_id] = &c;

    MetricsReport report;
    report.repeats = repeats;
    report.episodes = trajectories.size();
    std::array<double, 3> sum{}, sum_sq{};
    for (const auto& t : trajectories) {
        auto it = by_case.find(t.case_id);
        if (it == by_case.end()) throw Error("no candidate set for case " + t.case_id);
        CaseMetrics m{t.case_id, t.repeat, std::string(outcome_name(t.outcome)), episode_ndcg(t, *it->second, max_turns)};
        if (t.outcome == Outcome::ranked && !validate_format(t, *it->second, max_turns)) m.outcome = "invalid_ranking";
        if (m.outcome != "ranked") ++report.failures[m.outcome];
        for (std::size_t i = 0; i < 3; ++i) {
            sum[i] += m.ndcg[i];
            sum_sq[i] += m.ndcg[i] * m.ndcg[i];
        }
        report.per_case.push_back(std::move(m));
    }
    const double n = static_cast<double>(report.episodes);
    for (std::size_t i = 0; i < 3 && n > 0; ++i) {
        report.mean[i] = sum[i] / n;
        if (n > 1) {
            const double var = std::max(0.0, (sum_sq[i] - n * report.mean[i] * report.mean[i]) / (n - 1));
            report.ci95[i] = 1.96 * std::sqrt(var / n);
        }
    }
    return report;
}

EvaluationResult evaluate(Policy& policy, const Toolbox& toolbox, std::span<const CandidateSet> cases,
                          const BatchOptions& options) {
    EvaluationResult out;
    out.trajectories = run_batch(policy, toolbox, cases, options);
    out.report = summarize(out.trajectories, cases, options.repeats, options.limits.max_turns);
    return out;
}

void to_json(json& j, const ToolUsageStats& s) {
    j = json{{"trajectories", s.trajectories},
             {"fraction", s.fraction},
             {"mean_calls", s.mean_calls},
             {"mean_total_calls", s.mean_total_calls}};
}

ToolUsageStats tool_usage_stats(std::span<const Trajectory> trajectories) {
    if (trajectories.empty()) throw Error("tool usage needs at least one trajectory");
    ToolUsageStats stats;
    stats.trajectories = trajectories.size();
    const auto registry = ToolRegistry::standard();
    for (const auto& spec : registry.specs()) {
        stats.fraction[spec.name] = 0.0;
        stats.mean_calls[spec.name] = 0.0;
    }
    std::size_t total = 0;
    for (const auto& t : trajectories) {
        std::set<std::string> used;
        for (const auto& s : t.steps) {
            if (const auto* call = std::get_if<ToolCall>(&s.action)) {
                stats.mean_calls[call->name] += 1.0;
                used.insert(call->name);
                ++total;
            }
        }
        for (const auto& name : used) stats.fraction[name] += 1.0;
    }
    const double n = static_cast<double>(trajectories.size());
    for (auto& [_, v] : stats.fraction) v /= n;
    for (auto& [_, v] : stats.mean_calls) v /= n;
    stats.mean_total_calls = static_cast<double>(total) / n;
    return stats;
}

std::string render_metrics_table(const MetricsReport& report, const std::string& label) {
    std::string out = fmt::format("{:<20} {:>18} {:>18} {:>18}\n", "Policy", "NDCG@1", "NDCG@5", "NDCG@10");
    out += fmt::format("{:<20}", label);
    for (std::size_t i = 0; i < 3; ++i) {
        out += fmt::format(" {:>18}", fmt::format("{:.4f} +- {:.4f}", report.mean[i], report.ci95[i]));
    }
    out += fmt::format("\nepisodes: {}  repeats: {}", report.episodes, report.repeats);
    for (const auto& [name, count] : report.failures) out += fmt::format("  {}: {}", name, count);
    return out + "\n";
}

std::string render_tool_usage_table(const ToolUsageStats& stats) {
    std::string out = fmt::format("{:<24} {:>10} {:>12}\n", "Tool", "Usage", "Calls/traj");
    for (const auto& [name, frac] : stats.fraction) {
        out += fmt::format("{:<24} {:>9.2f}% {:>12.2f}\n", name, 100.0 * frac, stats.mean_calls.at(name));
    }
    out += fmt::format("{:<24} {:>10} {:>12.2f}\n", "all tools", "", stats.mean_total_calls);
    return out;
}

}  // namespace agentrec
