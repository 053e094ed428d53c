#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "agentrec/common.hpp"
#include "agentrec/toolbox.hpp"

namespace agentrec {

/// The policy's final answer: candidate ids, best first.
struct FinalRanking {
    std::vector<ItemId> items;

    friend bool operator==(const FinalRanking&, const FinalRanking&) = default;
};

using Action = std::variant<ToolCall, FinalRanking>;

struct Step {
    std::size_t t = 0;                       // 1-based
    std::string raw;                         // exact assistant text
    std::string reasoning;
    Action action;
    std::optional<Observation> observation;  // present iff action is a ToolCall

    bool is_tool_call() const { return std::holds_alternative<ToolCall>(action); }
    friend bool operator==(const Step&, const Step&) = default;
};

enum class Outcome { ranked, format_error, limit_exceeded, policy_error };

std::string_view outcome_name(Outcome o);
Outcome parse_outcome(std::string_view s);

struct Trajectory {
    std::string case_id;
    UserId user;
    std::uint64_t seed = 0;
    std::size_t repeat = 0;
    std::vector<Step> steps;
    Outcome outcome = Outcome::policy_error;
    std::optional<FinalRanking> final_ranking;
    std::size_t n_tool_calls = 0;
    std::optional<std::string> rejected_text;  // unparseable turn, kept for auditing
    std::optional<std::string> error;

    /// Tool-call steps counted from `steps`.
    std::size_t count_tool_calls() const;
    /// Stable reference "<case_id>#<repeat>".
    std::string ref() const;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

void to_json(json& j, const Trajectory& t);
void from_json(const json& j, Trajectory& t);

std::vector<Trajectory> read_trajectories(const std::string& path);
void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories);

}  // namespace agentrec
