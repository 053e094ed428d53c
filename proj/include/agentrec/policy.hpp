#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "agentrec/common.hpp"
#include "agentrec/corpus.hpp"
#include "agentrec/http_retry.hpp"
#include "agentrec/toolbox.hpp"
#include "agentrec/trajectory.hpp"

namespace agentrec {

enum class Role { system, user, assistant, tool };
std::string_view message_role_name(Role r);

struct Message {
    Role role = Role::user;
    std::string content;

    friend bool operator==(const Message&, const Message&) = default;
};

/// Throws if a tool message does not directly follow an assistant message.
void check_roles(std::span<const Message> messages);

struct SamplingParams {
    double temperature = 1.0;
    double top_p = 0.95;
    std::size_t max_tokens = 2048;

    void validate() const;
};

/// Maximum policy turns per episode.
inline constexpr std::size_t kMaxTurns = 16;

struct ParsedStep {
    std::string reasoning;
    Action action;

    friend bool operator==(const ParsedStep&, const ParsedStep&) = default;
};

struct ParseError {
    std::string message;
};

/// Accepts `<think>...</think>` followed by exactly one of
/// `<tool_call>{"name": ..., "arguments": {...}}</tool_call>` or
/// `<answer>[id, ..., id]</answer>`, with only whitespace around the blocks.
std::variant<ParsedStep, ParseError> parse_step(std::string_view text);

/// Canonical text for a step; parse_step(render_step(s)) == s.
std::string render_step(const ParsedStep& step);

/// The grammar contract shown to the policy.
std::string grammar_contract();

struct PromptTurn {
    std::string assistant;
    std::string observation;
};

std::string system_prompt(const ToolRegistry& registry, std::size_t max_turns = kMaxTurns);
std::string user_prompt(const UserId& user, const CandidateSet& candidates, const Catalog& catalog);

/// [system, user, (assistant, tool)*]
std::vector<Message> render_prompt(const UserId& user, const CandidateSet& candidates, const Catalog& catalog,
                                   const ToolRegistry& registry, std::span<const PromptTurn> turns = {},
                                   std::size_t max_turns = kMaxTurns);

/// Chat transcript: "<|role|>\ncontent" blocks joined by "\n".
std::string render_transcript(std::span<const Message> messages);
std::string transcript_header(Role role);

/// Facts a scripted policy reads back out of a rendered prompt.
struct PromptFacts {
    UserId user;
    std::vector<ItemId> candidates;
    std::size_t assistant_turns = 0;
    std::vector<std::string> observations;
};
PromptFacts read_prompt(std::span<const Message> messages);

/// Key identifying an episode's candidate list: user plus candidates in order.
std::string candidate_key(const UserId& user, std::span<const ItemId> candidates);

/// FinalRanking is a permutation of the candidate set.
bool is_permutation_of(const FinalRanking& ranking, std::span<const ItemId> candidates);

/// I_fmt: every step parses, the last step is a FinalRanking permuting the
/// candidates, no more than `max_turns` steps, nothing after the ranking.
bool validate_format(const Trajectory& trajectory, const CandidateSet& candidates,
                     std::size_t max_turns = kMaxTurns);

class PolicyUnavailable : public Error {
public:
    using Error::Error;
};

class ContextLengthExceeded : public Error {
public:
    using Error::Error;
};

/// Chat-completion decision maker. Implementations must tolerate concurrent calls.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    virtual std::string complete(std::span<const Message> messages, const SamplingParams& params,
                                 std::uint64_t seed) = 0;
    /// Scripted policies answer offline and summarize profiles from templates.
    virtual bool deterministic() const { return false; }
};

/// Knows the gold item of every registered candidate set. Calls the profile
/// tool, then the first history page, then ranks the gold item first.
class OraclePolicy final : public Policy {
public:
    explicit OraclePolicy(std::span<const CandidateSet> answer_key);

    std::string name() const override { return "oracle"; }
    std::string complete(std::span<const Message> messages, const SamplingParams& params,
                         std::uint64_t seed) override;
    bool deterministic() const override { return true; }

private:
    std::map<std::string, ItemId> gold_;
};

/// Makes `tool_calls` seeded random tool calls, then answers with a seeded
/// uniform permutation of the candidates.
class RandomPolicy final : public Policy {
public:
    explicit RandomPolicy(std::size_t tool_calls = 1) : tool_calls_(tool_calls) {}

    std::string name() const override { return "random"; }
    std::string complete(std::span<const Message> messages, const SamplingParams& params,
                         std::uint64_t seed) override;
    bool deterministic() const override { return true; }

private:
    std::size_t tool_calls_;
};

/// Re-emits recorded assistant texts. When expected observations are given,
/// the tool messages it receives must match them exactly.
class ReplayPolicy final : public Policy {
public:
    struct Script {
        std::vector<std::string> turns;
        std::vector<std::string> expected_observations;
    };

    explicit ReplayPolicy(std::map<std::string, Script> scripts) : scripts_(std::move(scripts)) {}

    /// Scripts keyed by candidate_key of each trajectory's candidate set.
    static ReplayPolicy from_trajectories(std::span<const Trajectory> trajectories,
                                          std::span<const CandidateSet> candidates,
                                          bool check_observations = true);

    std::string name() const override { return "replay"; }
    std::string complete(std::span<const Message> messages, const SamplingParams& params,
                         std::uint64_t seed) override;
    bool deterministic() const override { return true; }

private:
    std::map<std::string, Script> scripts_;
};

struct RemotePolicyConfig {
    std::string base_url = "http://127.0.0.1:8000";
    std::string path = "/v1/chat/completions";
    std::string model = "default";
    std::string auth_env = "AGENTREC_API_KEY";
    std::size_t max_in_flight = 4;
    RetryPolicy retry;
    std::chrono::milliseconds timeout{120'000};
    std::string trace_file;  // empty: no trace
};

/// Chat-completions HTTP client. Tool messages are sent as user turns
/// wrapped in <observation> tags since the grammar is plain text.
class RemotePolicy final : public Policy {
public:
    explicit RemotePolicy(RemotePolicyConfig config);
    ~RemotePolicy() override;

    std::string name() const override { return "remote:" + config_.model; }
    std::string complete(std::span<const Message> messages, const SamplingParams& params,
                         std::uint64_t seed) override;

    static json request_body(const std::string& model, std::span<const Message> messages,
                             const SamplingParams& params, std::uint64_t seed);

private:
    void trace(const json& record);

    RemotePolicyConfig config_;
    std::counting_semaphore<> in_flight_;
    std::mutex trace_mu_;
    std::ofstream trace_;
};

}  // namespace agentrec
