#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "agentrec/agent.hpp"
#include "agentrec/artifacts.hpp"
#include "agentrec/evaluation.hpp"
#include "agentrec/learning.hpp"

namespace agentrec::testing {

std::string fixture(const std::string& relative);
std::string cli_path();

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "agentrec");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

/// In-memory pipeline over a bundled fixture: ingest, graphs, template profiles,
/// hashing embeddings.
struct Pipeline {
    RunConfig config;
    Corpus corpus;
    std::vector<CandidateSet> candidates;
    std::shared_ptr<const ToolIndices> indices;
    std::shared_ptr<const Toolbox> toolbox;

    std::vector<CandidateSet> role(SplitRole r) const { return select_role(candidates, r); }
};

RunConfig ml20_config(const std::string& output_dir = "out");
RunConfig ml_dense_config(const std::string& output_dir = "out");
RunConfig amazon_small_config(const std::string& output_dir = "out");
Pipeline build_pipeline(const RunConfig& config);

/// Built once per process.
const Pipeline& ml20();
const Pipeline& amazon_small();
/// The 100-user MovieLens statistics fixture.
const Pipeline& ml_dense();

/// Succeeds (gold first) on rollouts r < successes[case_id] and fails (gold
/// last) otherwise. The rollout index is recovered from the turn seed, so
/// the policy stays a pure function of (messages, seed).
class MixturePolicy final : public Policy {
public:
    MixturePolicy(std::span<const CandidateSet> cases, std::map<std::string, std::size_t> successes,
                  std::uint64_t base_seed, std::size_t rollouts);

    std::string name() const override { return "mixture"; }
    std::string complete(std::span<const Message> messages, const SamplingParams& params,
                         std::uint64_t seed) override;
    bool deterministic() const override { return true; }

private:
    struct Entry {
        std::string case_id;
        ItemId gold;
        std::size_t successes = 0;
    };
    std::map<std::string, Entry> by_key_;
    std::uint64_t base_seed_;
    std::size_t rollouts_;
};

/// Returns fixed texts turn by turn; throws when asked past the end.
class ScriptPolicy final : public Policy {
public:
    explicit ScriptPolicy(std::vector<std::string> turns) : turns_(std::move(turns)) {}
    std::string name() const override { return "script"; }
    std::string complete(std::span<const Message> messages, const SamplingParams& params,
                         std::uint64_t seed) override;
    bool deterministic() const override { return true; }

private:
    std::vector<std::string> turns_;
};

/// Answers gold-first for every case except `failing_case`, where it throws.
class FlakyPolicy final : public Policy {
public:
    FlakyPolicy(std::span<const CandidateSet> cases, std::string failing_user)
        : oracle_(cases), failing_user_(std::move(failing_user)) {}
    std::string name() const override { return "flaky"; }
    std::string complete(std::span<const Message> messages, const SamplingParams& params,
                         std::uint64_t seed) override;

private:
    OraclePolicy oracle_;
    std::string failing_user_;
};

/// A format-valid trajectory with `n_tool_calls` profile calls, then `ranking`.
Trajectory make_trajectory(const CandidateSet& cases, std::vector<ItemId> ranking, std::size_t n_tool_calls,
                           std::size_t repeat = 0);

/// Candidates reordered so the gold item sits at 1-based `rank`.
std::vector<ItemId> ranking_with_gold_at(const CandidateSet& cases, std::size_t rank);

/// A ten-candidate set with synthetic ids "i0".."i9", gold at index 0.
CandidateSet synthetic_candidates(const std::string& user = "u1", SplitRole role = SplitRole::test);

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr
};

CommandResult run_command(const std::string& command);
CommandResult run_cli(const std::string& args);

/// Commands of the end-to-end pipeline, in order.
const std::vector<std::string>& pipeline_commands();

/// Runs every pipeline command on the ml20 fixture into `out_dir`. Stops at
/// the first failure; `failed_command` names it.
struct PipelineRun {
    CommandResult last;
    std::string failed_command;
    double seconds = 0.0;
};
PipelineRun run_cli_pipeline(const std::string& out_dir, const std::string& policy = "random");

/// Problems with the manifests in `dir`: missing manifests, output hashes that
/// differ from the files, upstream hashes that differ from the manifests.
/// Empty when the chain is complete.
std::vector<std::string> manifest_chain_problems(const std::string& dir);

}  // namespace agentrec::testing
