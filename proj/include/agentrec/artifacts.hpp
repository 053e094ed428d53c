#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "agentrec/agent.hpp"
#include "agentrec/corpus.hpp"
#include "agentrec/gateway.hpp"
#include "agentrec/graphs.hpp"
#include "agentrec/learning.hpp"
#include "agentrec/policy.hpp"
#include "agentrec/retrieval.hpp"
#include "agentrec/toolbox.hpp"

namespace agentrec {

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Thrown when a command needs an artifact an earlier command writes.
class MissingArtifact : public Error {
public:
    using Error::Error;
};

namespace artifact {
inline constexpr const char* kCorpus = "corpus.json";
inline constexpr const char* kCandidates = "candidates.jsonl";
inline constexpr const char* kStats = "stats.json";
inline constexpr const char* kGraphs = "graphs.json";
inline constexpr const char* kProfiles = "profiles.jsonl";
inline constexpr const char* kEmbeddings = "embeddings.jsonl";
inline constexpr const char* kTrajectories = "trajectories.jsonl";
inline constexpr const char* kSftTrajectories = "sft_trajectories.jsonl";
inline constexpr const char* kSft = "sft.jsonl";
inline constexpr const char* kRl = "rl.jsonl";
inline constexpr const char* kRlRollouts = "rl_rollouts.jsonl";
inline constexpr const char* kRunTrajectories = "run_trajectories.jsonl";
inline constexpr const char* kEvalTrajectories = "eval_trajectories.jsonl";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kMetricsTable = "metrics.txt";

/// Command that writes `name`.
std::string producer(const std::string& name);
}  // namespace artifact

/// Every key with its default value.
json default_config();

/// "a.b.c=value": value parsed as JSON, else taken as a string. Unknown keys are rejected.
void apply_override(json& config, const std::string& assignment);

/// Defaults, merged with the file (if any), then the overrides in order.
json resolve_config(const std::string& path, std::span<const std::string> overrides = {});

std::string config_hash(const json& config);

struct RunConfig {
    json raw;
    std::string hash;

    DatasetFormat format = DatasetFormat::movielens;
    DatasetPaths paths;
    double positive_threshold = 3.0;
    std::size_t negatives = kDefaultNegatives;
    CooccurrenceOptions cooccurrence;

    ToolboxConfig tools;

    std::string embedding_provider = "hashing";
    std::size_t embedding_dimension = 64;
    RemoteEmbedderConfig remote_embedder;

    std::string policy = "oracle";
    std::size_t random_tool_calls = 1;
    std::string replay_file;
    RemotePolicyConfig remote_policy;

    SamplingParams sampling;
    EpisodeLimits limits;
    RewardWeights weights;

    std::size_t rl_rollouts = 8;
    double band_lo = 0.0;
    double band_hi = 0.25;
    double clip_eps = 0.2;
    double beta = 0.0;
    std::size_t group_size = 8;

    std::size_t generation_repeats = 1;
    std::size_t evaluation_repeats = 3;

    std::uint64_t seed = 0;
    std::size_t parallelism = 4;
    std::string output_dir = "out";

    GatewayConfig gateway;

    static RunConfig from_json(const json& resolved);
    BatchOptions batch(std::size_t repeats) const;
};

/// Ingested dataset: catalog, demographics and positive sequences.
struct Corpus {
    DatasetFormat format = DatasetFormat::movielens;
    Catalog catalog;
    DemographicsMap demographics;
    SequenceMap sequences;
    DatasetStats stats;
    std::size_t malformed_lines = 0;
};

void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path);

std::vector<CandidateSet> read_candidates(const std::string& path);
void write_candidates(const std::string& path, std::span<const CandidateSet> candidates);

/// Candidate sets of one split role, in file order.
std::vector<CandidateSet> select_role(std::span<const CandidateSet> candidates, SplitRole role);

/// Offline sequences: each user's positives minus the validation and test items.
SequenceMap offline_sequences(const SequenceMap& sequences);

struct IngestResult {
    Corpus corpus;
    std::vector<CandidateSet> candidates;  // validation then test per user
    std::size_t skipped_users = 0;
};

/// Loads the configured dataset, splits it and samples candidate sets.
IngestResult ingest_dataset(const RunConfig& config);

/// One profile per user with an offline sequence.
ProfileStore generate_profiles(Policy& policy, const Corpus& corpus);

/// Tool indices from in-memory parts; similarity uses the offline sequences.
std::shared_ptr<ToolIndices> assemble_indices(Corpus corpus, ItemRelationGraph items, KnowledgeGraph knowledge,
                                              ProfileStore profiles, EmbeddingProvider& embedder,
                                              std::map<std::string, std::string> content_hashes = {});

std::unique_ptr<EmbeddingProvider> make_embedder(const RunConfig& config);

/// Policy named by the config. Oracle and replay policies are keyed by `candidates`.
std::unique_ptr<Policy> make_policy(const RunConfig& config, std::span<const CandidateSet> candidates);

/// Loads corpus, graph snapshot, profiles and embeddings from `dir`.
std::shared_ptr<const ToolIndices> load_tool_indices(const std::string& dir, const RunConfig& config);

struct Manifest {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> inputs;    // path -> file hash
    std::map<std::string, std::string> outputs;   // artifact name -> file hash
    std::map<std::string, std::string> upstream;  // manifest name -> file hash
    json config;
};

void to_json(json& j, const Manifest& m);
void from_json(const json& j, Manifest& m);

std::string manifest_name(const std::string& command);

/// Writes manifest.<command>.json with hashes of the listed outputs and of
/// the manifests of the commands that produced `consumed` artifacts.
Manifest write_manifest(const std::string& dir, const std::string& command, const RunConfig& config,
                        const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                        const std::vector<std::string>& consumed);

Manifest read_manifest(const std::string& path);

/// Path of `name` in `dir`; throws MissingArtifact naming the producing command.
std::string require_artifact(const std::string& dir, const std::string& name);

}  // namespace agentrec
