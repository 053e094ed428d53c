#include "support.hpp"

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <atomic>
#include <cstdio>
#include <random>

#include <fmt/format.h>

namespace fs = std::filesystem;

namespace agentrec::testing {

std::string fixture(const std::string& relative) { return (fs::path(AGENTREC_DATA_DIR) / relative).string(); }

std::string cli_path() { return AGENTREC_CLI; }

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            fmt::format("{}-{}-{}-{}", tag, static_cast<long>(::getpid()), counter++, rd() % 100000);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

RunConfig ml20_config(const std::string& output_dir) {
    std::vector<std::string> sets = {"dataset.format=movielens",
                                     "dataset.interactions=" + fixture("ml20/ratings.dat"),
                                     "dataset.items=" + fixture("ml20/movies.dat"),
                                     "dataset.users=" + fixture("ml20/users.dat"),
                                     "run.output_dir=" + output_dir};
    return RunConfig::from_json(resolve_config("", sets));
}

RunConfig ml_dense_config(const std::string& output_dir) {
    std::vector<std::string> sets = {"dataset.format=movielens",
                                     "dataset.interactions=" + fixture("table1/ml_dense/ratings.dat"),
                                     "dataset.items=" + fixture("table1/ml_dense/movies.dat"),
                                     "dataset.users=" + fixture("table1/ml_dense/users.dat"),
                                     "run.output_dir=" + output_dir};
    return RunConfig::from_json(resolve_config("", sets));
}

RunConfig amazon_small_config(const std::string& output_dir) {
    std::vector<std::string> sets = {"dataset.format=amazon",
                                     "dataset.interactions=" + fixture("amazon_small/reviews.jsonl"),
                                     "dataset.items=" + fixture("amazon_small/meta.jsonl"),
                                     "run.output_dir=" + output_dir};
    return RunConfig::from_json(resolve_config("", sets));
}

Pipeline build_pipeline(const RunConfig& config) {
    Pipeline p;
    p.config = config;
    auto ingested = ingest_dataset(config);
    p.corpus = ingested.corpus;
    p.candidates = std::move(ingested.candidates);
    auto offline = offline_sequences(p.corpus.sequences);
    auto items = ItemRelationGraph::build(p.corpus.catalog, offline, config.cooccurrence);
    auto kg = KnowledgeGraph::build(offline, p.corpus.demographics, p.corpus.catalog);
    RandomPolicy templated;
    auto profiles = generate_profiles(templated, p.corpus);
    auto embedder = make_embedder(config);
    p.indices = assemble_indices(ingested.corpus, std::move(items), std::move(kg), std::move(profiles), *embedder,
                                 {{"fixture", "in-memory"}});
    p.toolbox = std::make_shared<const Toolbox>(p.indices, config.tools);
    return p;
}

const Pipeline& ml20() {
    static const Pipeline p = build_pipeline(ml20_config());
    return p;
}

const Pipeline& ml_dense() {
    static const Pipeline p = build_pipeline(ml_dense_config());
    return p;
}

const Pipeline& amazon_small() {
    static const Pipeline p = build_pipeline(amazon_small_config());
    return p;
}

// ---------------------------------------------------------------------------

MixturePolicy::MixturePolicy(std::span<const CandidateSet> cases, std::map<std::string, std::size_t> successes,
                             std::uint64_t base_seed, std::size_t rollouts)
    : base_seed_(base_seed), rollouts_(rollouts) {
    for (const auto& c : cases) {
        auto it = successes.find(c.case_id);
        by_key_[candidate_key(c.user, c.candidates)] = {c.case_id, c.positive(), it == successes.end() ? 0 : it->second};
    }
}

std::string MixturePolicy::complete(std::span<const Message> messages, const SamplingParams&, std::uint64_t seed) {
    auto facts = read_prompt(messages);
    const auto& entry = by_key_.at(candidate_key(facts.user, facts.candidates));
    if (facts.assistant_turns == 0) {
        return render_step({"start with the profile", ToolCall{tools::kUserProfile, json::object()}});
    }
    const std::size_t turn = facts.assistant_turns + 1;
    std::size_t repeat = rollouts_;
    for (std::size_t r = 0; r < rollouts_; ++r) {
        if (derive_seed(episode_seed(base_seed_, entry.case_id, r), "turn", turn) == seed) repeat = r;
    }
    if (repeat == rollouts_) throw Error("mixture policy: seed does not match any rollout");
    std::vector<ItemId> ranking;
    for (const auto& c : facts.candidates) {
        if (c != entry.gold) ranking.push_back(c);
    }
    if (repeat < entry.successes) {
        ranking.insert(ranking.begin(), entry.gold);
    } else {
        ranking.push_back(entry.gold);
    }
    return render_step({"rank", FinalRanking{ranking}});
}

std::string ScriptPolicy::complete(std::span<const Message> messages, const SamplingParams&, std::uint64_t) {
    std::size_t turn = 0;
    for (const auto& m : messages) turn += m.role == Role::assistant ? 1 : 0;
    if (turn >= turns_.size()) throw Error("script exhausted");
    return turns_[turn];
}

std::string FlakyPolicy::complete(std::span<const Message> messages, const SamplingParams& params,
                                  std::uint64_t seed) {
    auto facts = read_prompt(messages);
    if (facts.user.str() == failing_user_) throw PolicyUnavailable("policy unavailable: injected failure");
    return oracle_.complete(messages, params, seed);
}

// ---------------------------------------------------------------------------

Trajectory make_trajectory(const CandidateSet& cases, std::vector<ItemId> ranking, std::size_t n_tool_calls,
                           std::size_t repeat) {
    Trajectory t;
    t.case_id = cases.case_id;
    t.user = cases.user;
    t.repeat = repeat;
    for (std::size_t i = 0; i < n_tool_calls; ++i) {
        ParsedStep step{fmt::format("step {}", i + 1), ToolCall{tools::kUserProfile, json::object()}};
        t.steps.push_back({i + 1, render_step(step), step.reasoning, step.action,
                           Observation::success(tools::kUserProfile, "profile text")});
    }
    ParsedStep last{"final", FinalRanking{ranking}};
    t.steps.push_back({n_tool_calls + 1, render_step(last), last.reasoning, last.action, std::nullopt});
    t.outcome = Outcome::ranked;
    t.final_ranking = FinalRanking{std::move(ranking)};
    t.n_tool_calls = n_tool_calls;
    return t;
}

std::vector<ItemId> ranking_with_gold_at(const CandidateSet& cases, std::size_t rank) {
    std::vector<ItemId> others;
    for (const auto& c : cases.candidates) {
        if (c != cases.positive()) others.push_back(c);
    }
    others.insert(others.begin() + static_cast<std::ptrdiff_t>(rank - 1), cases.positive());
    return others;
}

CandidateSet synthetic_candidates(const std::string& user, SplitRole role) {
    CandidateSet c;
    c.user = UserId(user);
    c.role = role;
    c.case_id = fmt::format("{}:{}", user, role_name(role));
    for (int i = 0; i < 10; ++i) c.candidates.emplace_back(fmt::format("i{}", i));
    c.positive_index = 0;
    return c;
}

CommandResult run_command(const std::string& command) {
    CommandResult result;
    FILE* pipe = ::popen((command + " 2>&1").c_str(), "r");
    if (!pipe) return result;
    std::array<char, 4096> buf{};
    while (auto n = std::fread(buf.data(), 1, buf.size(), pipe)) result.output.append(buf.data(), n);
    int status = ::pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

CommandResult run_cli(const std::string& args) { return run_command(cli_path() + " " + args); }

const std::vector<std::string>& pipeline_commands() {
    static const std::vector<std::string> commands{"ingest",     "build-graphs", "gen-profiles", "gen-trajectories",
                                                   "filter-sft", "sample-rl",    "evaluate"};
    return commands;
}

PipelineRun run_cli_pipeline(const std::string& out_dir, const std::string& policy) {
    const auto start = std::chrono::steady_clock::now();
    const auto common = fmt::format("--out '{}' --policy {} --seed 7", out_dir, policy);
    PipelineRun run;
    for (const auto& command : pipeline_commands()) {
        std::string args = command + " " + common;
        if (command == "ingest") {
            args += fmt::format(" --format movielens --interactions '{}' --items '{}' --users '{}'",
                                fixture("ml20/ratings.dat"), fixture("ml20/movies.dat"), fixture("ml20/users.dat"));
        }
        run.last = run_cli(args);
        if (run.last.exit_code != 0) {
            run.failed_command = command;
            break;
        }
    }
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return run;
}

std::vector<std::string> manifest_chain_problems(const std::string& dir) {
    std::vector<std::string> problems;
    for (const auto& command : pipeline_commands()) {
        const auto path = (fs::path(dir) / manifest_name(command)).string();
        if (!fs::exists(path)) {
            problems.push_back("missing " + manifest_name(command));
            continue;
        }
        auto m = read_manifest(path);
        if (m.outputs.empty()) problems.push_back(command + " lists no outputs");
        for (const auto& [name, hash] : m.outputs) {
            if (file_hash((fs::path(dir) / name).string()) != hash) {
                problems.push_back(command + ": output hash mismatch for " + name);
            }
        }
        for (const auto& [name, hash] : m.upstream) {
            const auto up = (fs::path(dir) / name).string();
            if (!fs::exists(up) || file_hash(up) != hash) {
                problems.push_back(command + ": upstream hash mismatch for " + name);
            }
        }
        if (command != "ingest" && m.upstream.empty()) problems.push_back(command + " has no upstream manifests");
    }
    return problems;
}

}  // namespace agentrec::testing
