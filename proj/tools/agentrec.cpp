// Command-line driver for the recommendation-agent pipeline.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "agentrec/agent.hpp"
#include "agentrec/artifacts.hpp"
#include "agentrec/evaluation.hpp"
#include "agentrec/gateway.hpp"
#include "agentrec/learning.hpp"

namespace fs = std::filesystem;
using namespace agentrec;

namespace {

std::atomic<bool> g_stop{false};

struct Common {
    std::string config_file;
    std::vector<std::string> sets;
    std::string out;
    std::string policy;
    std::int64_t seed = -1;
    bool verbose = false;

    RunConfig resolve(std::vector<std::string> extra = {}) const {
        auto overrides = sets;
        if (!out.empty()) overrides.push_back("run.output_dir=" + out);
        if (!policy.empty()) overrides.push_back("policy.kind=" + policy);
        if (seed >= 0) overrides.push_back(fmt::format("run.seed={}", seed));
        for (auto& e : extra) overrides.push_back(std::move(e));
        return RunConfig::from_json(resolve_config(config_file, overrides));
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config_file, "JSON config file");
    cmd->add_option("--set", c.sets, "Override a config key, e.g. --set tools.alpha=0.7")->allow_extra_args(false);
    cmd->add_option("-o,--out", c.out, "Output directory (run.output_dir)");
    cmd->add_option("--policy", c.policy, "Policy kind: oracle, random, replay, remote");
    cmd->add_option("--seed", c.seed, "Base seed (run.seed)");
    cmd->add_flag("-v,--verbose", c.verbose, "Debug logging");
}

std::string in_dir(const RunConfig& config, const std::string& name) {
    return (fs::path(config.output_dir) / name).string();
}

void ensure_output_dir(const RunConfig& config) { fs::create_directories(config.output_dir); }

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << '\n';
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << text;
}

std::vector<CandidateSet> load_candidates(const RunConfig& config) {
    return read_candidates(require_artifact(config.output_dir, artifact::kCandidates));
}

std::shared_ptr<const Toolbox> load_toolbox(const RunConfig& config) {
    return std::make_shared<const Toolbox>(load_tool_indices(config.output_dir, config), config.tools);
}

const std::vector<std::string> kIndexArtifacts = {artifact::kCorpus, artifact::kCandidates, artifact::kGraphs,
                                                  artifact::kProfiles, artifact::kEmbeddings};

std::string outcome_summary(std::span<const Trajectory> trajectories) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : trajectories) ++counts[std::string(outcome_name(t.outcome))];
    std::string out;
    for (const auto& [name, n] : counts) out += fmt::format("{}{}={}", out.empty() ? "" : " ", name, n);
    return out;
}

// ---------------------------------------------------------------------------

void cmd_ingest(const RunConfig& config) {
    auto result = ingest_dataset(config);
    ensure_output_dir(config);
    save_corpus(in_dir(config, artifact::kCorpus), result.corpus);
    write_candidates(in_dir(config, artifact::kCandidates), result.candidates);
    write_json(in_dir(config, artifact::kStats), json(result.corpus.stats));
    const auto& p = config.paths;
    write_manifest(config.output_dir, "ingest", config, {p.interactions, p.items, p.users},
                   {artifact::kCorpus, artifact::kCandidates, artifact::kStats}, {});

    const auto& s = result.corpus.stats;
    spdlog::info("ingested {} users, {} items, {} interactions ({:.2f} inters/user, {:.2f} inters/item, {:.2f}% sparse)",
                 s.n_users, s.n_items, s.n_interactions, s.inters_per_user, s.inters_per_item, 100.0 * s.sparsity);
    spdlog::info("{} candidate sets, {} users skipped (fewer than 3 positives), {} malformed lines",
                 result.candidates.size(), result.skipped_users, result.corpus.malformed_lines);
}

void cmd_build_graphs(const RunConfig& config) {
    auto corpus = load_corpus(require_artifact(config.output_dir, artifact::kCorpus));
    auto offline = offline_sequences(corpus.sequences);
    auto items = ItemRelationGraph::build(corpus.catalog, offline, config.cooccurrence);
    auto kg = KnowledgeGraph::build(offline, corpus.demographics, corpus.catalog);
    save_graph_snapshot(in_dir(config, artifact::kGraphs), items, kg);
    write_manifest(config.output_dir, "build-graphs", config, {}, {artifact::kGraphs}, {artifact::kCorpus});
    spdlog::info("item graph: {} items; knowledge graph: {} nodes, {} edges", items.items().size(), kg.node_count(),
                 kg.edge_count());
}

void cmd_gen_profiles(const RunConfig& config) {
    auto corpus = load_corpus(require_artifact(config.output_dir, artifact::kCorpus));
    auto candidates = load_candidates(config);
    auto policy = make_policy(config, candidates);

    auto store = generate_profiles(*policy, corpus);
    store.save(in_dir(config, artifact::kProfiles));

    EmbeddingCache cache;
    auto provider = make_embedder(config);
    CachedEmbedder embedder(*provider, cache);
    for (const auto& [user, profile] : store.all()) embed_profile(embedder, user, profile.rendered);
    cache.save(in_dir(config, artifact::kEmbeddings));

    write_manifest(config.output_dir, "gen-profiles", config, {}, {artifact::kProfiles, artifact::kEmbeddings},
                   {artifact::kCorpus, artifact::kCandidates});
    spdlog::info("{} profiles with {} embeddings ({})", store.all().size(), cache.size(), provider->tag());
}

void cmd_serve_tools(const RunConfig& config) {
    auto toolbox = load_toolbox(config);
    ToolServer server(toolbox, config.gateway);
    server.start();
    spdlog::info("serving tools on {} (Ctrl-C to stop)", server.base_url());
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    spdlog::info("stopped");
}

void cmd_run_agent(const RunConfig& config, const std::string& role, const std::string& case_id,
                   std::size_t limit) {
    auto all = load_candidates(config);
    auto toolbox = load_toolbox(config);
    auto cases = select_role(all, parse_role(role));
    if (!case_id.empty()) {
        std::erase_if(cases, [&](const CandidateSet& c) { return c.case_id != case_id; });
        if (cases.empty()) throw Error("no " + role + " case '" + case_id + "'");
    }
    if (limit > 0 && cases.size() > limit) cases.resize(limit);
    auto policy = make_policy(config, all);
    auto trajectories = run_batch(*policy, *toolbox, cases, config.batch(1));
    write_trajectories(in_dir(config, artifact::kRunTrajectories), trajectories);
    write_manifest(config.output_dir, "run-agent", config, {}, {artifact::kRunTrajectories}, kIndexArtifacts);
    spdlog::info("{} episodes: {}", trajectories.size(), outcome_summary(trajectories));
}

void cmd_gen_trajectories(const RunConfig& config) {
    auto all = load_candidates(config);
    auto toolbox = load_toolbox(config);
    auto cases = select_role(all, SplitRole::validation);
    auto policy = make_policy(config, all);
    auto trajectories = run_batch(*policy, *toolbox, cases, config.batch(config.generation_repeats));
    write_trajectories(in_dir(config, artifact::kTrajectories), trajectories);
    write_manifest(config.output_dir, "gen-trajectories", config, {}, {artifact::kTrajectories}, kIndexArtifacts);
    spdlog::info("{} trajectories over {} validation cases: {}", trajectories.size(), cases.size(),
                 outcome_summary(trajectories));
}

void cmd_filter_sft(const RunConfig& config) {
    auto trajectories = read_trajectories(require_artifact(config.output_dir, artifact::kTrajectories));
    auto candidates = index_candidates(load_candidates(config));
    auto corpus = load_corpus(require_artifact(config.output_dir, artifact::kCorpus));
    const auto registry = ToolRegistry::standard();

    auto kept = filter_sft(trajectories, candidates, config.limits.max_turns);
    std::vector<json> samples;
    for (const auto& t : kept) {
        samples.emplace_back(assemble_sft_sample(t, candidates_for(candidates, t.case_id), corpus.catalog, registry,
                                                 config.limits.max_turns));
    }
    write_trajectories(in_dir(config, artifact::kSftTrajectories), kept);
    write_jsonl(in_dir(config, artifact::kSft), samples);
    write_manifest(config.output_dir, "filter-sft", config, {}, {artifact::kSftTrajectories, artifact::kSft},
                   {artifact::kTrajectories, artifact::kCandidates, artifact::kCorpus});
    spdlog::info("kept {} of {} trajectories for SFT", kept.size(), trajectories.size());
}

void cmd_sample_rl(const RunConfig& config) {
    auto sft = read_trajectories(require_artifact(config.output_dir, artifact::kSftTrajectories));
    auto all = load_candidates(config);
    auto toolbox = load_toolbox(config);
    auto policy = make_policy(config, all);

    std::set<std::string> sft_cases;
    for (const auto& t : sft) sft_cases.insert(t.case_id);
    RlSamplingOptions options;
    options.rollouts = config.rl_rollouts;
    options.band_lo = config.band_lo;
    options.band_hi = config.band_hi;
    options.weights = config.weights;
    options.batch = config.batch(config.rl_rollouts);

    auto cases = select_role(all, SplitRole::validation);
    auto result = sample_rl_cases(*policy, *toolbox, cases, sft_cases, options);

    std::vector<json> records;
    for (const auto& c : result.selected) {
        json rec = c;
        std::vector<double> rewards;
        for (const auto& r : c.rollouts) rewards.push_back(r.reward.combined);
        auto adv = group_advantages(rewards);
        for (std::size_t i = 0; i < adv.advantages.size(); ++i) rec["rollouts"][i]["advantage"] = adv.advantages[i];
        records.push_back(std::move(rec));
    }
    std::set<std::string> selected;
    for (const auto& c : result.selected) selected.insert(c.case_id);
    std::vector<Trajectory> rollouts;
    for (const auto& t : result.trajectories) {
        if (selected.contains(t.case_id)) rollouts.push_back(t);
    }
    write_jsonl(in_dir(config, artifact::kRl), records);
    write_trajectories(in_dir(config, artifact::kRlRollouts), rollouts);
    write_manifest(config.output_dir, "sample-rl", config, {}, {artifact::kRl, artifact::kRlRollouts},
                   [] {
                       auto v = kIndexArtifacts;
                       v.push_back(artifact::kSftTrajectories);
                       return v;
                   }());
    spdlog::info("{} candidate cases outside SFT, {} selected in ({}, {}] with {} rollouts",
                 result.selected.size() + result.rejected.size(), result.selected.size(), config.band_lo,
                 config.band_hi, config.rl_rollouts);
}

void cmd_evaluate(const RunConfig& config) {
    auto all = load_candidates(config);
    auto toolbox = load_toolbox(config);
    auto cases = select_role(all, SplitRole::test);
    auto policy = make_policy(config, all);
    auto result = evaluate(*policy, *toolbox, cases, config.batch(config.evaluation_repeats));

    json metrics = result.report;
    std::string table = render_metrics_table(result.report, policy->name());
    if (!result.trajectories.empty()) {
        auto usage = tool_usage_stats(result.trajectories);
        metrics["tool_usage"] = usage;
        table += "\n" + render_tool_usage_table(usage);
    }
    write_json(in_dir(config, artifact::kMetrics), metrics);
    write_text(in_dir(config, artifact::kMetricsTable), table);
    write_trajectories(in_dir(config, artifact::kEvalTrajectories), result.trajectories);
    write_manifest(config.output_dir, "evaluate", config, {},
                   {artifact::kMetrics, artifact::kMetricsTable, artifact::kEvalTrajectories}, kIndexArtifacts);
    std::cout << table;
}

void cmd_reward_check(const RunConfig& config, std::string trajectories_path, std::string candidates_path) {
    if (trajectories_path.empty()) trajectories_path = require_artifact(config.output_dir, artifact::kTrajectories);
    if (candidates_path.empty()) candidates_path = require_artifact(config.output_dir, artifact::kCandidates);
    auto trajectories = read_trajectories(trajectories_path);
    auto candidates = index_candidates(read_candidates(candidates_path));

    std::cout << "R_tool piecewise schedule\n";
    std::cout << fmt::format("{:>4}  {:>8}\n", "n", "R_tool");
    for (std::int64_t n = 0; n <= 16; ++n) std::cout << fmt::format("{:>4}  {:>8.4f}\n", n, reward_tool(n));

    std::cout << fmt::format("\nweights: lambda1={} lambda2={}\n", config.weights.lambda1, config.weights.lambda2);
    std::cout << fmt::format("{:<28} {:<15} {:>3} {:>8} {:>6} {:>8} {:>9}\n", "trajectory", "outcome", "n", "R_acc",
                             "R_fmt", "R_tool", "combined");
    std::vector<json> records;
    for (const auto& t : trajectories) {
        auto r = combined_reward(t, candidates_for(candidates, t.case_id), config.weights, config.limits.max_turns);
        std::cout << fmt::format("{:<28} {:<15} {:>3} {:>8.4f} {:>6} {:>8.4f} {:>9}\n", t.ref(),
                                 outcome_name(t.outcome), r.n_tool_calls, r.r_acc, r.r_fmt, r.r_tool,
                                 fmt::format("{:.6g}", r.combined));
        records.push_back({{"trajectory_ref", t.ref()}, {"reward_breakdown", r}});
    }
    ensure_output_dir(config);
    write_jsonl(in_dir(config, "rewards.jsonl"), records);
    Manifest m{"reward-check", config.hash, config.seed, {}, {}, {}, config.raw};
    m.inputs = {{trajectories_path, file_hash(trajectories_path)}, {candidates_path, file_hash(candidates_path)}};
    m.outputs = {{"rewards.jsonl", file_hash(in_dir(config, "rewards.jsonl"))}};
    write_json(in_dir(config, manifest_name("reward-check")), m);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tool-augmented recommendation agent pipeline"};
    app.require_subcommand(1);
    Common common;

    auto* ingest = app.add_subcommand("ingest", "Load a dataset, split it leave-one-out and sample candidates");
    std::string format, interactions, items, users;
    ingest->add_option("--format", format, "movielens or amazon");
    ingest->add_option("--interactions", interactions, "ratings.dat or reviews JSON lines");
    ingest->add_option("--items", items, "movies.dat or item metadata JSON lines");
    ingest->add_option("--users", users, "users.dat (MovieLens)");

    auto* graphs = app.add_subcommand("build-graphs", "Build the item relation graph and knowledge graph");
    auto* profiles = app.add_subcommand("gen-profiles", "Summarize user profiles and embed them");
    auto* serve = app.add_subcommand("serve-tools", "Serve the five tools over HTTP");
    int port = -1;
    serve->add_option("--port", port, "Port (gateway.port)");

    auto* run = app.add_subcommand("run-agent", "Run agent episodes");
    std::string role = "test", case_id;
    std::size_t limit = 0;
    run->add_option("--role", role, "validation or test");
    run->add_option("--case", case_id, "Single case id");
    run->add_option("--limit", limit, "At most this many cases");

    auto* gen = app.add_subcommand("gen-trajectories", "Generate trajectories on validation cases");
    auto* filter = app.add_subcommand("filter-sft", "Keep accurate, well-formed trajectories and export SFT samples");
    auto* rl = app.add_subcommand("sample-rl", "Select hard-but-solvable cases for RL");
    auto* eval = app.add_subcommand("evaluate", "NDCG@{1,5,10} on test cases");
    auto* reward = app.add_subcommand("reward-check", "Recompute reward breakdowns for a trajectory file");
    std::string reward_trajectories, reward_candidates;
    reward->add_option("--trajectories", reward_trajectories, "Trajectory JSON lines");
    reward->add_option("--candidates", reward_candidates, "Candidate sets JSON lines");

    for (auto* cmd : {ingest, graphs, profiles, serve, run, gen, filter, rl, eval, reward}) add_common(cmd, common);

    CLI11_PARSE(app, argc, argv);

    spdlog::set_default_logger(spdlog::stderr_color_mt("agentrec"));
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(common.verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        std::vector<std::string> extra;
        if (!format.empty()) extra.push_back("dataset.format=" + format);
        if (!interactions.empty()) extra.push_back("dataset.interactions=" + interactions);
        if (!items.empty()) extra.push_back("dataset.items=" + items);
        if (!users.empty()) extra.push_back("dataset.users=" + users);
        if (port >= 0) extra.push_back(fmt::format("gateway.port={}", port));
        const auto config = common.resolve(extra);

        if (ingest->parsed()) cmd_ingest(config);
        if (graphs->parsed()) cmd_build_graphs(config);
        if (profiles->parsed()) cmd_gen_profiles(config);
        if (serve->parsed()) cmd_serve_tools(config);
        if (run->parsed()) cmd_run_agent(config, role, case_id, limit);
        if (gen->parsed()) cmd_gen_trajectories(config);
        if (filter->parsed()) cmd_filter_sft(config);
        if (rl->parsed()) cmd_sample_rl(config);
        if (eval->parsed()) cmd_evaluate(config);
        if (reward->parsed()) cmd_reward_check(config, reward_trajectories, reward_candidates);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
