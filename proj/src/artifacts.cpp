#include "agentrec/artifacts.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <fmt/format.h>

namespace fs = std::filesystem;

namespace agentrec {

// ---------------------------------------------------------------------------
// Config

std::string artifact::producer(const std::string& name) {
    static const std::map<std::string, std::string> producers = {
        {kCorpus, "ingest"},
        {kCandidates, "ingest"},
        {kStats, "ingest"},
        {kGraphs, "build-graphs"},
        {kProfiles, "gen-profiles"},
        {kEmbeddings, "gen-profiles"},
        {kTrajectories, "gen-trajectories"},
        {kSftTrajectories, "filter-sft"},
        {kSft, "filter-sft"},
        {kRl, "sample-rl"},
        {kRlRollouts, "sample-rl"},
        {kRunTrajectories, "run-agent"},
        {kEvalTrajectories, "evaluate"},
        {kMetrics, "evaluate"},
        {kMetricsTable, "evaluate"},
    };
    auto it = producers.find(name);
    return it == producers.end() ? std::string() : it->second;
}

json default_config() {
    return {
        {"dataset",
         {{"format", "movielens"},
          {"interactions", ""},
          {"items", ""},
          {"users", ""},
          {"positive_threshold", 3.0},
          {"negatives", kDefaultNegatives}}},
        {"graphs", {{"cooccurrence", false}, {"window", 10}}},
        {"tools",
         {{"history_page_size", 5},
          {"item_neighbors", 5},
          {"similar_users", 5},
          {"alpha", 0.5},
          {"kg_two_hop", 2},
          {"kg_three_hop", 3}}},
        {"embedding",
         {{"provider", "hashing"},
          {"dimension", 64},
          {"base_url", "http://127.0.0.1:8081"},
          {"path", "/embeddings"},
          {"model", ""},
          {"batch_size", 32},
          {"max_in_flight", 4}}},
        {"policy",
         {{"kind", "oracle"},
          {"random_tool_calls", 1},
          {"replay_file", ""},
          {"base_url", "http://127.0.0.1:8000"},
          {"path", "/v1/chat/completions"},
          {"model", "default"},
          {"auth_env", "AGENTREC_API_KEY"},
          {"max_in_flight", 4},
          {"max_attempts", 4},
          {"timeout_ms", 120000},
          {"trace_file", ""}}},
        {"sampling", {{"temperature", 1.0}, {"top_p", 0.95}, {"max_tokens", 2048}}},
        {"limits", {{"max_turns", kMaxTurns}, {"max_wall_time_ms", 120000}, {"max_prompt_tokens", 32768}}},
        {"reward", {{"lambda1", 1.0}, {"lambda2", 0.1}}},
        {"rl",
         {{"rollouts", 8},
          {"band_lo", 0.0},
          {"band_hi", 0.25},
          {"clip_eps", 0.2},
          {"beta", 0.0},
          {"group_size", 8}}},
        {"generation", {{"repeats", 1}}},
        {"evaluation", {{"repeats", 3}}},
        {"run", {{"seed", 42}, {"parallelism", 4}, {"output_dir", "out"}}},
        {"gateway", {{"host", "127.0.0.1"}, {"port", 8080}, {"log_file", ""}}},
    };
}

void apply_override(json& config, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const auto key = assignment.substr(0, eq);
    const auto text = assignment.substr(eq + 1);
    json* node = &config;
    for (const auto& part : split(key, ".")) {
        if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
        node = &(*node)[part];
    }
    if (node->is_object()) throw ConfigError("config key '" + key + "' is a section");
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    if (node->is_string() && !value.is_string()) value = text;
    *node = value;
}

namespace {
void check_known_keys(const json& defaults, const json& given, const std::string& prefix) {
    for (const auto& [key, value] : given.items()) {
        const auto path = prefix.empty() ? key : prefix + "." + key;
        if (!defaults.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        if (defaults.at(key).is_object()) {
            if (!value.is_object()) throw ConfigError("config key '" + path + "' must be a section");
            check_known_keys(defaults.at(key), value, path);
        }
    }
}
}  // namespace

json resolve_config(const std::string& path, std::span<const std::string> overrides) {
    json config = default_config();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        json file = json::parse(in, nullptr, false);
        if (file.is_discarded() || !file.is_object()) throw ConfigError(path + ": not a JSON object");
        check_known_keys(config, file, "");
        config.merge_patch(file);
    }
    for (const auto& o : overrides) apply_override(config, o);
    return config;
}

std::string config_hash(const json& config) { return hex64(fnv1a(config.dump())); }

RunConfig RunConfig::from_json(const json& resolved) {
    RunConfig c;
    c.raw = resolved;
    c.hash = config_hash(resolved);
    try {
        const auto& d = resolved.at("dataset");
        c.format = parse_format(d.at("format").get<std::string>());
        c.paths = {d.at("interactions").get<std::string>(), d.at("items").get<std::string>(),
                   d.at("users").get<std::string>()};
        c.positive_threshold = d.at("positive_threshold").get<double>();
        c.negatives = d.at("negatives").get<std::size_t>();

        const auto& g = resolved.at("graphs");
        c.cooccurrence = {g.at("cooccurrence").get<bool>(), g.at("window").get<std::size_t>()};

        const auto& t = resolved.at("tools");
        c.tools = {t.at("history_page_size").get<std::size_t>(), t.at("item_neighbors").get<std::size_t>(),
                   t.at("similar_users").get<std::size_t>(),     t.at("alpha").get<double>(),
                   t.at("kg_two_hop").get<std::size_t>(),        t.at("kg_three_hop").get<std::size_t>()};
        HybridConfig{c.tools.alpha, c.tools.similar_users}.validate();

        const auto& e = resolved.at("embedding");
        c.embedding_provider = e.at("provider").get<std::string>();
        c.embedding_dimension = e.at("dimension").get<std::size_t>();
        c.remote_embedder.base_url = e.at("base_url").get<std::string>();
        c.remote_embedder.path = e.at("path").get<std::string>();
        c.remote_embedder.model = e.at("model").get<std::string>();
        c.remote_embedder.batch_size = e.at("batch_size").get<std::size_t>();
        c.remote_embedder.max_in_flight = e.at("max_in_flight").get<std::size_t>();

        const auto& p = resolved.at("policy");
        c.policy = p.at("kind").get<std::string>();
        c.random_tool_calls = p.at("random_tool_calls").get<std::size_t>();
        c.replay_file = p.at("replay_file").get<std::string>();
        c.remote_policy.base_url = p.at("base_url").get<std::string>();
        c.remote_policy.path = p.at("path").get<std::string>();
        c.remote_policy.model = p.at("model").get<std::string>();
        c.remote_policy.auth_env = p.at("auth_env").get<std::string>();
        c.remote_policy.max_in_flight = p.at("max_in_flight").get<std::size_t>();
        c.remote_policy.retry.max_attempts = p.at("max_attempts").get<int>();
        c.remote_policy.timeout = std::chrono::milliseconds(p.at("timeout_ms").get<std::int64_t>());
        c.remote_policy.trace_file = p.at("trace_file").get<std::string>();

        const auto& s = resolved.at("sampling");
        c.sampling = {s.at("temperature").get<double>(), s.at("top_p").get<double>(),
                      s.at("max_tokens").get<std::size_t>()};
        c.sampling.validate();

        const auto& l = resolved.at("limits");
        c.limits = {l.at("max_turns").get<std::size_t>(),
                    std::chrono::milliseconds(l.at("max_wall_time_ms").get<std::int64_t>()),
                    l.at("max_prompt_tokens").get<std::size_t>()};
        c.limits.validate();

        const auto& r = resolved.at("reward");
        c.weights = {r.at("lambda1").get<double>(), r.at("lambda2").get<double>()};

        const auto& rl = resolved.at("rl");
        c.rl_rollouts = rl.at("rollouts").get<std::size_t>();
        c.band_lo = rl.at("band_lo").get<double>();
        c.band_hi = rl.at("band_hi").get<double>();
        c.clip_eps = rl.at("clip_eps").get<double>();
        c.beta = rl.at("beta").get<double>();
        c.group_size = rl.at("group_size").get<std::size_t>();

        c.generation_repeats = resolved.at("generation").at("repeats").get<std::size_t>();
        c.evaluation_repeats = resolved.at("evaluation").at("repeats").get<std::size_t>();

        const auto& run = resolved.at("run");
        c.seed = run.at("seed").get<std::uint64_t>();
        c.parallelism = run.at("parallelism").get<std::size_t>();
        c.output_dir = run.at("output_dir").get<std::string>();

        const auto& gw = resolved.at("gateway");
        c.gateway.host = gw.at("host").get<std::string>();
        c.gateway.port = gw.at("port").get<int>();
        c.gateway.log_file = gw.at("log_file").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("invalid config: {}", e.what()));
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(fmt::format("invalid config: {}", e.what()));
    }
    return c;
}

BatchOptions RunConfig::batch(std::size_t repeats) const { return {limits, sampling, parallelism, repeats, seed}; }

// ---------------------------------------------------------------------------
// Corpus artifact

void to_json(json& j, const ItemMeta& m) {
    j = json{{"id", m.id},
             {"title", m.title},
             {"categories", m.categories},
             {"brand", m.brand},
             {"price", m.price},
             {"description", m.description},
             {"year", m.year},
             {"also_bought", m.also_bought},
             {"also_viewed", m.also_viewed}};
}

void from_json(const json& j, ItemMeta& m) {
    m.id = j.at("id").get<ItemId>();
    m.title = j.at("title").get<std::string>();
    m.categories = j.at("categories").get<std::vector<std::string>>();
    m.brand = j.at("brand").get<std::string>();
    m.price = j.at("price").get<std::string>();
    m.description = j.at("description").get<std::string>();
    m.year = j.at("year").get<std::string>();
    m.also_bought = j.at("also_bought").get<std::vector<ItemId>>();
    m.also_viewed = j.at("also_viewed").get<std::vector<ItemId>>();
}

void save_corpus(const std::string& path, const Corpus& corpus) {
    json items = json::array();
    for (const auto& [_, meta] : corpus.catalog) items.push_back(meta);
    json demographics = json::object();
    for (const auto& [user, d] : corpus.demographics) {
        demographics[user.str()] = {{"gender", d.gender}, {"age", d.age}, {"occupation", d.occupation}};
    }
    json sequences = json::object();
    for (const auto& [user, seq] : corpus.sequences) {
        json entries = json::array();
        for (const auto& e : seq.items) entries.push_back({e.item.str(), e.rating, e.timestamp});
        sequences[user.str()] = std::move(entries);
    }
    json j = {{"format", format_name(corpus.format)}, {"items", items},
              {"demographics", demographics},         {"sequences", sequences},
              {"stats", corpus.stats},                {"malformed_lines", corpus.malformed_lines}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump() << '\n';
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact(fmt::format("missing {}; run {} first", path, artifact::producer(artifact::kCorpus)));
    json j = json::parse(in);
    Corpus c;
    c.format = parse_format(j.at("format").get<std::string>());
    for (const auto& item : j.at("items")) {
        auto meta = item.get<ItemMeta>();
        c.catalog.emplace(meta.id, std::move(meta));
    }
    for (const auto& [user, d] : j.at("demographics").items()) {
        c.demographics.emplace(UserId(user), Demographics{d.at("gender").get<std::string>(),
                                                         d.at("age").get<std::string>(),
                                                         d.at("occupation").get<std::string>()});
    }
    for (const auto& [user, entries] : j.at("sequences").items()) {
        BehaviorSequence seq{UserId(user), {}};
        for (const auto& e : entries) {
            seq.items.push_back({ItemId(e.at(0).get<std::string>()), e.at(1).get<double>(), e.at(2).get<std::int64_t>()});
        }
        c.sequences.emplace(seq.user, std::move(seq));
    }
    const auto& s = j.at("stats");
    c.stats = {s.at("users").get<std::size_t>(),         s.at("items").get<std::size_t>(),
               s.at("interactions").get<std::size_t>(),  s.at("inters_per_user").get<double>(),
               s.at("inters_per_item").get<double>(),    s.at("sparsity").get<double>()};
    c.malformed_lines = j.at("malformed_lines").get<std::size_t>();
    return c;
}

std::vector<CandidateSet> read_candidates(const std::string& path) {
    std::vector<CandidateSet> out;
    for (const auto& rec : read_jsonl(path)) out.push_back(rec.get<CandidateSet>());
    return out;
}

void write_candidates(const std::string& path, std::span<const CandidateSet> candidates) {
    std::vector<json> records(candidates.begin(), candidates.end());
    write_jsonl(path, records);
}

std::vector<CandidateSet> select_role(std::span<const CandidateSet> candidates, SplitRole role) {
    std::vector<CandidateSet> out;
    for (const auto& c : candidates) {
        if (c.role == role) out.push_back(c);
    }
    return out;
}

SequenceMap offline_sequences(const SequenceMap& sequences) {
    SequenceMap out;
    for (const auto& [user, seq] : sequences) {
        auto cut = drop_last(seq, 2);
        if (!cut.items.empty()) out.emplace(user, std::move(cut));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Policies and indices

std::unique_ptr<EmbeddingProvider> make_embedder(const RunConfig& config) {
    if (config.embedding_provider == "hashing") {
        return std::make_unique<HashingEmbedder>(config.embedding_dimension, config.seed);
    }
    if (config.embedding_provider == "remote") return std::make_unique<RemoteEmbedder>(config.remote_embedder);
    throw ConfigError("unknown embedding provider '" + config.embedding_provider + "' (hashing, remote)");
}

std::unique_ptr<Policy> make_policy(const RunConfig& config, std::span<const CandidateSet> candidates) {
    if (config.policy == "oracle") return std::make_unique<OraclePolicy>(candidates);
    if (config.policy == "random") return std::make_unique<RandomPolicy>(config.random_tool_calls);
    if (config.policy == "replay") {
        if (config.replay_file.empty()) throw ConfigError("policy.kind=replay needs policy.replay_file");
        auto trajectories = read_trajectories(config.replay_file);
        return std::make_unique<ReplayPolicy>(ReplayPolicy::from_trajectories(trajectories, candidates, true));
    }
    if (config.policy == "remote") return std::make_unique<RemotePolicy>(config.remote_policy);
    throw ConfigError("unknown policy kind '" + config.policy + "' (oracle, random, replay, remote)");
}

IngestResult ingest_dataset(const RunConfig& config) {
    const auto& p = config.paths;
    if (p.interactions.empty()) throw ConfigError("dataset.interactions is not set");
    for (const auto& path : {p.interactions, p.items, p.users}) {
        if (!path.empty() && !fs::exists(path)) throw ConfigError("dataset file not found: " + path);
    }
    auto data = load_interactions(config.format, p);

    IngestResult out;
    auto& corpus = out.corpus;
    corpus.format = config.format;
    corpus.catalog = std::move(data.catalog);
    corpus.demographics = std::move(data.demographics);
    corpus.sequences = build_sequences(data.interactions, config.positive_threshold);
    corpus.stats = dataset_stats(data.interactions);
    corpus.malformed_lines = data.malformed_lines;

    auto split = leave_one_out_split(corpus.sequences);
    out.skipped_users = split.skipped.size();
    auto universe = item_universe(data.interactions);
    for (const auto& c : split.cases) {
        out.candidates.push_back(sample_candidates(c, corpus.sequences.at(c.user), universe, config.negatives,
                                                   derive_seed(config.seed, "candidates", c.case_id)));
    }
    return out;
}

ProfileStore generate_profiles(Policy& policy, const Corpus& corpus) {
    ProfileStore store;
    for (const auto& [user, seq] : offline_sequences(corpus.sequences)) {
        std::optional<Demographics> demo;
        if (auto it = corpus.demographics.find(user); it != corpus.demographics.end()) demo = it->second;
        store.put(generate_profile(policy, user, seq, demo, corpus.catalog));
    }
    return store;
}

std::shared_ptr<ToolIndices> assemble_indices(Corpus corpus, ItemRelationGraph items, KnowledgeGraph knowledge,
                                              ProfileStore profiles, EmbeddingProvider& embedder,
                                              std::map<std::string, std::string> content_hashes) {
    std::map<UserId, std::vector<ItemId>> item_sets;
    for (const auto& [user, seq] : offline_sequences(corpus.sequences)) item_sets[user] = seq.item_ids();
    std::map<UserId, ProfileEmbedding> embeddings;
    for (const auto& [user, profile] : profiles.all()) {
        embeddings[user] = embed_profile(embedder, user, profile.rendered);
    }
    auto indices = std::make_shared<ToolIndices>();
    indices->catalog = std::move(corpus.catalog);
    indices->sequences = std::move(corpus.sequences);
    indices->item_graph = std::move(items);
    indices->knowledge = std::move(knowledge);
    indices->profiles = std::move(profiles);
    indices->similarity = SimilarityIndex(std::move(item_sets), std::move(embeddings));
    indices->content_hashes = std::move(content_hashes);
    return indices;
}

std::shared_ptr<const ToolIndices> load_tool_indices(const std::string& dir, const RunConfig& config) {
    const auto corpus_path = require_artifact(dir, artifact::kCorpus);
    const auto graphs_path = require_artifact(dir, artifact::kGraphs);
    const auto profiles_path = require_artifact(dir, artifact::kProfiles);
    const auto embeddings_path = require_artifact(dir, artifact::kEmbeddings);

    auto snapshot = load_graph_snapshot(graphs_path);
    auto cache = EmbeddingCache::load(embeddings_path);
    auto provider = make_embedder(config);
    CachedEmbedder embedder(*provider, cache);
    return assemble_indices(load_corpus(corpus_path), std::move(snapshot.items), std::move(snapshot.knowledge),
                            ProfileStore::load(profiles_path), embedder,
                            {{"corpus", file_hash(corpus_path)},
                             {"graphs", snapshot.content_hash},
                             {"profiles", file_hash(profiles_path)},
                             {"embeddings", file_hash(embeddings_path)}});
}

// ---------------------------------------------------------------------------
// Manifests

void to_json(json& j, const Manifest& m) {
    j = json{{"format", "agentrec-manifest"}, {"version", 1},          {"command", m.command},
             {"config_hash", m.config_hash},  {"seed", m.seed},        {"inputs", m.inputs},
             {"outputs", m.outputs},          {"upstream", m.upstream}, {"config", m.config}};
}

void from_json(const json& j, Manifest& m) {
    if (j.value("format", "") != "agentrec-manifest" || j.value("version", 0) != 1) {
        throw Error("not an agentrec manifest (version 1)");
    }
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.upstream = j.at("upstream").get<std::map<std::string, std::string>>();
    m.config = j.at("config");
}

std::string manifest_name(const std::string& command) { return "manifest." + command + ".json"; }

Manifest write_manifest(const std::string& dir, const std::string& command, const RunConfig& config,
                        const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                        const std::vector<std::string>& consumed) {
    Manifest m{command, config.hash, config.seed, {}, {}, {}, config.raw};
    for (const auto& path : inputs) {
        if (!path.empty()) m.inputs[path] = file_hash(path);
    }
    for (const auto& name : outputs) m.outputs[name] = file_hash((fs::path(dir) / name).string());
    std::set<std::string> producers;
    for (const auto& name : consumed) {
        auto p = artifact::producer(name);
        if (!p.empty() && p != command) producers.insert(p);
    }
    for (const auto& p : producers) {
        const auto path = fs::path(dir) / manifest_name(p);
        if (!fs::exists(path)) throw MissingArtifact(fmt::format("missing {}; run {} first", path.string(), p));
        m.upstream[manifest_name(p)] = file_hash(path.string());
    }
    std::ofstream out(fs::path(dir) / manifest_name(command));
    if (!out) throw Error("cannot write manifest for " + command);
    out << json(m).dump(2) << '\n';
    return m;
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("missing " + path);
    return json::parse(in).get<Manifest>();
}

std::string require_artifact(const std::string& dir, const std::string& name) {
    const auto path = (fs::path(dir) / name).string();
    if (!fs::exists(path)) {
        throw MissingArtifact(fmt::format("missing {}; run {} first", path, artifact::producer(name)));
    }
    return path;
}

}  // namespace agentrec
