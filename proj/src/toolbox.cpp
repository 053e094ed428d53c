#include "agentrec/toolbox.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "agentrec/policy.hpp"

namespace agentrec {

void to_json(json& j, const ToolCall& c) { j = json{{"name", c.name}, {"arguments", c.arguments}}; }

void from_json(const json& j, ToolCall& c) {
    c.name = j.at("name").get<std::string>();
    c.arguments = j.contains("arguments") ? j.at("arguments") : json::object();
}

Observation Observation::success(std::string tool, std::string payload) {
    return {std::move(tool), std::move(payload), true, std::nullopt};
}

Observation Observation::failure(std::string tool, std::string message) {
    auto payload = "error: " + message;
    return {std::move(tool), std::move(payload), false, std::move(message)};
}

void to_json(json& j, const Observation& o) {
    j = json{{"tool", o.tool}, {"payload", o.payload}, {"ok", o.ok}};
    j["error"] = o.error ? json(*o.error) : json(nullptr);
}

void from_json(const json& j, Observation& o) {
    o.tool = j.at("tool").get<std::string>();
    o.payload = j.at("payload").get<std::string>();
    o.ok = j.at("ok").get<bool>();
    if (j.contains("error") && !j.at("error").is_null()) {
        o.error = j.at("error").get<std::string>();
    } else {
        o.error.reset();
    }
}

// ---------------------------------------------------------------------------
// Registry

json ToolSpec::schema() const {
    json props = json::object();
    json required = json::array();
    for (const auto& p : parameters) {
        json prop;
        if (p.type == ParamSpec::Type::integer) {
            prop = {{"type", "integer"}, {"minimum", p.minimum}};
        } else {
            prop = {{"type", json::array({"string", "integer"})}};
        }
        prop["description"] = p.description;
        props[p.name] = prop;
        if (p.required) required.push_back(p.name);
    }
    return {{"name", name},
            {"description", description},
            {"parameters", {{"type", "object"}, {"properties", props}, {"required", required},
                            {"additionalProperties", false}}}};
}

ToolRegistry ToolRegistry::standard() {
    using T = ParamSpec::Type;
    const ParamSpec user{"user_id", T::identifier, false, 0,
                         "User to query; defaults to the user of the current task."};
    ToolRegistry r;
    r.specs_ = {
        {tools::kUserProfile,
         "Static attributes and a summary of the user's long-term preferences.",
         {user}},
        {tools::kUserHistory,
         "Chronological interaction history, paged backwards from the most recent item. Page m=1 "
         "holds the k most recent items, m=2 the k before those, and so on. Reports whether the "
         "full history has been served.",
         {user,
          {"m", T::integer, true, 1, "Page index, 1 = most recent."},
          {"k", T::integer, false, 1, "Page size (default 5)."}}},
        {tools::kItemInfo,
         "Attributes of an item plus its most related items from the item relation graph, with "
         "the relations connecting them.",
         {{"item_id", T::identifier, true, 0, "Item to look up."},
          {"top_k", T::integer, false, 1, "Number of related items (default 5)."}}},
        {tools::kSimilarUsers,
         "Users with similar preferences (interaction overlap blended with profile similarity) "
         "and their profiles.",
         {user, {"top_k", T::integer, false, 1, "Number of similar users (default 5)."}}},
        {tools::kKnowledgeGraph,
         "Multi-hop collaborative evidence from the user-item knowledge graph: sampled two-hop "
         "and three-hop paths to other users, with explanations and their profiles.",
         {user,
          {"k1", T::integer, false, 0, "Two-hop paths to sample (default 2)."},
          {"k2", T::integer, false, 1, "Three-hop paths to sample; must exceed k1 (default 3)."},
          {"seed", T::integer, false, 0, "Sampling seed."}}},
    };
    return r;
}

const ToolSpec* ToolRegistry::find(std::string_view name) const {
    for (const auto& s : specs_) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

std::optional<std::string> ToolRegistry::validate(const ToolCall& call) const {
    const auto* spec = find(call.name);
    if (!spec) {
        std::vector<std::string> names;
        for (const auto& s : specs_) names.push_back(s.name);
        return fmt::format("unknown tool '{}'; available tools: {}", call.name, fmt::join(names, ", "));
    }
    if (!call.arguments.is_object()) {
        return fmt::format("arguments of {} must be an object", call.name);
    }
    for (const auto& [key, value] : call.arguments.items()) {
        auto it = std::find_if(spec->parameters.begin(), spec->parameters.end(),
                               [&](const ParamSpec& p) { return p.name == key; });
        if (it == spec->parameters.end()) {
            return fmt::format("unexpected argument '{}' for {}", key, call.name);
        }
        if (it->type == ParamSpec::Type::integer) {
            if (!value.is_number_integer() || value.get<std::int64_t>() < it->minimum) {
                return fmt::format("argument '{}' of {} must be an integer >= {}", key, call.name, it->minimum);
            }
        } else if (!(value.is_string() && !value.get<std::string>().empty()) && !value.is_number_integer()) {
            return fmt::format("argument '{}' of {} must be a non-empty identifier", key, call.name);
        }
    }
    for (const auto& p : spec->parameters) {
        if (p.required && !call.arguments.contains(p.name)) {
            return fmt::format("missing required argument '{}' for {}", p.name, call.name);
        }
    }
    return std::nullopt;
}

json ToolRegistry::document() const {
    json tools = json::array();
    for (const auto& s : specs_) tools.push_back(s.schema());
    return {{"version", 1}, {"tools", tools}};
}

// ---------------------------------------------------------------------------
// Profiles

UserProfile UserProfile::make(UserId user, std::optional<std::string> demographics, std::string summary) {
    if (trim(summary).empty()) throw Error("profile summary must be non-empty");
    if (demographics && trim(*demographics).empty()) demographics.reset();
    auto rendered = demographics ? *demographics + "\n" + summary : summary;
    return {std::move(user), std::move(demographics), std::move(summary), std::move(rendered)};
}

void to_json(json& j, const UserProfile& p) {
    j = json{{"user", p.user}, {"summary", p.summary}, {"rendered", p.rendered}};
    j["demographics"] = p.demographics ? json(*p.demographics) : json(nullptr);
}

void from_json(const json& j, UserProfile& p) {
    std::optional<std::string> demo;
    if (j.contains("demographics") && !j.at("demographics").is_null()) {
        demo = j.at("demographics").get<std::string>();
    }
    p = UserProfile::make(j.at("user").get<UserId>(), demo, j.at("summary").get<std::string>());
    if (p.rendered != j.at("rendered").get<std::string>()) {
        throw Error("profile cache entry for " + p.user.str() + " is inconsistent");
    }
}

ProfileStore ProfileStore::load(const std::string& path) {
    ProfileStore store;
    for (const auto& rec : read_jsonl(path)) store.put(rec.get<UserProfile>());
    return store;
}

void ProfileStore::save(const std::string& path) const {
    std::vector<json> records;
    for (const auto& [_, p] : profiles_) records.emplace_back(p);
    write_jsonl(path, records);
}

void ProfileStore::put(UserProfile profile) {
    auto user = profile.user;
    profiles_.insert_or_assign(std::move(user), std::move(profile));
}

const UserProfile* ProfileStore::find(const UserId& user) const {
    auto it = profiles_.find(user);
    return it == profiles_.end() ? nullptr : &it->second;
}

std::string item_title(const Catalog& catalog, const ItemId& item) {
    auto it = catalog.find(item);
    if (it == catalog.end() || it->second.title.empty()) return item.str();
    return it->second.title;
}

namespace {
std::string item_category(const Catalog& catalog, const ItemId& item) {
    auto it = catalog.find(item);
    return it == catalog.end() ? std::string() : it->second.category_text();
}
}  // namespace

std::string template_summary(const BehaviorSequence& history, const Catalog& catalog) {
    if (history.items.empty()) throw Error("cannot summarize an empty history for user " + history.user.str());
    std::map<std::string, std::size_t> counts;
    double rating_sum = 0.0;
    for (const auto& e : history.items) {
        rating_sum += e.rating;
        if (auto it = catalog.find(e.item); it != catalog.end()) {
            for (const auto& c : it->second.categories) ++counts[c];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    const auto n = history.items.size();
    std::vector<std::string> top;
    for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) {
        top.push_back(fmt::format("{} ({} of {} items)", ranked[i].first, ranked[i].second, n));
    }
    std::vector<std::string> recent;
    for (std::size_t i = 0; i < n && i < 3; ++i) {
        recent.push_back(item_title(catalog, history.items[n - 1 - i].item));
    }
    std::string out = top.empty() ? std::string("Preferred categories: unknown.")
                                  : fmt::format("Preferred categories: {}.", fmt::join(top, ", "));
    out += fmt::format(" Most recent: {}.", fmt::join(recent, "; "));
    out += fmt::format(" Average rating {:.1f} over {} positive interactions.", rating_sum / static_cast<double>(n), n);
    return out;
}

std::string profile_prompt(const BehaviorSequence& history, const Catalog& catalog) {
    std::string out =
        "Summarize this user's long-term preferences and behavioral patterns in two or three "
        "sentences. Their positively rated items, oldest first:\n";
    std::size_t i = 0;
    for (const auto& e : history.items) {
        auto cat = item_category(catalog, e.item);
        out += fmt::format("{}. {}{} (rated {:g})\n", ++i, item_title(catalog, e.item),
                           cat.empty() ? "" : " [" + cat + "]", e.rating);
    }
    return out;
}

UserProfile generate_profile(Policy& policy, const UserId& user, const BehaviorSequence& history,
                             const std::optional<Demographics>& demographics, const Catalog& catalog) {
    if (history.items.empty()) throw Error("cannot generate a profile from an empty history for user " + user.str());
    std::string summary;
    if (policy.deterministic()) {
        summary = template_summary(history, catalog);
    } else {
        std::vector<Message> messages = {
            {Role::system, "You write concise user preference profiles for a recommender system."},
            {Role::user, profile_prompt(history, catalog)}};
        summary = trim(policy.complete(messages, SamplingParams{}, derive_seed(0, "profile", user.str())));
    }
    std::optional<std::string> demo;
    if (demographics) demo = demographics->render();
    return UserProfile::make(user, demo, summary);
}

// ---------------------------------------------------------------------------
// History paging

HistoryPage history_page(const BehaviorSequence& sequence, std::size_t page, std::size_t page_size,
                         const Catalog& catalog) {
    if (page == 0 || page_size == 0) throw Error("history page and page size must be >= 1");
    HistoryPage out;
    out.user = sequence.user;
    out.page = page;
    out.page_size = page_size;
    out.total = sequence.items.size();
    if (page - 1 >= (out.total + page_size - 1) / page_size) {
        out.exhausted = true;
        return out;
    }
    // positions n-mk+1 .. n-(m-1)k, 1-based, clipped at 1
    const auto n = static_cast<long long>(out.total);
    const auto m = static_cast<long long>(page);
    const auto k = static_cast<long long>(page_size);
    const long long hi = n - (m - 1) * k;
    const long long lo = std::max(1LL, n - m * k + 1);
    if (hi < 1) {
        out.exhausted = true;
        return out;
    }
    out.first_position = static_cast<std::size_t>(lo);
    out.last_position = static_cast<std::size_t>(hi);
    for (long long p = lo; p <= hi; ++p) {
        const auto& e = sequence.items[static_cast<std::size_t>(p - 1)];
        out.items.push_back({e.item, item_title(catalog, e.item), item_category(catalog, e.item), e.rating});
    }
    out.exhausted = lo == 1;
    return out;
}

void to_json(json& j, const ToolContext& c) {
    j = json::object();
    if (c.user) j["user"] = *c.user;
    j["role"] = role_name(c.role);
    if (c.held_out) j["held_out"] = *c.held_out;
    j["seed"] = c.seed;
}

void from_json(const json& j, ToolContext& c) {
    c = {};
    if (j.contains("user")) c.user = j.at("user").get<UserId>();
    c.role = parse_role(j.value("role", std::string("test")));
    if (j.contains("held_out")) c.held_out = j.at("held_out").get<ItemId>();
    c.seed = j.value("seed", std::uint64_t{0});
}

// ---------------------------------------------------------------------------
// Toolbox

Toolbox::Toolbox(std::shared_ptr<const ToolIndices> indices, ToolboxConfig config)
    : indices_(std::move(indices)), config_(config), registry_(ToolRegistry::standard()) {
    if (!indices_) throw Error("toolbox requires indices");
    if (config_.kg_two_hop >= config_.kg_three_hop) throw Error("toolbox config requires k1 < k2");
    HybridConfig{config_.alpha, config_.similar_users}.validate();
}

bool Toolbox::knows_user(const UserId& user) const {
    return indices_->sequences.contains(user) || indices_->profiles.find(user) != nullptr;
}

BehaviorSequence Toolbox::training_view(const UserId& user, SplitRole role) const {
    auto it = indices_->sequences.find(user);
    if (it == indices_->sequences.end()) return {user, {}};
    return drop_last(it->second, role == SplitRole::test ? 1 : 2);
}

namespace {
std::string one_line(std::string_view s) {
    std::string out;
    for (char c : s) out += (c == '\n') ? std::string(" / ") : std::string(1, c);
    return out;
}
}  // namespace

Observation Toolbox::user_profile(const UserId& user) const {
    const auto* p = indices_->profiles.find(user);
    if (!p) return Observation::failure(tools::kUserProfile, "unknown user " + user.str());
    return Observation::success(tools::kUserProfile, p->rendered);
}

Observation Toolbox::user_history(const UserId& user, std::size_t page, std::size_t page_size,
                                  SplitRole role) const {
    if (!knows_user(user)) return Observation::failure(tools::kUserHistory, "unknown user " + user.str());
    auto hp = history_page(training_view(user, role), page, page_size, indices_->catalog);
    std::string out = fmt::format("user_id: {}\npage: {} (page size {})\n", user.str(), hp.page, hp.page_size);
    if (hp.items.empty()) {
        out += fmt::format("positions: none of {}\nitems: none\n", hp.total);
    } else {
        out += fmt::format("positions: {}-{} of {}\nitems (oldest first):\n", hp.first_position,
                           hp.last_position, hp.total);
        for (const auto& e : hp.items) {
            out += fmt::format("- item_id: {} | title: {} | category: {} | rating: {:g}\n", e.item.str(),
                               e.title, e.category.empty() ? "unknown" : e.category, e.rating);
        }
    }
    out += fmt::format("exhausted: {}", hp.exhausted ? "true" : "false");
    return Observation::success(tools::kUserHistory, out);
}

Observation Toolbox::item_info(const ItemId& item, std::size_t k) const {
    const auto& catalog = indices_->catalog;
    auto it = catalog.find(item);
    if (it == catalog.end() || !indices_->item_graph.contains(item)) {
        return Observation::failure(tools::kItemInfo, "unknown item " + item.str());
    }
    std::string out = fmt::format("item_id: {}\n", item.str());
    for (const auto& [key, value] : it->second.attributes()) out += fmt::format("{}: {}\n", key, value);
    auto related = indices_->item_graph.related_items(item, k);
    if (related.empty()) {
        out += "related items: none";
    } else {
        out += "related items:";
        std::size_t rank = 0;
        for (const auto& r : related) {
            std::vector<std::string_view> labels;
            for (auto t : r.relations.types()) labels.push_back(relation_label(t));
            out += fmt::format("\n{}. item_id: {} | title: {} | score: {} | relations: {}", ++rank,
                               r.item.str(), item_title(catalog, r.item), r.score, fmt::join(labels, ", "));
        }
    }
    return Observation::success(tools::kItemInfo, out);
}

Observation Toolbox::similar_users(const UserId& user, std::size_t k) const {
    if (k == 0) return Observation::failure(tools::kSimilarUsers, "k must be >= 1");
    if (!indices_->similarity.contains(user)) {
        return Observation::failure(tools::kSimilarUsers, "unknown user " + user.str());
    }
    auto ranked = indices_->similarity.top_similar_users(user, k, config_.alpha);
    std::string out = fmt::format("user_id: {}\nsimilar users:", user.str());
    if (ranked.empty()) out += " none";
    std::size_t rank = 0;
    for (const auto& s : ranked) {
        const auto* p = indices_->profiles.find(s.user);
        out += fmt::format("\n{}. user_id: {} | score: {:.4f}\n   profile: {}", ++rank, s.user.str(), s.score,
                           p ? one_line(p->rendered) : std::string("(no profile)"));
    }
    return Observation::success(tools::kSimilarUsers, out);
}

Observation Toolbox::kg_search(const UserId& user, std::size_t k1, std::size_t k2, std::uint64_t seed,
                               const std::set<ItemId>& exclude_items) const {
    if (k1 >= k2) {
        return Observation::failure(tools::kKnowledgeGraph,
                                    fmt::format("k1 must be smaller than k2 (got k1={}, k2={})", k1, k2));
    }
    if (!knows_user(user)) return Observation::failure(tools::kKnowledgeGraph, "unknown user " + user.str());
    std::string out = fmt::format("user_id: {}\n", user.str());
    if (!indices_->knowledge.has_user(user)) return Observation::success(tools::kKnowledgeGraph, out + "no collaborative paths found");
    KgSampleOptions opts;
    opts.k1 = k1;
    opts.k2 = k2;
    opts.seed = seed;
    opts.exclude_items = exclude_items;
    opts.catalog = &indices_->catalog;
    auto ev = sample_kg_evidence(indices_->knowledge, user, opts);
    if (ev.paths.empty()) return Observation::success(tools::kKnowledgeGraph, out + "no collaborative paths found");
    out += "evidence:";
    for (std::size_t i = 0; i < ev.explanations.size(); ++i) {
        out += fmt::format("\n{}. [{}-hop] {}", i + 1, ev.paths[i].hops(), ev.explanations[i]);
    }
    out += "\nrelated user profiles:";
    for (const auto& v : ev.terminal_users) {
        const auto* p = indices_->profiles.find(v);
        out += fmt::format("\n- user_id: {} | profile: {}", v.str(), p ? one_line(p->rendered) : std::string("(no profile)"));
    }
    return Observation::success(tools::kKnowledgeGraph, out);
}

namespace {
std::string id_arg(const json& v) {
    return v.is_string() ? v.get<std::string>() : std::to_string(v.get<std::int64_t>());
}
}  // namespace

Observation Toolbox::dispatch(const ToolCall& call, const ToolContext& context) const noexcept {
    try {
        if (auto problem = registry_.validate(call)) return Observation::failure(call.name, *problem);
        const auto& args = call.arguments;
        auto size_arg = [&args](const char* key, std::size_t fallback) {
            return args.contains(key) ? static_cast<std::size_t>(args.at(key).get<std::int64_t>()) : fallback;
        };
        std::optional<UserId> user = context.user;
        if (args.contains("user_id")) user = UserId(id_arg(args.at("user_id")));

        if (call.name == tools::kItemInfo) {
            return item_info(ItemId(id_arg(args.at("item_id"))), size_arg("top_k", config_.item_neighbors));
        }
        if (!user) return Observation::failure(call.name, fmt::format("missing required argument 'user_id' for {}", call.name));

        if (call.name == tools::kUserProfile) return user_profile(*user);
        if (call.name == tools::kUserHistory) {
            return user_history(*user, size_arg("m", 1), size_arg("k", config_.history_page_size), context.role);
        }
        if (call.name == tools::kSimilarUsers) return similar_users(*user, size_arg("top_k", config_.similar_users));
        if (call.name == tools::kKnowledgeGraph) {
            std::set<ItemId> exclude;
            if (context.held_out) exclude.insert(*context.held_out);
            auto seed = args.contains("seed") ? static_cast<std::uint64_t>(args.at("seed").get<std::int64_t>())
                                              : context.seed;
            return kg_search(*user, size_arg("k1", config_.kg_two_hop), size_arg("k2", config_.kg_three_hop), seed,
                             exclude);
        }
        return Observation::failure(call.name, "unknown tool '" + call.name + "'");
    } catch (const std::exception& e) {
        return Observation::failure(call.name, e.what());
    } catch (...) {
        return Observation::failure(call.name, "internal error");
    }
}

}  // namespace agentrec
