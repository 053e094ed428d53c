#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "agentrec/common.hpp"
#include "agentrec/corpus.hpp"
#include "agentrec/graphs.hpp"
#include "agentrec/retrieval.hpp"

namespace agentrec {

class Policy;

namespace tools {
inline constexpr const char* kUserProfile = "user_profile_search";
inline constexpr const char* kUserHistory = "user_history_search";
inline constexpr const char* kItemInfo = "item_info_search";
inline constexpr const char* kSimilarUsers = "similar_users_search";
inline constexpr const char* kKnowledgeGraph = "knowledge_graph_search";
}  // namespace tools

struct ToolCall {
    std::string name;
    json arguments = json::object();

    friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

void to_json(json& j, const ToolCall& c);
void from_json(const json& j, ToolCall& c);

/// What the policy sees after a tool call. `payload` is shown verbatim;
/// on failure it carries the error text as well.
struct Observation {
    std::string tool;
    std::string payload;
    bool ok = true;
    std::optional<std::string> error;

    static Observation success(std::string tool, std::string payload);
    static Observation failure(std::string tool, std::string message);

    friend bool operator==(const Observation&, const Observation&) = default;
};

void to_json(json& j, const Observation& o);
void from_json(const json& j, Observation& o);

struct ParamSpec {
    std::string name;
    enum class Type { identifier, integer } type = Type::integer;
    bool required = false;
    std::int64_t minimum = 0;
    std::string description;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ParamSpec> parameters;

    /// JSON-schema style description: {name, description, parameters: {type, properties, required}}.
    json schema() const;
};

class ToolRegistry {
public:
    static ToolRegistry standard();

    const std::vector<ToolSpec>& specs() const noexcept { return specs_; }
    const ToolSpec* find(std::string_view name) const;

    /// Returns a corrective message when `call` does not fit its spec.
    std::optional<std::string> validate(const ToolCall& call) const;

    json document() const;

private:
    std::vector<ToolSpec> specs_;
};

struct UserProfile {
    UserId user;
    std::optional<std::string> demographics;
    std::string summary;
    std::string rendered;

    static UserProfile make(UserId user, std::optional<std::string> demographics, std::string summary);
};

void to_json(json& j, const UserProfile& p);
void from_json(const json& j, UserProfile& p);

class ProfileStore {
public:
    static ProfileStore load(const std::string& path);
    void save(const std::string& path) const;

    void put(UserProfile profile);
    const UserProfile* find(const UserId& user) const;
    const std::map<UserId, UserProfile>& all() const noexcept { return profiles_; }

private:
    std::map<UserId, UserProfile> profiles_;
};

/// Deterministic preference summary: top categories by frequency plus recent titles.
std::string template_summary(const BehaviorSequence& history, const Catalog& catalog);

/// Summarization prompt sent to a chat policy.
std::string profile_prompt(const BehaviorSequence& history, const Catalog& catalog);

/// One summarization per user. Deterministic policies use template_summary;
/// others answer profile_prompt through Policy::complete.
UserProfile generate_profile(Policy& policy, const UserId& user, const BehaviorSequence& history,
                             const std::optional<Demographics>& demographics, const Catalog& catalog);

struct HistoryEntry {
    ItemId item;
    std::string title;
    std::string category;
    double rating = 0.0;
};

struct HistoryPage {
    UserId user;
    std::size_t page = 1;
    std::size_t page_size = 5;
    std::size_t total = 0;
    std::size_t first_position = 0;  // 1-based, 0 when the page is empty
    std::size_t last_position = 0;
    std::vector<HistoryEntry> items;  // chronological within the page
    bool exhausted = false;
};

/// Page `page` counting backwards from the most recent item.
HistoryPage history_page(const BehaviorSequence& sequence, std::size_t page, std::size_t page_size,
                         const Catalog& catalog);

struct ToolboxConfig {
    std::size_t history_page_size = 5;
    std::size_t item_neighbors = 5;
    std::size_t similar_users = 5;
    double alpha = 0.5;
    std::size_t kg_two_hop = 2;
    std::size_t kg_three_hop = 3;
};

/// Per-episode view: which user and split the tools serve.
struct ToolContext {
    std::optional<UserId> user;
    SplitRole role = SplitRole::test;
    std::optional<ItemId> held_out;
    std::uint64_t seed = 0;
};

void to_json(json& j, const ToolContext& c);
void from_json(const json& j, ToolContext& c);

/// Immutable indices shared by every tool.
struct ToolIndices {
    Catalog catalog;
    SequenceMap sequences;  // full positive sequences; tools cut the training prefix per role
    ItemRelationGraph item_graph;
    KnowledgeGraph knowledge;
    ProfileStore profiles;
    SimilarityIndex similarity;
    std::map<std::string, std::string> content_hashes;
};

class Toolbox {
public:
    Toolbox(std::shared_ptr<const ToolIndices> indices, ToolboxConfig config = {});

    const ToolRegistry& registry() const noexcept { return registry_; }
    const ToolboxConfig& config() const noexcept { return config_; }
    const ToolIndices& indices() const noexcept { return *indices_; }

    /// Never throws: unknown tools, bad arguments and lookup failures become
    /// ok=false observations.
    Observation dispatch(const ToolCall& call, const ToolContext& context = {}) const noexcept;

    Observation user_profile(const UserId& user) const;
    Observation user_history(const UserId& user, std::size_t page, std::size_t page_size,
                             SplitRole role = SplitRole::test) const;
    Observation item_info(const ItemId& item, std::size_t k) const;
    Observation similar_users(const UserId& user, std::size_t k) const;
    Observation kg_search(const UserId& user, std::size_t k1, std::size_t k2, std::uint64_t seed,
                          const std::set<ItemId>& exclude_items = {}) const;

    /// Training prefix served to the policy for `user` under `role`.
    BehaviorSequence training_view(const UserId& user, SplitRole role) const;
    bool knows_user(const UserId& user) const;

private:
    std::shared_ptr<const ToolIndices> indices_;
    ToolboxConfig config_;
    ToolRegistry registry_;
};

/// Identifier of `item` or its title; used in prompts.
std::string item_title(const Catalog& catalog, const ItemId& item);

}  // namespace agentrec
