#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "agentrec/common.hpp"
#include "agentrec/corpus.hpp"

namespace agentrec {

class GraphError : public Error {
public:
    using Error::Error;
};

enum class RelationType : std::uint8_t { also_bought, also_viewed, same_category, same_brand };

inline constexpr std::array<RelationType, 4> kAllRelations = {
    RelationType::also_bought, RelationType::also_viewed, RelationType::same_category,
    RelationType::same_brand};

constexpr int relation_weight(RelationType r) noexcept {
    switch (r) {
        case RelationType::also_bought: return 3;
        case RelationType::also_viewed: return 2;
        case RelationType::same_category: return 1;
        case RelationType::same_brand: return 1;
    }
    return 0;
}

std::string_view relation_name(RelationType r);
/// Human-readable phrase used in tool payloads.
std::string_view relation_label(RelationType r);

/// Small bitset over the four relation types.
class RelationSet {
public:
    constexpr RelationSet() = default;
    constexpr RelationSet(std::initializer_list<RelationType> rs) {
        for (auto r : rs) insert(r);
    }

    constexpr void insert(RelationType r) noexcept { bits_ |= bit(r); }
    constexpr bool contains(RelationType r) const noexcept { return (bits_ & bit(r)) != 0; }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr RelationSet operator|(RelationSet o) const noexcept {
        RelationSet s;
        s.bits_ = bits_ | o.bits_;
        return s;
    }

    /// Sum of relation weights.
    constexpr int score() const noexcept {
        int s = 0;
        for (auto r : kAllRelations) {
            if (contains(r)) s += relation_weight(r);
        }
        return s;
    }

    std::vector<RelationType> types() const;
    std::uint8_t bits() const noexcept { return bits_; }
    static RelationSet from_bits(std::uint8_t b) {
        RelationSet s;
        s.bits_ = b & 0x0f;
        return s;
    }

    friend constexpr bool operator==(RelationSet, RelationSet) = default;

private:
    static constexpr std::uint8_t bit(RelationType r) noexcept {
        return static_cast<std::uint8_t>(1u << static_cast<unsigned>(r));
    }
    std::uint8_t bits_ = 0;
};

struct RelatedItem {
    ItemId item;
    int score = 0;
    RelationSet relations;

    friend bool operator==(const RelatedItem&, const RelatedItem&) = default;
};

struct CooccurrenceOptions {
    bool enabled = false;
    std::size_t window = 10;
};

/// Item-item relations. also_bought/also_viewed come from explicit links
/// (symmetrized) and optional co-occurrence; same_category/same_brand are
/// derived on query from shared attributes.
class ItemRelationGraph {
public:
    static ItemRelationGraph build(const Catalog& catalog, const SequenceMap& sequences = {},
                                   CooccurrenceOptions cooccurrence = {});

    bool contains(const ItemId& item) const { return attributes_.contains(item); }
    const std::vector<ItemId>& items() const noexcept { return items_; }

    RelationSet relations(const ItemId& i, const ItemId& j) const;
    int score(const ItemId& i, const ItemId& j) const { return relations(i, j).score(); }

    /// Every item with a non-empty relation to `i`, ordered by score
    /// descending then item id ascending.
    std::vector<RelatedItem> neighbors(const ItemId& i) const;
    std::vector<RelatedItem> related_items(const ItemId& i, std::size_t k) const;

    std::size_t dangling_links() const noexcept { return dangling_; }

    json to_json() const;
    static ItemRelationGraph from_json(const json& j);

private:
    struct Attributes {
        std::vector<std::string> categories;  // sorted
        std::string brand;
    };
    void require(const ItemId& i) const;
    void index_attributes();

    std::vector<ItemId> items_;
    std::unordered_map<ItemId, Attributes> attributes_;
    std::unordered_map<ItemId, std::map<ItemId, RelationSet>> links_;
    std::map<std::string, std::vector<ItemId>> by_category_;
    std::map<std::string, std::vector<ItemId>> by_brand_;
    std::size_t dangling_ = 0;
};

ItemRelationGraph build_item_relation_graph(const Catalog& catalog, const SequenceMap& sequences = {},
                                            CooccurrenceOptions cooccurrence = {});
int item_score(const ItemRelationGraph& g, const ItemId& i, const ItemId& j);
std::vector<RelatedItem> related_items(const ItemRelationGraph& g, const ItemId& i, std::size_t k);

enum class NodeKind : std::uint8_t { user, item, attribute };

struct KgNode {
    NodeKind kind = NodeKind::user;
    std::string id;

    std::string str() const;
    static KgNode parse(std::string_view s);
    friend auto operator<=>(const KgNode&, const KgNode&) = default;
};

enum class KgEdgeType : std::uint8_t { buy, bought_by, also_bought, has_demographic, demographic_of };
std::string_view edge_name(KgEdgeType t);

struct KgEdge {
    KgEdgeType type;
    KgNode to;
    friend auto operator<=>(const KgEdge&, const KgEdge&) = default;
};

/// Heterogeneous user/item/attribute graph.
class KnowledgeGraph {
public:
    /// `sequences` must be the training view; held-out items never enter the graph.
    static KnowledgeGraph build(const SequenceMap& sequences, const DemographicsMap& demographics,
                                const Catalog& catalog);

    bool has_node(const KgNode& n) const { return adjacency_.contains(n); }
    bool has_user(const UserId& u) const { return has_node({NodeKind::user, u.str()}); }
    bool has_edge(const KgNode& from, KgEdgeType type, const KgNode& to) const;
    bool shares_demographics(const UserId& u, const UserId& v) const;

    const std::vector<KgEdge>& out_edges(const KgNode& n) const;
    std::size_t node_count() const noexcept { return adjacency_.size(); }
    std::size_t edge_count() const noexcept;

    json to_json() const;
    static KnowledgeGraph from_json(const json& j);

private:
    void add_node(const KgNode& n) { adjacency_[n]; }
    void add_edge(const KgNode& from, KgEdgeType type, const KgNode& to);
    void finalize();

    std::map<KgNode, std::vector<KgEdge>> adjacency_;
};

struct KgPath {
    std::vector<KgNode> nodes;
    std::vector<KgEdgeType> edges;
    UserId terminal_user;

    std::size_t hops() const noexcept { return edges.size(); }
    friend bool operator==(const KgPath&, const KgPath&) = default;
};

struct KgEvidence {
    std::vector<KgPath> paths;
    std::vector<std::string> explanations;  // parallel to paths
    std::vector<UserId> terminal_users;     // distinct, in path order
};

struct KgSampleOptions {
    std::size_t k1 = 2;  // two-hop paths
    std::size_t k2 = 3;  // three-hop paths
    std::uint64_t seed = 0;
    std::set<ItemId> exclude_items;
    const Catalog* catalog = nullptr;  // for titles in explanations
    std::size_t enumeration_cap = 10'000;
};

/// Two-hop (u-buy-i-bought_by-v, u-has_demographic-a-demographic_of-v) or
/// three-hop (u-buy-i-also_bought-i'-bought_by-v) paths from `user`, in a
/// deterministic order, at most `cap` of them.
std::vector<KgPath> enumerate_kg_paths(const KnowledgeGraph& kg, const UserId& user,
                                       std::size_t hops, const std::set<ItemId>& exclude_items = {},
                                       std::size_t cap = 10'000);

KgEvidence sample_kg_evidence(const KnowledgeGraph& kg, const UserId& user,
                              const KgSampleOptions& options);

std::string explain_path(const KgPath& path, const Catalog* catalog);

struct GraphSnapshot {
    ItemRelationGraph items;
    KnowledgeGraph knowledge;
    std::string content_hash;
};

inline constexpr int kGraphSnapshotVersion = 1;

void save_graph_snapshot(const std::string& path, const ItemRelationGraph& items,
                         const KnowledgeGraph& knowledge);
/// Throws GraphError on version mismatch or content-hash mismatch.
GraphSnapshot load_graph_snapshot(const std::string& path);

}  // namespace agentrec
