#include "agentrec/graphs.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace agentrec {

std::string_view relation_name(RelationType r) {
    switch (r) {
        case RelationType::also_bought: return "also_bought";
        case RelationType::also_viewed: return "also_viewed";
        case RelationType::same_category: return "same_category";
        case RelationType::same_brand: return "same_brand";
    }
    return "?";
}

std::string_view relation_label(RelationType r) {
    switch (r) {
        case RelationType::also_bought: return "often bought together";
        case RelationType::also_viewed: return "often viewed together";
        case RelationType::same_category: return "same category";
        case RelationType::same_brand: return "same brand";
    }
    return "?";
}

std::vector<RelationType> RelationSet::types() const {
    std::vector<RelationType> out;
    for (auto r : kAllRelations) {
        if (contains(r)) out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// ItemRelationGraph

ItemRelationGraph ItemRelationGraph::build(const Catalog& catalog, const SequenceMap& sequences,
                                           CooccurrenceOptions cooccurrence) {
    ItemRelationGraph g;
    for (const auto& [id, meta] : catalog) {
        g.items_.push_back(id);
        Attributes a{meta.categories, meta.brand};
        std::sort(a.categories.begin(), a.categories.end());
        a.categories.erase(std::unique(a.categories.begin(), a.categories.end()), a.categories.end());
        g.attributes_.emplace(id, std::move(a));
    }

    auto link = [&g](const ItemId& i, const ItemId& j, RelationType r) {
        if (i == j) return;
        if (!g.contains(i) || !g.contains(j)) {
            ++g.dangling_;
            return;
        }
        g.links_[i][j].insert(r);
        g.links_[j][i].insert(r);
    };

    for (const auto& [id, meta] : catalog) {
        for (const auto& j : meta.also_bought) link(id, j, RelationType::also_bought);
        for (const auto& j : meta.also_viewed) link(id, j, RelationType::also_viewed);
    }
    if (cooccurrence.enabled && cooccurrence.window > 1) {
        for (const auto& [user, seq] : sequences) {
            const auto& xs = seq.items;
            for (std::size_t p = 0; p < xs.size(); ++p) {
                for (std::size_t q = p + 1; q < xs.size() && q - p < cooccurrence.window; ++q) {
                    link(xs[p].item, xs[q].item, RelationType::also_viewed);
                }
            }
        }
    }
    if (g.dangling_ > 0) {
        spdlog::warn("item relation graph: skipped {} links to items without metadata", g.dangling_);
    }
    g.index_attributes();
    return g;
}

void ItemRelationGraph::index_attributes() {
    by_category_.clear();
    by_brand_.clear();
    for (const auto& id : items_) {
        const auto& a = attributes_.at(id);
        for (const auto& c : a.categories) by_category_[c].push_back(id);
        if (!a.brand.empty()) by_brand_[a.brand].push_back(id);
    }
}

void ItemRelationGraph::require(const ItemId& i) const {
    if (!contains(i)) {
        throw GraphError("unknown item " + i.str());
    }
}

RelationSet ItemRelationGraph::relations(const ItemId& i, const ItemId& j) const {
    require(i);
    require(j);
    RelationSet rs;
    if (i == j) return rs;
    if (auto it = links_.find(i); it != links_.end()) {
        if (auto jt = it->second.find(j); jt != it->second.end()) rs = jt->second;
    }
    const auto& a = attributes_.at(i);
    const auto& b = attributes_.at(j);
    std::vector<std::string> shared;
    std::set_intersection(a.categories.begin(), a.categories.end(), b.categories.begin(),
                          b.categories.end(), std::back_inserter(shared));
    if (!shared.empty()) rs.insert(RelationType::same_category);
    if (!a.brand.empty() && a.brand == b.brand) rs.insert(RelationType::same_brand);
    return rs;
}

std::vector<RelatedItem> ItemRelationGraph::neighbors(const ItemId& i) const {
    require(i);
    std::set<ItemId> candidates;
    if (auto it = links_.find(i); it != links_.end()) {
        for (const auto& [j, _] : it->second) candidates.insert(j);
    }
    const auto& a = attributes_.at(i);
    for (const auto& c : a.categories) {
        const auto& members = by_category_.at(c);
        candidates.insert(members.begin(), members.end());
    }
    if (!a.brand.empty()) {
        const auto& members = by_brand_.at(a.brand);
        candidates.insert(members.begin(), members.end());
    }
    candidates.erase(i);

    std::vector<RelatedItem> out;
    out.reserve(candidates.size());
    for (const auto& j : candidates) {
        auto rs = relations(i, j);
        if (!rs.empty()) out.push_back({j, rs.score(), rs});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const RelatedItem& x, const RelatedItem& y) { return x.score > y.score; });
    return out;
}

std::vector<RelatedItem> ItemRelationGraph::related_items(const ItemId& i, std::size_t k) const {
    if (k == 0) {
        throw GraphError("related_items: K must be >= 1");
    }
    auto all = neighbors(i);
    if (all.size() > k) all.resize(k);
    return all;
}

json ItemRelationGraph::to_json() const {
    json items = json::array();
    for (const auto& id : items_) {
        const auto& a = attributes_.at(id);
        items.push_back({{"id", id}, {"categories", a.categories}, {"brand", a.brand}});
    }
    json links = json::array();
    std::map<ItemId, std::map<ItemId, RelationSet>> ordered(links_.begin(), links_.end());
    for (const auto& [i, row] : ordered) {
        for (const auto& [j, rs] : row) {
            if (i < j) links.push_back(json::array({i, j, rs.bits()}));
        }
    }
    return {{"items", items}, {"links", links}, {"dangling", dangling_}};
}

ItemRelationGraph ItemRelationGraph::from_json(const json& j) {
    ItemRelationGraph g;
    for (const auto& it : j.at("items")) {
        auto id = it.at("id").get<ItemId>();
        g.items_.push_back(id);
        g.attributes_.emplace(id, Attributes{it.at("categories").get<std::vector<std::string>>(),
                                             it.at("brand").get<std::string>()});
    }
    for (const auto& l : j.at("links")) {
        auto a = l.at(0).get<ItemId>();
        auto b = l.at(1).get<ItemId>();
        auto rs = RelationSet::from_bits(l.at(2).get<std::uint8_t>());
        g.links_[a][b] = rs;
        g.links_[b][a] = rs;
    }
    g.dangling_ = j.value("dangling", std::size_t{0});
    g.index_attributes();
    return g;
}

ItemRelationGraph build_item_relation_graph(const Catalog& catalog, const SequenceMap& sequences,
                                            CooccurrenceOptions cooccurrence) {
    return ItemRelationGraph::build(catalog, sequences, cooccurrence);
}

int item_score(const ItemRelationGraph& g, const ItemId& i, const ItemId& j) { return g.score(i, j); }

std::vector<RelatedItem> related_items(const ItemRelationGraph& g, const ItemId& i, std::size_t k) {
    return g.related_items(i, k);
}

// ---------------------------------------------------------------------------
// KnowledgeGraph

std::string KgNode::str() const {
    switch (kind) {
        case NodeKind::user: return "user:" + id;
        case NodeKind::item: return "item:" + id;
        case NodeKind::attribute: return "attr:" + id;
    }
    return id;
}

KgNode KgNode::parse(std::string_view s) {
    auto colon = s.find(':');
    if (colon == std::string_view::npos) throw GraphError(fmt::format("bad node '{}'", s));
    auto kind = s.substr(0, colon);
    std::string id(s.substr(colon + 1));
    if (kind == "user") return {NodeKind::user, id};
    if (kind == "item") return {NodeKind::item, id};
    if (kind == "attr") return {NodeKind::attribute, id};
    throw GraphError(fmt::format("bad node kind in '{}'", s));
}

std::string_view edge_name(KgEdgeType t) {
    switch (t) {
        case KgEdgeType::buy: return "buy";
        case KgEdgeType::bought_by: return "bought_by";
        case KgEdgeType::also_bought: return "also_bought";
        case KgEdgeType::has_demographic: return "has_demographic";
        case KgEdgeType::demographic_of: return "demographic_of";
    }
    return "?";
}

namespace {
KgEdgeType parse_edge(std::string_view s) {
    for (auto t : {KgEdgeType::buy, KgEdgeType::bought_by, KgEdgeType::also_bought,
                   KgEdgeType::has_demographic, KgEdgeType::demographic_of}) {
        if (edge_name(t) == s) return t;
    }
    throw GraphError(fmt::format("bad edge type '{}'", s));
}

KgNode user_node(const UserId& u) { return {NodeKind::user, u.str()}; }
KgNode item_node(const ItemId& i) { return {NodeKind::item, i.str()}; }

const std::vector<KgEdge> kNoEdges;
}  // namespace

void KnowledgeGraph::add_edge(const KgNode& from, KgEdgeType type, const KgNode& to) {
    add_node(from);
    add_node(to);
    adjacency_[from].push_back({type, to});
}

void KnowledgeGraph::finalize() {
    for (auto& [node, edges] : adjacency_) {
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    }
}

KnowledgeGraph KnowledgeGraph::build(const SequenceMap& sequences, const DemographicsMap& demographics,
                                     const Catalog& catalog) {
    KnowledgeGraph kg;
    for (const auto& [user, seq] : sequences) {
        kg.add_node(user_node(user));
        for (const auto& e : seq.items) {
            kg.add_edge(user_node(user), KgEdgeType::buy, item_node(e.item));
            kg.add_edge(item_node(e.item), KgEdgeType::bought_by, user_node(user));
        }
    }
    for (const auto& [id, meta] : catalog) {
        if (!kg.has_node(item_node(id))) continue;
        for (const auto& j : meta.also_bought) {
            if (j == id || !kg.has_node(item_node(j))) continue;
            kg.add_edge(item_node(id), KgEdgeType::also_bought, item_node(j));
            kg.add_edge(item_node(j), KgEdgeType::also_bought, item_node(id));
        }
    }
    for (const auto& [user, demo] : demographics) {
        if (!kg.has_user(user)) continue;
        KgNode attr{NodeKind::attribute, demo.group_key()};
        kg.add_edge(user_node(user), KgEdgeType::has_demographic, attr);
        kg.add_edge(attr, KgEdgeType::demographic_of, user_node(user));
    }
    kg.finalize();
    return kg;
}

bool KnowledgeGraph::has_edge(const KgNode& from, KgEdgeType type, const KgNode& to) const {
    const auto& edges = out_edges(from);
    return std::binary_search(edges.begin(), edges.end(), KgEdge{type, to});
}

bool KnowledgeGraph::shares_demographics(const UserId& u, const UserId& v) const {
    for (const auto& e : out_edges(user_node(u))) {
        if (e.type == KgEdgeType::has_demographic &&
            has_edge(e.to, KgEdgeType::demographic_of, user_node(v))) {
            return true;
        }
    }
    return false;
}

const std::vector<KgEdge>& KnowledgeGraph::out_edges(const KgNode& n) const {
    auto it = adjacency_.find(n);
    return it == adjacency_.end() ? kNoEdges : it->second;
}

std::size_t KnowledgeGraph::edge_count() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, edges] : adjacency_) n += edges.size();
    return n;
}

json KnowledgeGraph::to_json() const {
    json nodes = json::array();
    json edges = json::array();
    for (const auto& [node, out] : adjacency_) {
        nodes.push_back(node.str());
        for (const auto& e : out) edges.push_back(json::array({node.str(), edge_name(e.type), e.to.str()}));
    }
    return {{"nodes", nodes}, {"edges", edges}};
}

KnowledgeGraph KnowledgeGraph::from_json(const json& j) {
    KnowledgeGraph kg;
    for (const auto& n : j.at("nodes")) kg.add_node(KgNode::parse(n.get<std::string>()));
    for (const auto& e : j.at("edges")) {
        auto from = KgNode::parse(e.at(0).get<std::string>());
        auto to = KgNode::parse(e.at(2).get<std::string>());
        if (!kg.has_node(from) || !kg.has_node(to)) {
            throw GraphError("knowledge graph snapshot: edge endpoint missing from node list");
        }
        kg.add_edge(from, parse_edge(e.at(1).get<std::string>()), to);
    }
    kg.finalize();
    return kg;
}

std::vector<KgPath> enumerate_kg_paths(const KnowledgeGraph& kg, const UserId& user, std::size_t hops,
                                       const std::set<ItemId>& exclude_items, std::size_t cap) {
    std::vector<KgPath> out;
    const KgNode start = user_node(user);
    auto excluded = [&](const KgNode& n) {
        return n.kind == NodeKind::item && exclude_items.contains(ItemId(n.id));
    };
    auto full = [&] { return out.size() >= cap; };

    for (const auto& e1 : kg.out_edges(start)) {
        if (full()) break;
        if (excluded(e1.to)) continue;
        if (hops == 2) {
            KgEdgeType back;
            if (e1.type == KgEdgeType::buy) {
                back = KgEdgeType::bought_by;
            } else if (e1.type == KgEdgeType::has_demographic) {
                back = KgEdgeType::demographic_of;
            } else {
                continue;
            }
            for (const auto& e2 : kg.out_edges(e1.to)) {
                if (full()) break;
                if (e2.type != back || e2.to == start || e2.to.kind != NodeKind::user) continue;
                out.push_back({{start, e1.to, e2.to}, {e1.type, e2.type}, UserId(e2.to.id)});
            }
        } else if (hops == 3) {
            if (e1.type != KgEdgeType::buy) continue;
            for (const auto& e2 : kg.out_edges(e1.to)) {
                if (full()) break;
                if (e2.type != KgEdgeType::also_bought || e2.to == e1.to || excluded(e2.to)) continue;
                for (const auto& e3 : kg.out_edges(e2.to)) {
                    if (full()) break;
                    if (e3.type != KgEdgeType::bought_by || e3.to == start) continue;
                    out.push_back({{start, e1.to, e2.to, e3.to},
                                   {e1.type, e2.type, e3.type},
                                   UserId(e3.to.id)});
                }
            }
        } else {
            throw GraphError("enumerate_kg_paths: hops must be 2 or 3");
        }
    }
    return out;
}

namespace {
std::string item_ref(const std::string& id, const Catalog* catalog) {
    if (catalog) {
        auto it = catalog->find(ItemId(id));
        if (it != catalog->end() && !it->second.title.empty()) {
            return fmt::format("item {} (\"{}\")", id, it->second.title);
        }
    }
    return "item " + id;
}

std::string group_text(std::string_view key) {
    auto parts = split(key, "|");
    std::vector<std::string> kept;
    for (auto& p : parts) {
        if (!p.empty()) kept.push_back(p);
    }
    return fmt::format("{}", fmt::join(kept, ", "));
}
}  // namespace

std::string explain_path(const KgPath& path, const Catalog* catalog) {
    const auto& u = path.nodes.front().id;
    const auto& v = path.terminal_user.str();
    if (path.hops() == 2 && path.edges[0] == KgEdgeType::buy) {
        return fmt::format("User {} and user {} both purchased {}, so user {} may share the interests of user {}.",
                           u, v, item_ref(path.nodes[1].id, catalog), v, u);
    }
    if (path.hops() == 2) {
        return fmt::format("User {} and user {} are in the same age, gender and occupation group ({}), so user {} may share the interests of user {}.",
                           u, v, group_text(path.nodes[1].id), v, u);
    }
    return fmt::format("User {} purchased {} and user {} purchased {}; the two items are often bought together, so user {} may share the interests of user {}.",
                       u, item_ref(path.nodes[1].id, catalog), v,
                       item_ref(path.nodes[2].id, catalog), v, u);
}

KgEvidence sample_kg_evidence(const KnowledgeGraph& kg, const UserId& user, const KgSampleOptions& options) {
    if (options.k1 >= options.k2) {
        throw GraphError(fmt::format("knowledge graph sampling requires k1 < k2 (got k1={}, k2={})",
                                     options.k1, options.k2));
    }
    if (!kg.has_user(user)) {
        throw GraphError("unknown user " + user.str());
    }
    KgEvidence ev;
    Rng rng(options.seed);
    for (auto [hops, k] : {std::pair{std::size_t{2}, options.k1}, std::pair{std::size_t{3}, options.k2}}) {
        auto all = enumerate_kg_paths(kg, user, hops, options.exclude_items, options.enumeration_cap);
        for (auto idx : rng.sample_indices(all.size(), k)) {
            ev.paths.push_back(all[idx]);
        }
    }
    for (const auto& p : ev.paths) {
        ev.explanations.push_back(explain_path(p, options.catalog));
        if (std::find(ev.terminal_users.begin(), ev.terminal_users.end(), p.terminal_user) ==
            ev.terminal_users.end()) {
            ev.terminal_users.push_back(p.terminal_user);
        }
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Snapshot

namespace {
constexpr const char* kSnapshotFormat = "agentrec-graphs";
}

void save_graph_snapshot(const std::string& path, const ItemRelationGraph& items,
                         const KnowledgeGraph& knowledge) {
    json payload = {{"item_graph", items.to_json()}, {"knowledge_graph", knowledge.to_json()}};
    json doc = {{"format", kSnapshotFormat},
                {"version", kGraphSnapshotVersion},
                {"content_hash", hex64(fnv1a(payload.dump()))},
                {"payload", payload}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw GraphError("cannot write graph snapshot: " + path);
    out << doc.dump() << '\n';
}

GraphSnapshot load_graph_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GraphError("missing graph snapshot: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || doc.value("format", "") != kSnapshotFormat) {
        throw GraphError("not a graph snapshot: " + path);
    }
    if (doc.value("version", 0) != kGraphSnapshotVersion) {
        throw GraphError(fmt::format("graph snapshot {}: unsupported version {}", path,
                                     doc.value("version", 0)));
    }
    const auto& payload = doc.at("payload");
    auto hash = hex64(fnv1a(payload.dump()));
    if (hash != doc.value("content_hash", "")) {
        throw GraphError("graph snapshot " + path + ": content hash mismatch");
    }
    return {ItemRelationGraph::from_json(payload.at("item_graph")),
            KnowledgeGraph::from_json(payload.at("knowledge_graph")), hash};
}

}  // namespace agentrec
