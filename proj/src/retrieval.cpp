#include "agentrec/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace agentrec {

namespace {
std::vector<ItemId> as_set(std::span<const ItemId> items) {
    std::vector<ItemId> s(items.begin(), items.end());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

double sparse_sorted(const std::vector<ItemId>& a, const std::vector<ItemId>& b) {
    if (a.empty() || b.empty()) {
        throw RetrievalError("sparse similarity is undefined for an empty item set");
    }
    std::size_t shared = 0;
    for (auto i = a.begin(), j = b.begin(); i != a.end() && j != b.end();) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++shared;
            ++i;
            ++j;
        }
    }
    return static_cast<double>(shared) /
           std::sqrt(static_cast<double>(a.size()) * static_cast<double>(b.size()));
}
}  // namespace

double sparse_similarity(std::span<const ItemId> items_u, std::span<const ItemId> items_v) {
    return sparse_sorted(as_set(items_u), as_set(items_v));
}

double dense_similarity(std::span<const double> e_u, std::span<const double> e_v) {
    if (e_u.size() != e_v.size()) {
        throw RetrievalError(fmt::format("embedding dimension mismatch ({} vs {})", e_u.size(), e_v.size()));
    }
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < e_u.size(); ++i) {
        dot += e_u[i] * e_v[i];
        nu += e_u[i] * e_u[i];
        nv += e_v[i] * e_v[i];
    }
    if (nu == 0.0 || nv == 0.0) {
        throw RetrievalError("cosine similarity of a zero vector");
    }
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

double hybrid_similarity(double sparse, double dense, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw RetrievalError(fmt::format("alpha must lie in [0, 1] (got {})", alpha));
    }
    return alpha * sparse + (1.0 - alpha) * dense;
}

// ---------------------------------------------------------------------------

HashingEmbedder::HashingEmbedder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
    if (dimension_ == 0) throw RetrievalError("embedding dimension must be positive");
}

std::string HashingEmbedder::tag() const {
    return fmt::format("hashing-trigram-d{}-s{}", dimension_, seed_);
}

std::vector<std::vector<double>> HashingEmbedder::embed(std::span<const std::string> texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    const auto salt = fnv1a(std::to_string(seed_));
    for (const auto& text : texts) {
        if (trim(text).empty()) throw RetrievalError("cannot embed empty text");
        std::string padded = "^";
        for (char c : text) padded += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        padded += '$';
        std::vector<double> v(dimension_, 0.0);
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
            auto h = fnv1a(std::string_view(padded).substr(i, 3), salt);
            v[h % dimension_] += (h >> 63) ? -1.0 : 1.0;
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm == 0.0) {
            // every trigram cancelled out; fall back to a single hashed coordinate
            v[fnv1a(padded, salt) % dimension_] = 1.0;
            norm = 1.0;
        }
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string EmbeddingCache::key(const std::string& provider_tag, const std::string& text) {
    return provider_tag + "#" + hex64(fnv1a(text));
}

EmbeddingCache EmbeddingCache::load(const std::string& path) {
    EmbeddingCache cache;
    std::ifstream probe(path);
    if (!probe) return cache;
    for (const auto& rec : read_jsonl(path)) {
        cache.entries_[rec.at("provider").get<std::string>() + "#" + rec.at("key").get<std::string>()] =
            rec.at("vector").get<std::vector<double>>();
    }
    return cache;
}

void EmbeddingCache::save(const std::string& path) const {
    std::lock_guard lock(mu_);
    std::vector<json> records;
    for (const auto& [k, v] : entries_) {
        auto hash_pos = k.rfind('#');
        records.push_back({{"provider", k.substr(0, hash_pos)}, {"key", k.substr(hash_pos + 1)}, {"vector", v}});
    }
    write_jsonl(path, records);
}

const std::vector<double>* EmbeddingCache::find(const std::string& provider_tag, const std::string& text) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key(provider_tag, text));
    return it == entries_.end() ? nullptr : &it->second;
}

void EmbeddingCache::put(const std::string& provider_tag, const std::string& text, std::vector<double> vector) {
    std::lock_guard lock(mu_);
    entries_[key(provider_tag, text)] = std::move(vector);
}

std::size_t EmbeddingCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::vector<std::vector<double>> CachedEmbedder::embed(std::span<const std::string> texts) {
    std::vector<std::vector<double>> out(texts.size());
    // Each distinct missing text goes to the provider once, even if repeated in the batch.
    std::vector<std::string> missing;
    std::map<std::string, std::vector<std::size_t>> missing_at;
    const auto tag = inner_.tag();
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (const auto* hit = cache_.find(tag, texts[i])) {
            out[i] = *hit;
            continue;
        }
        auto& slots = missing_at[texts[i]];
        if (slots.empty()) missing.push_back(texts[i]);
        slots.push_back(i);
    }
    if (!missing.empty()) {
        auto fresh = inner_.embed(missing);
        if (fresh.size() != missing.size()) throw RetrievalError("embedding provider returned the wrong number of vectors");
        misses_ += missing.size();
        for (std::size_t k = 0; k < missing.size(); ++k) {
            for (auto i : missing_at[missing[k]]) out[i] = fresh[k];
            cache_.put(tag, missing[k], std::move(fresh[k]));
        }
    }
    return out;
}

ProfileEmbedding embed_profile(EmbeddingProvider& provider, const UserId& user, const std::string& profile_text) {
    if (trim(profile_text).empty()) throw RetrievalError("cannot embed an empty profile");
    std::vector<std::string> texts{profile_text};
    auto vectors = provider.embed(texts);
    if (vectors.size() != 1) throw RetrievalError("embedding provider returned the wrong number of vectors");
    for (double x : vectors[0]) {
        if (!std::isfinite(x)) throw RetrievalError("embedding provider returned a non-finite value");
    }
    return {user, std::move(vectors[0]), provider.tag()};
}

// ---------------------------------------------------------------------------

void HybridConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw RetrievalError(fmt::format("alpha must lie in [0, 1] (got {})", alpha));
    }
    if (top_k == 0) throw RetrievalError("top_k must be >= 1");
}

SimilarityIndex::SimilarityIndex(std::map<UserId, std::vector<ItemId>> item_sets,
                                 std::map<UserId, ProfileEmbedding> embeddings) {
    std::size_t dim = 0;
    std::string tag;
    for (auto& [user, items] : item_sets) {
        auto it = embeddings.find(user);
        if (items.empty() || it == embeddings.end()) continue;
        auto& e = it->second;
        if (members_.empty()) {
            dim = e.vector.size();
            tag = e.provider_tag;
        } else if (e.vector.size() != dim || e.provider_tag != tag) {
            throw RetrievalError(fmt::format("embedding for user {} does not match the index ({} / {})",
                                             user.str(), e.provider_tag, e.vector.size()));
        }
        members_.emplace(user, Member{as_set(items), std::move(e.vector)});
    }
}

const SimilarityIndex::Member& SimilarityIndex::member(const UserId& u) const {
    auto it = members_.find(u);
    if (it == members_.end()) throw RetrievalError("unknown user " + u.str());
    return it->second;
}

double SimilarityIndex::sparse(const UserId& u, const UserId& v) const {
    return sparse_sorted(member(u).items, member(v).items);
}

double SimilarityIndex::dense(const UserId& u, const UserId& v) const {
    return dense_similarity(member(u).embedding, member(v).embedding);
}

double SimilarityIndex::hybrid(const UserId& u, const UserId& v, double alpha) const {
    return hybrid_similarity(sparse(u, v), dense(u, v), alpha);
}

std::vector<ScoredUser> SimilarityIndex::top_similar_users(const UserId& u, std::size_t k, double alpha) const {
    if (k == 0) throw RetrievalError("k must be >= 1");
    member(u);
    std::vector<ScoredUser> scored;
    scored.reserve(members_.size());
    for (const auto& [v, _] : members_) {
        if (v == u) continue;
        scored.push_back({v, hybrid(u, v, alpha)});
    }
    // members_ iterates in ascending id order, so a stable sort keeps id ties ascending
    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredUser& a, const ScoredUser& b) { return a.score > b.score; });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

}  // namespace agentrec
