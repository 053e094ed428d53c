#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "agentrec/common.hpp"
#include "agentrec/http_retry.hpp"

namespace agentrec {

class RetrievalError : public Error {
public:
    using Error::Error;
};

/// |I_u ∩ I_v| / sqrt(|I_u| |I_v|). Inputs are treated as sets.
double sparse_similarity(std::span<const ItemId> items_u, std::span<const ItemId> items_v);

/// Cosine of two vectors of equal dimension and non-zero norm.
double dense_similarity(std::span<const double> e_u, std::span<const double> e_v);

/// alpha * sparse + (1 - alpha) * dense, alpha in [0, 1].
double hybrid_similarity(double sparse, double dense, double alpha);

struct ProfileEmbedding {
    UserId user;
    std::vector<double> vector;
    std::string provider_tag;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string tag() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

/// Signed feature hashing of character trigrams, L2-normalized.
/// Deterministic and offline; the default provider for tests and CI.
class HashingEmbedder final : public EmbeddingProvider {
public:
    explicit HashingEmbedder(std::size_t dimension = 64, std::uint64_t seed = 0);

    std::string tag() const override;
    std::size_t dimension() const override { return dimension_; }
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

struct RemoteEmbedderConfig {
    std::string base_url = "http://127.0.0.1:8081";
    std::string path = "/embeddings";
    std::string model;  // tag component only
    std::size_t dimension = 0;  // 0: take it from the first response
    std::size_t batch_size = 32;
    std::size_t max_in_flight = 4;
    std::string auth_env = "AGENTREC_EMBED_TOKEN";
    RetryPolicy retry;
    std::chrono::milliseconds timeout{30'000};
};

/// Calls an embeddings endpoint: POST {"texts": [...]} -> {"vectors": [[...], ...]}.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    explicit RemoteEmbedder(RemoteEmbedderConfig config);
    ~RemoteEmbedder() override;

    std::string tag() const override;
    std::size_t dimension() const override;
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

private:
    std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts);

    RemoteEmbedderConfig config_;
    std::counting_semaphore<> in_flight_;
    mutable std::mutex mu_;
    std::size_t dimension_ = 0;
};

/// Persistent (provider tag, text hash) -> vector map, stored as JSON lines.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    EmbeddingCache(EmbeddingCache&& other) noexcept : entries_(std::move(other.entries_)) {}
    EmbeddingCache& operator=(EmbeddingCache&& other) noexcept {
        entries_ = std::move(other.entries_);
        return *this;
    }

    static EmbeddingCache load(const std::string& path);  // missing file -> empty cache
    void save(const std::string& path) const;

    const std::vector<double>* find(const std::string& provider_tag, const std::string& text) const;
    void put(const std::string& provider_tag, const std::string& text, std::vector<double> vector);
    std::size_t size() const;

private:
    static std::string key(const std::string& provider_tag, const std::string& text);

    mutable std::mutex mu_;
    std::map<std::string, std::vector<double>> entries_;
};

/// Serves cache hits locally and forwards misses to the wrapped provider.
class CachedEmbedder final : public EmbeddingProvider {
public:
    CachedEmbedder(EmbeddingProvider& inner, EmbeddingCache& cache) : inner_(inner), cache_(cache) {}

    std::string tag() const override { return inner_.tag(); }
    std::size_t dimension() const override { return inner_.dimension(); }
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

    std::size_t misses() const noexcept { return misses_; }

private:
    EmbeddingProvider& inner_;
    EmbeddingCache& cache_;
    std::size_t misses_ = 0;
};

ProfileEmbedding embed_profile(EmbeddingProvider& provider, const UserId& user,
                               const std::string& profile_text);

struct HybridConfig {
    double alpha = 0.5;
    std::size_t top_k = 5;

    void validate() const;
};

struct ScoredUser {
    UserId user;
    double score = 0.0;
};

/// All-pairs user similarity over training item sets and profile embeddings.
class SimilarityIndex {
public:
    SimilarityIndex() = default;
    SimilarityIndex(std::map<UserId, std::vector<ItemId>> item_sets,
                    std::map<UserId, ProfileEmbedding> embeddings);

    bool contains(const UserId& u) const { return members_.contains(u); }
    std::size_t size() const noexcept { return members_.size(); }

    double sparse(const UserId& u, const UserId& v) const;
    double dense(const UserId& u, const UserId& v) const;
    double hybrid(const UserId& u, const UserId& v, double alpha) const;

    /// Other users ranked by hybrid score descending, ties by ascending id.
    std::vector<ScoredUser> top_similar_users(const UserId& u, std::size_t k, double alpha) const;

private:
    struct Member {
        std::vector<ItemId> items;  // sorted, distinct
        std::vector<double> embedding;
    };
    const Member& member(const UserId& u) const;

    std::map<UserId, Member> members_;
};

}  // namespace agentrec
