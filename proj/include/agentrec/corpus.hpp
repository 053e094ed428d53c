#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agentrec/common.hpp"

namespace agentrec {

class CorpusError : public Error {
public:
    using Error::Error;
};

enum class DatasetFormat {
    movielens,  // "::"-separated ratings.dat + movies.dat (+ optional users.dat)
    amazon,     // JSON-lines reviews + JSON-lines item metadata
};

DatasetFormat parse_format(std::string_view tag);
std::string_view format_name(DatasetFormat f);

struct RatingScale {
    double min = 1.0;
    double max = 5.0;
};

struct Interaction {
    UserId user;
    ItemId item;
    double rating = 0.0;
    std::int64_t timestamp = 0;
};

struct ItemMeta {
    ItemId id;
    std::string title;
    std::vector<std::string> categories;  // genres for MovieLens, leaf categories for Amazon
    std::string brand;
    std::string price;
    std::string description;
    std::string year;
    std::vector<ItemId> also_bought;
    std::vector<ItemId> also_viewed;

    /// Labelled non-empty attributes in display order.
    std::vector<std::pair<std::string, std::string>> attributes() const;
    std::string category_text() const;
};

struct Demographics {
    std::string gender;
    std::string age;
    std::string occupation;

    std::string render() const;
    /// Equality key for demographic sharing.
    std::string group_key() const;
};

using Catalog = std::map<ItemId, ItemMeta>;
using DemographicsMap = std::map<UserId, Demographics>;

struct DatasetPaths {
    std::string interactions;
    std::string items;  // optional
    std::string users;  // optional, MovieLens only
};

struct LoadedDataset {
    DatasetFormat format = DatasetFormat::movielens;
    std::vector<Interaction> interactions;
    Catalog catalog;
    DemographicsMap demographics;
    std::size_t malformed_lines = 0;
};

/// Parses a dataset. Malformed lines are skipped and counted; an empty
/// result raises CorpusError("zero valid records").
LoadedDataset load_interactions(DatasetFormat format, const DatasetPaths& paths,
                                RatingScale scale = {});

struct SequenceEntry {
    ItemId item;
    double rating = 0.0;
    std::int64_t timestamp = 0;

    friend bool operator==(const SequenceEntry&, const SequenceEntry&) = default;
};

/// Chronological positive interactions of one user.
struct BehaviorSequence {
    UserId user;
    std::vector<SequenceEntry> items;

    std::vector<ItemId> item_ids() const;
    friend bool operator==(const BehaviorSequence&, const BehaviorSequence&) = default;
};

using SequenceMap = std::map<UserId, BehaviorSequence>;

/// Keeps ratings strictly above `positive_threshold`, sorted by timestamp
/// (stable, so ties keep input order). Users without positives are omitted.
SequenceMap build_sequences(std::span<const Interaction> interactions,
                            double positive_threshold = 3.0);

enum class SplitRole { validation, test };
std::string_view role_name(SplitRole r);
SplitRole parse_role(std::string_view s);

struct SplitCase {
    std::string case_id;
    UserId user;
    BehaviorSequence train_prefix;
    ItemId held_out;
    SplitRole role = SplitRole::test;
};

struct SplitResult {
    std::vector<SplitCase> cases;  // per user: validation then test
    std::vector<UserId> skipped;   // fewer than three positives
};

SplitResult leave_one_out_split(const SequenceMap& sequences);

/// Sequence with the last `n` items removed; what every offline index is built from.
BehaviorSequence drop_last(const BehaviorSequence& seq, std::size_t n);

struct CandidateSet {
    std::string case_id;
    UserId user;
    SplitRole role = SplitRole::test;
    std::vector<ItemId> candidates;
    std::size_t positive_index = 0;
    std::uint64_t seed = 0;

    const ItemId& positive() const { return candidates.at(positive_index); }
    friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

void to_json(json& j, const CandidateSet& c);
void from_json(const json& j, CandidateSet& c);

inline constexpr std::size_t kDefaultNegatives = 9;

/// Draws `n_neg` negatives uniformly from `item_universe` minus the user's
/// positives and shuffles them with the held-out item. Deterministic in `seed`.
CandidateSet sample_candidates(const SplitCase& split_case, const BehaviorSequence& full_history,
                               std::span<const ItemId> item_universe,
                               std::size_t n_neg = kDefaultNegatives, std::uint64_t seed = 0);

struct DatasetStats {
    std::size_t n_users = 0;
    std::size_t n_items = 0;
    std::size_t n_interactions = 0;
    double inters_per_user = 0.0;
    double inters_per_item = 0.0;
    double sparsity = 0.0;
};

void to_json(json& j, const DatasetStats& s);

DatasetStats dataset_stats(std::span<const Interaction> interactions);

/// Distinct items of the interactions, sorted.
std::vector<ItemId> item_universe(std::span<const Interaction> interactions);

/// Flattens sequences back to interactions (user order, then chronological).
std::vector<Interaction> flatten(const SequenceMap& sequences);

}  // namespace agentrec
