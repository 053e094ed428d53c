#include "agentrec/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace agentrec {

DatasetFormat parse_format(std::string_view tag) {
    if (tag == "movielens") return DatasetFormat::movielens;
    if (tag == "amazon") return DatasetFormat::amazon;
    throw CorpusError(fmt::format("unknown dataset format '{}' (expected movielens or amazon)", tag));
}

std::string_view format_name(DatasetFormat f) {
    return f == DatasetFormat::movielens ? "movielens" : "amazon";
}

std::vector<std::pair<std::string, std::string>> ItemMeta::attributes() const {
    std::vector<std::pair<std::string, std::string>> out;
    auto add = [&out](const char* key, const std::string& value) {
        if (!value.empty()) out.emplace_back(key, value);
    };
    add("title", title);
    add("category", category_text());
    add("brand", brand);
    add("price", price);
    add("year", year);
    add("description", description);
    return out;
}

std::string ItemMeta::category_text() const {
    std::string out;
    for (const auto& c : categories) {
        if (!out.empty()) out += " | ";
        out += c;
    }
    return out;
}

std::string Demographics::render() const {
    std::vector<std::string> parts;
    for (const auto* p : {&gender, &age, &occupation}) {
        if (!p->empty()) parts.push_back(*p);
    }
    return fmt::format("{}", fmt::join(parts, ", "));
}

std::string Demographics::group_key() const {
    return fmt::format("{}|{}|{}", age, gender, occupation);
}

namespace {

template <typename T>
std::optional<T> parse_number(std::string_view s) {
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::string movielens_age(std::string_view code) {
    static const std::map<std::string, std::string, std::less<>> kAges = {
        {"1", "under 18"}, {"18", "18-24"}, {"25", "25-34"}, {"35", "35-44"},
        {"45", "45-49"},   {"50", "50-55"}, {"56", "56+"}};
    auto it = kAges.find(code);
    return it == kAges.end() ? std::string(code) : it->second;
}

std::string movielens_occupation(std::string_view code) {
    static const std::array<const char*, 21> kOccupations = {
        "other",          "academic/educator", "artist",         "clerical/admin",
        "college/grad student", "customer service", "doctor/health care",
        "executive/managerial", "farmer",     "homemaker",      "K-12 student",
        "lawyer",         "programmer",        "retired",        "sales/marketing",
        "scientist",      "self-employed",     "technician/engineer",
        "tradesman/craftsman", "unemployed",   "writer"};
    auto n = parse_number<int>(code);
    if (n && *n >= 0 && *n < static_cast<int>(kOccupations.size())) return kOccupations[*n];
    return std::string(code);
}

std::string movielens_gender(std::string_view g) {
    if (g == "F") return "female";
    if (g == "M") return "male";
    return std::string(g);
}

void load_movielens(const DatasetPaths& paths, RatingScale scale, LoadedDataset& out) {
    for (const auto& line : read_lines(paths.interactions)) {
        if (trim(line).empty()) continue;
        auto f = split(line, "::");
        std::optional<double> rating;
        std::optional<std::int64_t> ts;
        if (f.size() == 4) {
            rating = parse_number<double>(trim(f[2]));
            ts = parse_number<std::int64_t>(trim(f[3]));
        }
        if (!rating || !ts || *ts < 0 || *rating < scale.min || *rating > scale.max ||
            trim(f[0]).empty() || trim(f[1]).empty()) {
            ++out.malformed_lines;
            continue;
        }
        out.interactions.push_back({UserId(trim(f[0])), ItemId(trim(f[1])), *rating, *ts});
    }
    if (!paths.items.empty()) {
        for (const auto& line : read_lines(paths.items)) {
            auto f = split(line, "::");
            if (f.size() != 3) continue;
            ItemMeta meta;
            meta.id = ItemId(trim(f[0]));
            meta.title = trim(f[1]);
            // "Title (1995)"
            if (meta.title.size() >= 6 && meta.title.back() == ')') {
                auto open = meta.title.rfind('(');
                auto year = std::string_view(meta.title).substr(open + 1, meta.title.size() - open - 2);
                if (open != std::string::npos && year.size() == 4 && parse_number<int>(year)) {
                    meta.year = std::string(year);
                }
            }
            for (auto& g : split(f[2], "|")) {
                if (!trim(g).empty()) meta.categories.push_back(trim(g));
            }
            out.catalog[meta.id] = std::move(meta);
        }
    }
    if (!paths.users.empty()) {
        for (const auto& line : read_lines(paths.users)) {
            auto f = split(line, "::");
            if (f.size() < 4) continue;
            out.demographics[UserId(trim(f[0]))] = {movielens_gender(trim(f[1])),
                                                    movielens_age(trim(f[2])),
                                                    movielens_occupation(trim(f[3]))};
        }
    }
}

std::string json_text(const json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_integer()) return std::to_string(j.get<std::int64_t>());
    if (j.is_number()) return fmt::format("{:.2f}", j.get<double>());
    if (j.is_array()) {
        std::string out;
        for (const auto& e : j) {
            auto s = json_text(e);
            if (s.empty()) continue;
            if (!out.empty()) out += " ";
            out += s;
        }
        return out;
    }
    return {};
}

std::vector<ItemId> id_list(const json& j) {
    std::vector<ItemId> out;
    if (!j.is_array()) return out;
    for (const auto& e : j) {
        if (e.is_string()) out.emplace_back(e.get<std::string>());
    }
    return out;
}

const json* first_of(const json& rec, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        auto it = rec.find(k);
        if (it != rec.end() && !it->is_null()) return &*it;
    }
    return nullptr;
}

void load_amazon(const DatasetPaths& paths, RatingScale scale, LoadedDataset& out) {
    for (const auto& line : read_lines(paths.interactions)) {
        if (trim(line).empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) {
            ++out.malformed_lines;
            continue;
        }
        const json* user = first_of(rec, {"reviewerID", "user_id"});
        const json* item = first_of(rec, {"asin", "parent_asin", "item_id"});
        const json* rating = first_of(rec, {"overall", "rating"});
        const json* ts = first_of(rec, {"unixReviewTime", "timestamp"});
        if (!user || !item || !rating || !ts || !user->is_string() || !item->is_string() ||
            !rating->is_number() || !ts->is_number_integer()) {
            ++out.malformed_lines;
            continue;
        }
        double r = rating->get<double>();
        std::int64_t t = ts->get<std::int64_t>();
        if (r < scale.min || r > scale.max || t < 0) {
            ++out.malformed_lines;
            continue;
        }
        out.interactions.push_back({UserId(user->get<std::string>()),
                                    ItemId(item->get<std::string>()), r, t});
    }
    if (paths.items.empty()) return;
    for (const auto& line : read_lines(paths.items)) {
        if (trim(line).empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("asin")) continue;
        ItemMeta meta;
        meta.id = ItemId(json_text(rec["asin"]));
        if (auto* t = first_of(rec, {"title"})) meta.title = json_text(*t);
        if (auto* b = first_of(rec, {"brand"})) meta.brand = json_text(*b);
        if (auto* p = first_of(rec, {"price"})) meta.price = json_text(*p);
        if (auto* d = first_of(rec, {"description"})) meta.description = json_text(*d);
        // 2014 layout: [["CDs & Vinyl", "Jazz"], ...] -> leaf of each path.
        // 2018 layout: ["CDs & Vinyl", "Jazz"] -> leaf of the single path.
        std::set<std::string> cats;
        if (auto* c = first_of(rec, {"categories", "category"}); c && c->is_array() && !c->empty()) {
            if ((*c)[0].is_array()) {
                for (const auto& path : *c) {
                    if (path.is_array() && !path.empty() && path.back().is_string()) {
                        cats.insert(path.back().get<std::string>());
                    }
                }
            } else if (c->back().is_string()) {
                cats.insert(c->back().get<std::string>());
            }
        }
        meta.categories.assign(cats.begin(), cats.end());
        if (auto* rel = first_of(rec, {"related"}); rel && rel->is_object()) {
            if (rel->contains("also_bought")) meta.also_bought = id_list((*rel)["also_bought"]);
            if (rel->contains("also_viewed")) meta.also_viewed = id_list((*rel)["also_viewed"]);
        }
        if (auto* ab = first_of(rec, {"also_buy"})) meta.also_bought = id_list(*ab);
        if (auto* av = first_of(rec, {"also_view"})) meta.also_viewed = id_list(*av);
        out.catalog[meta.id] = std::move(meta);
    }
}

}  // namespace

LoadedDataset load_interactions(DatasetFormat format, const DatasetPaths& paths, RatingScale scale) {
    LoadedDataset out;
    out.format = format;
    try {
        if (format == DatasetFormat::movielens) {
            load_movielens(paths, scale, out);
        } else {
            load_amazon(paths, scale, out);
        }
    } catch (const CorpusError&) {
        throw;
    } catch (const Error& e) {
        throw CorpusError(e.what());
    }
    if (out.interactions.empty()) {
        throw CorpusError(fmt::format("{}: zero valid records", paths.interactions));
    }
    if (out.malformed_lines > 0) {
        spdlog::warn("{}: skipped {} malformed lines", paths.interactions, out.malformed_lines);
    }
    return out;
}

std::vector<ItemId> BehaviorSequence::item_ids() const {
    std::vector<ItemId> ids;
    ids.reserve(items.size());
    for (const auto& e : items) ids.push_back(e.item);
    return ids;
}

SequenceMap build_sequences(std::span<const Interaction> interactions, double positive_threshold) {
    SequenceMap out;
    for (const auto& x : interactions) {
        if (x.rating <= positive_threshold) continue;
        auto& seq = out[x.user];
        seq.user = x.user;
        seq.items.push_back({x.item, x.rating, x.timestamp});
    }
    for (auto& [user, seq] : out) {
        std::stable_sort(seq.items.begin(), seq.items.end(),
                         [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    }
    return out;
}

std::string_view role_name(SplitRole r) { return r == SplitRole::test ? "test" : "validation"; }

SplitRole parse_role(std::string_view s) {
    if (s == "test") return SplitRole::test;
    if (s == "validation") return SplitRole::validation;
    throw Error(fmt::format("unknown split role '{}'", s));
}

BehaviorSequence drop_last(const BehaviorSequence& seq, std::size_t n) {
    BehaviorSequence out{seq.user, {}};
    if (seq.items.size() > n) {
        out.items.assign(seq.items.begin(), seq.items.end() - static_cast<std::ptrdiff_t>(n));
    }
    return out;
}

SplitResult leave_one_out_split(const SequenceMap& sequences) {
    SplitResult out;
    for (const auto& [user, seq] : sequences) {
        const auto n = seq.items.size();
        if (n < 3) {
            out.skipped.push_back(user);
            continue;
        }
        out.cases.push_back({fmt::format("{}:validation", user.str()), user, drop_last(seq, 2),
                             seq.items[n - 2].item, SplitRole::validation});
        out.cases.push_back({fmt::format("{}:test", user.str()), user, drop_last(seq, 1),
                             seq.items[n - 1].item, SplitRole::test});
    }
    return out;
}

void to_json(json& j, const CandidateSet& c) {
    j = json{{"case_id", c.case_id},     {"user", c.user},
             {"role", role_name(c.role)}, {"candidates", c.candidates},
             {"positive_index", c.positive_index}, {"seed", c.seed}};
}

void from_json(const json& j, CandidateSet& c) {
    c.case_id = j.at("case_id").get<std::string>();
    c.user = j.at("user").get<UserId>();
    c.role = parse_role(j.value("role", std::string("test")));
    c.candidates = j.at("candidates").get<std::vector<ItemId>>();
    c.positive_index = j.at("positive_index").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    if (c.positive_index >= c.candidates.size()) {
        throw Error("candidate set " + c.case_id + ": positive_index out of range");
    }
}

CandidateSet sample_candidates(const SplitCase& split_case, const BehaviorSequence& full_history,
                               std::span<const ItemId> item_universe, std::size_t n_neg,
                               std::uint64_t seed) {
    std::set<ItemId> positives;
    for (const auto& e : full_history.items) positives.insert(e.item);
    positives.insert(split_case.held_out);

    std::vector<ItemId> pool;
    for (const auto& item : item_universe) {
        if (!positives.contains(item)) pool.push_back(item);
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    if (pool.size() < n_neg) {
        throw CorpusError(fmt::format("case {}: insufficient negatives ({} available, {} needed)",
                                      split_case.case_id, pool.size(), n_neg));
    }

    Rng rng(seed);
    CandidateSet out{split_case.case_id, split_case.user, split_case.role, {}, 0, seed};
    out.candidates.push_back(split_case.held_out);
    for (auto idx : rng.sample_indices(pool.size(), n_neg)) {
        out.candidates.push_back(pool[idx]);
    }
    rng.shuffle(out.candidates);
    auto it = std::find(out.candidates.begin(), out.candidates.end(), split_case.held_out);
    out.positive_index = static_cast<std::size_t>(it - out.candidates.begin());
    return out;
}

void to_json(json& j, const DatasetStats& s) {
    j = json{{"users", s.n_users},
             {"items", s.n_items},
             {"interactions", s.n_interactions},
             {"inters_per_user", s.inters_per_user},
             {"inters_per_item", s.inters_per_item},
             {"sparsity", s.sparsity}};
}

DatasetStats dataset_stats(std::span<const Interaction> interactions) {
    if (interactions.empty()) {
        throw CorpusError("dataset_stats: no interactions");
    }
    std::set<UserId> users;
    std::set<ItemId> items;
    for (const auto& x : interactions) {
        users.insert(x.user);
        items.insert(x.item);
    }
    DatasetStats s;
    s.n_users = users.size();
    s.n_items = items.size();
    s.n_interactions = interactions.size();
    const auto n = static_cast<double>(s.n_interactions);
    s.inters_per_user = n / static_cast<double>(s.n_users);
    s.inters_per_item = n / static_cast<double>(s.n_items);
    s.sparsity = 1.0 - n / (static_cast<double>(s.n_users) * static_cast<double>(s.n_items));
    return s;
}

std::vector<ItemId> item_universe(std::span<const Interaction> interactions) {
    std::set<ItemId> items;
    for (const auto& x : interactions) items.insert(x.item);
    return {items.begin(), items.end()};
}

std::vector<Interaction> flatten(const SequenceMap& sequences) {
    std::vector<Interaction> out;
    for (const auto& [user, seq] : sequences) {
        for (const auto& e : seq.items) out.push_back({user, e.item, e.rating, e.timestamp});
    }
    return out;
}

}  // namespace agentrec
