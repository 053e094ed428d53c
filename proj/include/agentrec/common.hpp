#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace agentrec {

using json = nlohmann::json;

/// Opaque string identifier tagged by the entity it names.
template <typename Tag>
class Id {
public:
    Id() = default;
    explicit Id(std::string value) : value_(std::move(value)) {}

    const std::string& str() const noexcept { return value_; }
    bool empty() const noexcept { return value_.empty(); }

    friend auto operator<=>(const Id&, const Id&) = default;
    friend bool operator==(const Id&, const Id&) = default;

private:
    std::string value_;
};

using UserId = Id<struct UserTag>;
using ItemId = Id<struct ItemTag>;

template <typename Tag>
void to_json(json& j, const Id<Tag>& id) { j = id.str(); }

template <typename Tag>
void from_json(const json& j, Id<Tag>& id) {
    if (j.is_string()) {
        id = Id<Tag>(j.get<std::string>());
    } else if (j.is_number_integer()) {
        id = Id<Tag>(std::to_string(j.get<std::int64_t>()));
    } else {
        throw std::invalid_argument("identifier must be a string or integer");
    }
}

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// FNV-1a, 64 bit. Used for seeds, cache keys and snapshot content hashes.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::string_view data, std::uint64_t h = kFnvOffset) noexcept {
    for (unsigned char c : data) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::string hex64(std::uint64_t v);

/// Hash of a whole file's bytes, as 16 hex digits.
std::string file_hash(const std::string& path);

/// Mixes a base seed with any number of string/integer parts.
/// The result depends only on the values, never on call order across threads.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t base, const Parts&... parts) {
    std::uint64_t h = fnv1a(std::to_string(base));
    auto mix = [&h](const auto& part) {
        h = fnv1a("\x1f", h);
        if constexpr (std::is_convertible_v<decltype(part), std::string_view>) {
            h = fnv1a(std::string_view(part), h);
        } else {
            h = fnv1a(std::to_string(part), h);
        }
    };
    (mix(parts), ...);
    // splitmix64 finalizer
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return h;
}

/// Seeded generator with platform-independent bounded draws.
/// std::mt19937_64 output is fully specified; the standard distributions are not,
/// so bounded integers and shuffles are implemented here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    /// Uniform real in [0, 1).
    double unit();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    /// k distinct indices drawn uniformly from [0, n), in draw order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
};

/// Reads a text file into lines, throwing Error if it cannot be opened.
std::vector<std::string> read_lines(const std::string& path);

/// Parses every non-blank line of a JSON-lines file.
std::vector<json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<json>& records);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, std::string_view delim);

/// True when `id` occurs in `text` as a whole token (not inside a longer identifier).
bool contains_token(std::string_view text, std::string_view id);

}  // namespace agentrec

template <typename Tag>
struct std::hash<agentrec::Id<Tag>> {
    std::size_t operator()(const agentrec::Id<Tag>& id) const noexcept {
        return std::hash<std::string>{}(id.str());
    }
};
