#include "agentrec/common.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace agentrec {

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open file: " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return hex64(fnv1a(bytes));
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("Rng::below: empty range");
    }
    // Rejection sampling over the largest multiple of n.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return x % n;
}

double Rng::unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::vector<std::size_t> Rng::sample_indices(std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, n);
    // partial Fisher-Yates
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(idx[i], idx[i + below(n - i)]);
    }
    idx.resize(k);
    return idx;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open file: " + path);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(std::move(line));
    }
    return lines;
}

std::vector<json> read_jsonl(const std::string& path) {
    std::vector<json> out;
    std::size_t lineno = 0;
    for (const auto& line : read_lines(path)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw Error(fmt::format("{}:{}: invalid JSON record: {}", path, lineno, e.what()));
        }
    }
    return out;
}

void write_jsonl(const std::string& path, const std::vector<json>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write file: " + path);
    }
    for (const auto& r : records) {
        out << r.dump() << '\n';
    }
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, std::string_view delim) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(delim, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            return parts;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + delim.size();
    }
}

namespace {
bool is_id_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}
}  // namespace

bool contains_token(std::string_view text, std::string_view id) {
    if (id.empty()) {
        return false;
    }
    for (auto pos = text.find(id); pos != std::string_view::npos; pos = text.find(id, pos + 1)) {
        bool left_ok = pos == 0 || !is_id_char(text[pos - 1]);
        auto end = pos + id.size();
        bool right_ok = end == text.size() || !is_id_char(text[end]);
        if (left_ok && right_ok) {
            return true;
        }
    }
    return false;
}

}  // namespace agentrec
