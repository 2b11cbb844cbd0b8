#pragma once

// Brute-force reference computations used as test oracles. None of these
// call into the library code they check.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace oracle {

std::filesystem::path fixture_dir();
std::filesystem::path data_dir();
nlohmann::json manifest();
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p);

/// RFC 1321 MD5, lowercase hex.
std::string md5_hex(std::string_view data);

/// -sum p log2 p, summed in long double.
double entropy_bits(const std::vector<std::uint64_t>& counts);
std::optional<double> evenness(const std::vector<std::uint64_t>& counts);

/// Reference imphash input for manifest-style imports
/// ([{"library": ..., "functions": [...]}], ordinals as integers).
std::string imphash_string(const nlohmann::json& imports);

/// Okapi BM25 score of one doc, recomputed from raw term counts.
double bm25(const std::vector<std::string>& query, const std::vector<std::vector<std::string>>& docs,
            std::size_t doc, double k1 = 1.2, double b = 0.75);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Set Jaccard after dropping tokens rejected by `keep`.
template <class Keep>
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b, Keep keep) {
    std::map<std::string, int> seen;
    for (const auto& t : a)
        if (keep(t)) seen[t] |= 1;
    for (const auto& t : b)
        if (keep(t)) seen[t] |= 2;
    if (seen.empty()) return 0.0;
    std::size_t both = 0;
    for (const auto& [t, m] : seen) both += (m == 3);
    return static_cast<double>(both) / static_cast<double>(seen.size());
}

/// (doc, score) sorted by score desc then doc asc.
std::vector<std::pair<std::string, double>> ordered(std::map<std::string, double> scores);

}  // namespace oracle
