#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace triage::metrics {

/// Shannon entropy in bits of the distribution given by `counts`.
/// Throws EmptyInput on an empty list; counts must be >= 1.
double shannon_entropy(std::span<const std::uint64_t> counts);

/// Pielou's evenness H / log2(S); nullopt when S == 1.
std::optional<double> pielou_evenness(std::span<const std::uint64_t> counts);

// ---- difficulty --------------------------------------------------------

struct DifficultyInput {
    std::uint64_t code_length_chars = 0;
    std::uint64_t import_count = 0;
    std::uint64_t technique_count = 0;
    double family_rarity = 0.0;  // 1 = rarest
    double severity = 0.0;
    double obfuscation_level = 0.0;
};

enum class DifficultyTier { Beginner, Intermediate, Expert };

std::string_view to_string(DifficultyTier tier) noexcept;
std::optional<DifficultyTier> parse_tier(std::string_view s);

struct DifficultyScore {
    double score = 0.0;
    DifficultyTier tier = DifficultyTier::Beginner;
};

using DifficultyWeights = std::array<double, 6>;

/// Normalizers and cutoffs. Not published with the scoring figure; these
/// are this project's defaults and are overridable from config.
struct DifficultyConfig {
    double code_length_saturation = 200'000.0;
    double import_saturation = 100.0;
    double technique_saturation = 20.0;
    double intermediate_cutoff = 0.35;
    double expert_cutoff = 0.70;
};

inline constexpr DifficultyWeights kEqualWeights = {1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
/// Prompt-level tiering: code size, imports and technique count only.
inline constexpr DifficultyWeights kPromptWeights = {1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0, 0.0, 0.0};

/// Maps raw inputs to [0,1]: log1p(x)/log1p(saturation), capped at 1, for the
/// three count components; the other three are clamped.
std::array<double, 6> normalize_components(const DifficultyInput& in, const DifficultyConfig& cfg = {});

/// Score from already-normalized components. Throws WeightSumViolation.
DifficultyScore score_components(const std::array<double, 6>& components, const DifficultyWeights& weights,
                                 const DifficultyConfig& cfg = {});

DifficultyScore difficulty_score(const DifficultyInput& in, const DifficultyWeights& weights = kEqualWeights,
                                 const DifficultyConfig& cfg = {});

// ---- retrieval-style set metrics ----------------------------------------

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

Prf prf_metrics(const std::set<std::string>& predicted, const std::set<std::string>& gold);
double f1_from(double precision, double recall) noexcept;

// ---- dataset balance ---------------------------------------------------

struct BalanceRow {
    std::string category;
    std::uint64_t total_samples = 0;
    std::uint64_t family_count = 0;
    double entropy = 0.0;
    std::optional<double> evenness;
    std::string top_family;
    double top_family_share = 0.0;
};

using LabelPair = std::pair<std::string, std::string>;  // (category, family)

/// One row per category, sorted by total_samples descending then name.
std::vector<BalanceRow> balance_report(std::span<const LabelPair> dataset);

nlohmann::json to_json(const BalanceRow& row);

}  // namespace triage::metrics
