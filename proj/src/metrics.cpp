#include "triage/metrics.hpp"

#include "triage/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace triage::metrics {
namespace {

double saturating_log(double x, double saturation) {
    if (x <= 0.0) return 0.0;
    return std::min(1.0, std::log1p(x) / std::log1p(saturation));
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

double shannon_entropy(std::span<const std::uint64_t> counts) {
    if (counts.empty()) throw Error(ErrorCode::EmptyInput, "entropy of an empty count list");
    double total = 0.0;
    for (auto c : counts) {
        if (c == 0) throw Error(ErrorCode::Precondition, "counts must be positive");
        total += static_cast<double>(c);
    }
    double h = 0.0;
    for (auto c : counts) {
        double p = static_cast<double>(c) / total;
        h -= p * std::log2(p);
    }
    return std::max(h, 0.0);
}

std::optional<double> pielou_evenness(std::span<const std::uint64_t> counts) {
    double h = shannon_entropy(counts);
    if (counts.size() == 1) return std::nullopt;
    return std::clamp(h / std::log2(static_cast<double>(counts.size())), 0.0, 1.0);
}

std::string_view to_string(DifficultyTier tier) noexcept {
    switch (tier) {
    case DifficultyTier::Beginner: return "beginner";
    case DifficultyTier::Intermediate: return "intermediate";
    case DifficultyTier::Expert: return "expert";
    }
    return "beginner";
}

std::optional<DifficultyTier> parse_tier(std::string_view s) {
    if (s == "beginner") return DifficultyTier::Beginner;
    if (s == "intermediate") return DifficultyTier::Intermediate;
    if (s == "expert") return DifficultyTier::Expert;
    return std::nullopt;
}

std::array<double, 6> normalize_components(const DifficultyInput& in, const DifficultyConfig& cfg) {
    return {saturating_log(static_cast<double>(in.code_length_chars), cfg.code_length_saturation),
            saturating_log(static_cast<double>(in.import_count), cfg.import_saturation),
            saturating_log(static_cast<double>(in.technique_count), cfg.technique_saturation),
            clamp01(in.family_rarity),
            clamp01(in.severity),
            clamp01(in.obfuscation_level)};
}

DifficultyScore score_components(const std::array<double, 6>& components, const DifficultyWeights& weights,
                                 const DifficultyConfig& cfg) {
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) throw Error(ErrorCode::WeightSumViolation, "weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::WeightSumViolation, "weights must sum to 1");
    double score = 0.0;
    for (std::size_t i = 0; i < components.size(); ++i) score += weights[i] * clamp01(components[i]);
    score = clamp01(score);
    DifficultyTier tier = score < cfg.intermediate_cutoff ? DifficultyTier::Beginner
                          : score < cfg.expert_cutoff     ? DifficultyTier::Intermediate
                                                          : DifficultyTier::Expert;
    return {score, tier};
}

DifficultyScore difficulty_score(const DifficultyInput& in, const DifficultyWeights& weights,
                                 const DifficultyConfig& cfg) {
    return score_components(normalize_components(in, cfg), weights, cfg);
}

double f1_from(double precision, double recall) noexcept {
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

Prf prf_metrics(const std::set<std::string>& predicted, const std::set<std::string>& gold) {
    std::size_t overlap = 0;
    for (const auto& p : predicted) overlap += gold.contains(p) ? 1 : 0;
    Prf out;
    out.precision = predicted.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(predicted.size());
    out.recall = gold.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(gold.size());
    out.f1 = f1_from(out.precision, out.recall);
    return out;
}

std::vector<BalanceRow> balance_report(std::span<const LabelPair> dataset) {
    std::map<std::string, std::map<std::string, std::uint64_t>> grouped;
    for (const auto& [category, family] : dataset) ++grouped[category][family];

    std::vector<BalanceRow> rows;
    for (const auto& [category, families] : grouped) {
        std::vector<std::uint64_t> counts;
        BalanceRow row;
        row.category = category;
        std::uint64_t top = 0;
        for (const auto& [family, n] : families) {
            counts.push_back(n);
            row.total_samples += n;
            if (n > top) {  // map order makes ties resolve to the smallest name
                top = n;
                row.top_family = family;
            }
        }
        row.family_count = counts.size();
        row.entropy = shannon_entropy(counts);
        row.evenness = pielou_evenness(counts);
        row.top_family_share = static_cast<double>(top) / static_cast<double>(row.total_samples);
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.total_samples > b.total_samples; });
    return rows;
}

nlohmann::json to_json(const BalanceRow& row) {
    return {{"category", row.category},
            {"total_samples", row.total_samples},
            {"family_count", row.family_count},
            {"entropy", row.entropy},
            {"evenness", row.evenness ? nlohmann::json(*row.evenness) : nlohmann::json(nullptr)},
            {"top_family", row.top_family},
            {"top_family_share", row.top_family_share}};
}

}  // namespace triage::metrics
