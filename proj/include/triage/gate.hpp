#pragma once

#include "triage/ioc.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace triage::gate {

struct QualityDimensions {
    double d1_information_density = 0.0;
    double d2_structural_completeness = 0.0;
    double d3_repetition_penalty = 1.0;  // 1 = no repetition
    double d4_length_sanity = 0.0;
    double d5_evidence_alignment = 1.0;

    std::array<double, 5> as_array() const noexcept {
        return {d1_information_density, d2_structural_completeness, d3_repetition_penalty, d4_length_sanity,
                d5_evidence_alignment};
    }
};

inline constexpr std::array<std::string_view, 5> kDimensionNames = {
    "information_density", "structural_completeness", "repetition_penalty", "length_sanity",
    "evidence_alignment"};

using QualityWeights = std::array<double, 5>;
inline constexpr QualityWeights kDefaultWeights = {0.20, 0.25, 0.15, 0.10, 0.30};

/// Shape parameters for the dimension formulas.
struct DimensionConfig {
    double density_saturation = 0.6;  // distinct/total content-token ratio that maps to 1
    std::size_t min_words = 20;       // length sanity is 0 below ...
    std::size_t plateau_start = 80;   // ... ramps to 1 here ...
    std::size_t plateau_end = 1200;   // ... stays 1 through here ...
    std::size_t max_words = 2000;     // ... and reaches 0 again here.
};

/// d5 counts indicators labelled Verified or ValidUnverified over all
/// indicators in the response (1.0 when there are none).
QualityDimensions score_dimensions(std::string_view response, std::span<const ioc::ValidatedIndicator> indicators,
                                   std::span<const std::string> required_sections,
                                   const DimensionConfig& cfg = {});

/// Convenience form: extracts and validates the response's indicators first.
QualityDimensions score_dimensions(std::string_view response, const kb::KnowledgeStore& knowledge,
                                   const Transcript* transcript, std::span<const std::string> required_sections,
                                   const DimensionConfig& cfg = {});

/// Dot product; throws WeightSumViolation.
double weighted_quality(const QualityDimensions& dims, const QualityWeights& weights = kDefaultWeights);

enum class Decision { Accept, RetryWithFeedback, TemplateFallback };
std::string_view to_string(Decision d) noexcept;

struct Thresholds {
    double accept = 0.75;
    double retry = 0.45;
};

struct QualityVerdict {
    double sigma = 0.0;
    Decision decision = Decision::TemplateFallback;
    std::vector<std::string> feedback;  // names of dimensions below 0.5
};

/// sigma >= accept -> Accept; retry <= sigma < accept -> RetryWithFeedback;
/// otherwise TemplateFallback. Throws ThresholdOrderViolation.
QualityVerdict gate(double sigma, const Thresholds& thresholds = {},
                    const std::optional<QualityDimensions>& dims = std::nullopt);

/// Case-folded substring patterns. Whitespace-only text is always a refusal.
class RefusalDetector {
public:
    RefusalDetector();
    explicit RefusalDetector(std::vector<std::string> patterns);

    static RefusalDetector from_file(const std::string& path);

    bool operator()(std::string_view text) const;
    const std::vector<std::string>& patterns() const noexcept { return patterns_; }

private:
    std::vector<std::string> patterns_;
};

std::vector<std::string> default_refusal_patterns();

bool detect_refusal(std::string_view text);

/// Sentences split on . ! ? and newlines; used by d3.
std::vector<std::string> split_sentences(std::string_view text);

nlohmann::json to_json(const QualityDimensions& d);
nlohmann::json to_json(const QualityVerdict& v);

}  // namespace triage::gate
