#include "triage/gate.hpp"

#include "triage/error.hpp"
#include "triage/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

namespace triage::gate {
namespace {

const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> kWords = {
        "a",     "an",   "the",  "and",  "or",    "but",  "if",   "of",    "to",    "in",   "on",
        "for",   "with", "by",   "at",   "from",  "as",   "is",   "are",   "was",   "were", "be",
        "been",  "it",   "its",  "this", "that",  "these", "those", "which", "who",  "what", "not",
        "no",    "yes",  "has",  "have", "had",   "do",   "does", "did",   "can",   "could", "will",
        "would", "may",  "might", "into", "than", "then", "so",   "such",  "also",  "any",  "all"};
    return kWords;
}

std::vector<std::string> content_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty() && !stopwords().contains(cur)) out.push_back(cur);
        cur.clear();
    };
    for (char c : s) {
        if (text::is_alnum(c)) {
            cur.push_back(text::to_lower(c));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

double length_sanity(std::size_t words, const DimensionConfig& cfg) {
    if (words < cfg.min_words || words > cfg.max_words) return 0.0;
    if (words < cfg.plateau_start) {
        return static_cast<double>(words - cfg.min_words) / static_cast<double>(cfg.plateau_start - cfg.min_words);
    }
    if (words <= cfg.plateau_end) return 1.0;
    return static_cast<double>(cfg.max_words - words) / static_cast<double>(cfg.max_words - cfg.plateau_end);
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        auto norm = text::lower(text::collapse_whitespace(cur));
        if (std::any_of(norm.begin(), norm.end(), text::is_alnum)) out.push_back(std::move(norm));
        cur.clear();
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '\n') {
            flush();
            continue;
        }
        cur.push_back(c);
        bool terminator = c == '.' || c == '!' || c == '?';
        if (terminator && (i + 1 == s.size() || text::is_space(s[i + 1]))) flush();
    }
    flush();
    return out;
}

QualityDimensions score_dimensions(std::string_view response, std::span<const ioc::ValidatedIndicator> indicators,
                                   std::span<const std::string> required_sections, const DimensionConfig& cfg) {
    QualityDimensions d;
    const bool empty = text::trim(response).empty();

    auto tokens = content_tokens(response);
    if (!tokens.empty()) {
        std::set<std::string> distinct(tokens.begin(), tokens.end());
        double ratio = static_cast<double>(distinct.size()) / static_cast<double>(tokens.size());
        d.d1_information_density = std::min(1.0, ratio / cfg.density_saturation);
    }

    if (!empty) {
        if (required_sections.empty()) {
            d.d2_structural_completeness = 1.0;
        } else {
            std::size_t present = 0;
            for (const auto& heading : required_sections) present += text::icontains(response, heading) ? 1 : 0;
            d.d2_structural_completeness =
                static_cast<double>(present) / static_cast<double>(required_sections.size());
        }
    }

    auto sentences = split_sentences(response);
    if (!sentences.empty()) {
        std::set<std::string> seen;
        std::size_t duplicates = 0;
        for (const auto& s : sentences) duplicates += seen.insert(s).second ? 0 : 1;
        d.d3_repetition_penalty = 1.0 - static_cast<double>(duplicates) / static_cast<double>(sentences.size());
    }

    d.d4_length_sanity = empty ? 0.0 : length_sanity(text::word_count(response), cfg);

    if (!indicators.empty()) {
        std::size_t ok = 0;
        for (const auto& v : indicators) ok += v.label != ioc::ProvenanceLabel::Invalid ? 1 : 0;
        d.d5_evidence_alignment = static_cast<double>(ok) / static_cast<double>(indicators.size());
    }
    return d;
}

QualityDimensions score_dimensions(std::string_view response, const kb::KnowledgeStore& knowledge,
                                   const Transcript* transcript, std::span<const std::string> required_sections,
                                   const DimensionConfig& cfg) {
    auto found = ioc::extract_indicators(response);
    auto batch = ioc::validate_all(found, knowledge, transcript);
    return score_dimensions(response, batch.indicators, required_sections, cfg);
}

double weighted_quality(const QualityDimensions& dims, const QualityWeights& weights) {
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) throw Error(ErrorCode::WeightSumViolation, "weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::WeightSumViolation, "weights must sum to 1");
    auto values = dims.as_array();
    double sigma = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sigma += values[i] * weights[i];
    return std::clamp(sigma, 0.0, 1.0);
}

std::string_view to_string(Decision d) noexcept {
    switch (d) {
    case Decision::Accept: return "accept";
    case Decision::RetryWithFeedback: return "retry_with_feedback";
    case Decision::TemplateFallback: return "template_fallback";
    }
    return "template_fallback";
}

QualityVerdict gate(double sigma, const Thresholds& t, const std::optional<QualityDimensions>& dims) {
    if (!(0.0 <= t.retry && t.retry <= t.accept && t.accept <= 1.0)) {
        throw Error(ErrorCode::ThresholdOrderViolation, "require 0 <= retry <= accept <= 1");
    }
    QualityVerdict v;
    v.sigma = sigma;
    if (sigma >= t.accept) {
        v.decision = Decision::Accept;
    } else if (sigma >= t.retry) {
        v.decision = Decision::RetryWithFeedback;
        if (dims) {
            auto values = dims->as_array();
            for (std::size_t i = 0; i < values.size(); ++i) {
                if (values[i] < 0.5) v.feedback.emplace_back(kDimensionNames[i]);
            }
        }
    } else {
        v.decision = Decision::TemplateFallback;
    }
    return v;
}

std::vector<std::string> default_refusal_patterns() {
    return {"i cannot assist with this request",
            "i can't help with",
            "i cannot help with",
            "i can't assist with",
            "i am unable to assist",
            "i'm unable to assist",
            "i won't be able to help",
            "as an ai"};
}

RefusalDetector::RefusalDetector() : RefusalDetector(default_refusal_patterns()) {}

RefusalDetector::RefusalDetector(std::vector<std::string> patterns) {
    for (auto& p : patterns) patterns_.push_back(text::lower(p));
}

RefusalDetector RefusalDetector::from_file(const std::string& path) {
    auto j = nlohmann::json::parse(text::read_file(path));
    return RefusalDetector(j.at("patterns").get<std::vector<std::string>>());
}

bool RefusalDetector::operator()(std::string_view s) const {
    if (text::trim(s).empty()) return true;
    std::string folded = text::lower(s);
    // Typographic apostrophes are common in model output.
    for (std::size_t pos = 0; (pos = folded.find("\xE2\x80\x99", pos)) != std::string::npos;) {
        folded.replace(pos, 3, "'");
    }
    return std::any_of(patterns_.begin(), patterns_.end(),
                       [&](const std::string& p) { return folded.find(p) != std::string::npos; });
}

bool detect_refusal(std::string_view s) {
    static const RefusalDetector kDefault;
    return kDefault(s);
}

nlohmann::json to_json(const QualityDimensions& d) {
    return {{"d1_information_density", d.d1_information_density},
            {"d2_structural_completeness", d.d2_structural_completeness},
            {"d3_repetition_penalty", d.d3_repetition_penalty},
            {"d4_length_sanity", d.d4_length_sanity},
            {"d5_evidence_alignment", d.d5_evidence_alignment}};
}

nlohmann::json to_json(const QualityVerdict& v) {
    return {{"sigma", v.sigma}, {"decision", to_string(v.decision)}, {"feedback", v.feedback}};
}

}  // namespace triage::gate
