#pragma once

// Indicator extraction and provenance validation.
//
// Grammars (all offsets are byte offsets into the UTF-8 source):
//   MitreTechnique  T#### with optional .### sub-technique
//   Cve             CVE-####-####+
//   Cwe             CWE-#+
//   Capec           CAPEC-#+
//   CvssVector      CVSS:3.#  followed by one or more /KEY:V metric pairs
//   IpAddress       dotted quad of 1-3 digit groups
//   FileHash        exactly 32, 40 or 64 hex characters
//   Url             http://, https:// or ftp:// up to whitespace, trailing
//                   punctuation trimmed
//   Email           local@domain.tld with an alphabetic TLD of 2+ chars
//   Port            the word "port" followed by an optional ':', '#' or '='
//                   and an integer
// Identifier prefixes are case-insensitive. Every match must start and end
// on a word boundary.

#include "triage/kb.hpp"
#include "triage/transcript.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace triage::ioc {

enum class IndicatorKind { MitreTechnique, Cve, Cwe, Capec, CvssVector, IpAddress, FileHash, Url, Email, Port };

inline constexpr std::array<IndicatorKind, 10> kAllKinds = {
    IndicatorKind::MitreTechnique, IndicatorKind::Cve,       IndicatorKind::Cwe,
    IndicatorKind::Capec,          IndicatorKind::CvssVector, IndicatorKind::IpAddress,
    IndicatorKind::FileHash,       IndicatorKind::Url,        IndicatorKind::Email,
    IndicatorKind::Port};

std::string_view to_string(IndicatorKind kind) noexcept;
std::optional<IndicatorKind> parse_kind(std::string_view name);

struct Span {
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive
    bool operator==(const Span&) const = default;
};

struct Indicator {
    IndicatorKind kind = IndicatorKind::MitreTechnique;
    std::string raw;
    std::string normalized;
    Span span;
    bool operator==(const Indicator&) const = default;
};

enum class ProvenanceLabel { Verified, ValidUnverified, Invalid };

std::string_view to_string(ProvenanceLabel label) noexcept;
/// Tag text appended by annotate_response: "verified" / "unverified" / "invalid".
std::string_view tag_of(ProvenanceLabel label) noexcept;

struct ValidatedIndicator {
    Indicator indicator;
    ProvenanceLabel label = ProvenanceLabel::ValidUnverified;
    std::optional<std::string> evidence_ref;  // "kb:<doc_id>" or "transcript:<item>"
    std::optional<std::string> reason;
};

/// Longest match of any kind starting exactly at `pos`; ties resolved by
/// kind declaration order.
std::optional<Indicator> match_at(std::string_view text, std::size_t pos);

/// Left-to-right, non-overlapping, longest-match-first scan.
std::vector<Indicator> extract_indicators(std::string_view text);

/// "md5", "sha1" or "sha256" for a FileHash by length.
std::string_view hash_algorithm(const Indicator& hash) noexcept;

struct ValidationOptions {
    int reference_year = 0;  // 0 = current calendar year
};

/// Range checks first (Invalid), then evidence lookup (Verified), else
/// ValidUnverified. Throws Error{KnowledgeUnavailable} if the store is closed.
ValidatedIndicator validate_indicator(const Indicator& indicator, const kb::KnowledgeStore& knowledge,
                                      const Transcript* transcript = nullptr,
                                      const ValidationOptions& options = {});

struct ValidationBatch {
    std::vector<ValidatedIndicator> indicators;
    bool knowledge_degraded = false;
};

/// Validates every indicator; a closed store degrades the affected items to
/// ValidUnverified and sets knowledge_degraded.
ValidationBatch validate_all(std::span<const Indicator> indicators, const kb::KnowledgeStore& knowledge,
                             const Transcript* transcript = nullptr, const ValidationOptions& options = {});

/// Suffixes each indicator occurrence with " [verified]" / " [unverified]" /
/// " [invalid]". Throws Error{SpanMismatch} on out-of-range, overlapping or
/// stale spans.
std::string annotate_response(std::string_view text, std::span<const ValidatedIndicator> validated);

/// Removes every provenance tag inserted by annotate_response.
std::string strip_provenance_tags(std::string_view annotated);

nlohmann::json to_json(const Indicator& indicator);
nlohmann::json to_json(const ValidatedIndicator& v);

}  // namespace triage::ioc
