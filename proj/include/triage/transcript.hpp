#pragma once

#include "triage/binscan.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace triage {

enum class RiskLevel { Low, Medium, High };

std::string_view to_string(RiskLevel r) noexcept;
RiskLevel parse_risk(std::string_view s) noexcept;

struct GraphSummary {
    std::size_t nodes = 0;
    std::size_t edges = 0;
    std::vector<std::string> hotspots;  // highest fan-out functions first
};

struct SuspiciousApi {
    std::string name;
    std::string library;
    RiskLevel risk = RiskLevel::Low;
    std::vector<std::string> behaviors;  // e.g. "registry", "network"
    std::string note;
    std::string doc_id;  // supporting WinApiBehavior document
};

struct CapabilityMatch {
    std::string name;
    std::string technique;  // ATT&CK ID
    RiskLevel risk = RiskLevel::Low;
    std::vector<std::string> evidence;  // APIs / strings that fired the rule
    std::string guidance;
};

/// Static-analysis evidence for one sample. A field is present only when
/// the tool producing it reported success (see tool_status).
struct Transcript {
    std::string sha256;
    std::optional<binscan::PeMetadata> pe;
    std::optional<std::string> decompiled_c;
    std::optional<std::string> assembly;
    std::optional<GraphSummary> cfg_summary;
    std::optional<GraphSummary> fcg_summary;
    std::vector<SuspiciousApi> suspicious_apis;
    std::vector<CapabilityMatch> capability_matches;
    std::map<std::string, bool> tool_status;

    /// Identifier of the first transcript item containing `needle`
    /// (case-insensitive), e.g. "transcript:pe.strings".
    std::optional<std::string> find_item(std::string_view needle) const;

    std::size_t failed_tools() const;
};

nlohmann::json to_json(const GraphSummary& g);
nlohmann::json to_json(const Transcript& t);

}  // namespace triage
