#include "triage/transcript.hpp"

#include "triage/text.hpp"

namespace triage {

std::string_view to_string(RiskLevel r) noexcept {
    switch (r) {
    case RiskLevel::Low: return "low";
    case RiskLevel::Medium: return "medium";
    case RiskLevel::High: return "high";
    }
    return "low";
}

RiskLevel parse_risk(std::string_view s) noexcept {
    if (text::iequals(s, "high")) return RiskLevel::High;
    if (text::iequals(s, "medium")) return RiskLevel::Medium;
    return RiskLevel::Low;
}

std::optional<std::string> Transcript::find_item(std::string_view needle) const {
    if (needle.empty()) return std::nullopt;
    if (pe) {
        for (const auto& s : pe->strings) {
            if (text::icontains(s, needle)) return "transcript:pe.strings";
        }
        for (const auto& imp : pe->imports) {
            if (text::iequals(imp.library, needle)) return "transcript:pe.imports";
            for (const auto& fn : imp.functions) {
                if (text::iequals(fn, needle)) return "transcript:pe.imports";
            }
        }
        if (pe->imphash && text::iequals(*pe->imphash, needle)) return "transcript:pe.imphash";
    }
    if (text::iequals(sha256, needle)) return "transcript:sha256";
    if (decompiled_c && text::icontains(*decompiled_c, needle)) return "transcript:decompiled_c";
    if (assembly && text::icontains(*assembly, needle)) return "transcript:assembly";
    for (const auto& api : suspicious_apis) {
        if (text::iequals(api.name, needle)) return "transcript:suspicious_apis";
    }
    for (const auto& cap : capability_matches) {
        if (text::iequals(cap.technique, needle) || text::iequals(cap.name, needle)) {
            return "transcript:capability_matches";
        }
    }
    return std::nullopt;
}

std::size_t Transcript::failed_tools() const {
    std::size_t n = 0;
    for (const auto& [_, ok] : tool_status) n += ok ? 0 : 1;
    return n;
}

nlohmann::json to_json(const GraphSummary& g) {
    return {{"nodes", g.nodes}, {"edges", g.edges}, {"hotspots", g.hotspots}};
}

nlohmann::json to_json(const Transcript& t) {
    nlohmann::json apis = nlohmann::json::array();
    for (const auto& a : t.suspicious_apis) {
        apis.push_back({{"name", a.name},
                        {"library", a.library},
                        {"risk", to_string(a.risk)},
                        {"behaviors", a.behaviors},
                        {"note", a.note},
                        {"doc_id", a.doc_id}});
    }
    nlohmann::json caps = nlohmann::json::array();
    for (const auto& c : t.capability_matches) {
        caps.push_back({{"name", c.name},
                        {"technique", c.technique},
                        {"risk", to_string(c.risk)},
                        {"evidence", c.evidence},
                        {"guidance", c.guidance}});
    }
    auto opt_text = [](const std::optional<std::string>& s) {
        return s ? nlohmann::json(*s) : nlohmann::json(nullptr);
    };
    auto opt_graph = [](const std::optional<GraphSummary>& g) {
        return g ? to_json(*g) : nlohmann::json(nullptr);
    };
    return {{"sha256", t.sha256},
            {"pe", t.pe ? binscan::to_json(*t.pe) : nlohmann::json(nullptr)},
            {"decompiled_c", opt_text(t.decompiled_c)},
            {"assembly", opt_text(t.assembly)},
            {"cfg_summary", opt_graph(t.cfg_summary)},
            {"fcg_summary", opt_graph(t.fcg_summary)},
            {"suspicious_apis", apis},
            {"capability_matches", caps},
            {"tool_status", t.tool_status}};
}

}  // namespace triage
