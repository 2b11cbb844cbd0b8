#include "triage/engine.hpp"

#include "triage/error.hpp"
#include "triage/text.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace triage::engine {
namespace {

using nlohmann::json;

bool has_behavior(const Transcript& t, std::initializer_list<std::string_view> wanted) {
    for (const auto& api : t.suspicious_apis) {
        for (const auto& b : api.behaviors) {
            if (std::find(wanted.begin(), wanted.end(), b) != wanted.end()) return true;
        }
    }
    return false;
}

std::string with_commas(std::uint64_t v) {
    auto s = std::to_string(v);
    for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
    return s;
}

std::string hex(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%llX", static_cast<unsigned long long>(v));
    return buf;
}

std::string yes_no(bool b) { return b ? "Yes" : "No"; }

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::array<E, N>& all) {
    for (E e : all) {
        if (to_string(e) == s) return e;
    }
    throw Error(ErrorCode::SchemaViolation, "unknown enum value: " + s);
}

json opt(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }
std::optional<std::string> opt_str(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

json graph_json(const std::optional<GraphSummary>& g) { return g ? to_json(*g) : json(nullptr); }
std::optional<GraphSummary> graph_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return GraphSummary{j.at("nodes").get<std::size_t>(), j.at("edges").get<std::size_t>(),
                        j.at("hotspots").get<std::vector<std::string>>()};
}

ioc::ValidatedIndicator indicator_from(const json& j) {
    ioc::ValidatedIndicator v;
    auto kind = ioc::parse_kind(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::SchemaViolation, "unknown indicator kind");
    v.indicator.kind = *kind;
    v.indicator.raw = j.at("raw").get<std::string>();
    v.indicator.normalized = j.at("normalized").get<std::string>();
    v.indicator.span = {j.at("span").at(0).get<std::size_t>(), j.at("span").at(1).get<std::size_t>()};
    v.label = parse_enum(j.at("label").get<std::string>(),
                         std::array{ioc::ProvenanceLabel::Verified, ioc::ProvenanceLabel::ValidUnverified,
                                    ioc::ProvenanceLabel::Invalid});
    v.evidence_ref = opt_str(j, "evidence_ref");
    v.reason = opt_str(j, "reason");
    return v;
}

constexpr std::array kThreatLevels = {ThreatLevel::Low, ThreatLevel::Medium, ThreatLevel::High, ThreatLevel::Critical};
constexpr std::array kVerdicts = {VerdictFlag::Malicious, VerdictFlag::Benign, VerdictFlag::Inconclusive};

std::string key_of(const ioc::Indicator& i) { return std::string(ioc::to_string(i.kind)) + "|" + i.normalized; }

}  // namespace

std::string_view to_string(ThreatLevel t) noexcept {
    switch (t) {
    case ThreatLevel::Low: return "Low";
    case ThreatLevel::Medium: return "Medium";
    case ThreatLevel::High: return "High";
    case ThreatLevel::Critical: return "Critical";
    }
    return "Low";
}

std::string_view to_string(VerdictFlag v) noexcept {
    switch (v) {
    case VerdictFlag::Malicious: return "Malicious";
    case VerdictFlag::Benign: return "Benign";
    case VerdictFlag::Inconclusive: return "Inconclusive";
    }
    return "Inconclusive";
}

ThreatLevel threat_level(const Transcript& t, const kb::KnowledgeStore& knowledge) {
    std::size_t verified_high = 0;
    for (const auto& c : t.capability_matches) {
        if (c.risk != RiskLevel::High) continue;
        for (const auto& ind : ioc::extract_indicators(c.technique)) {
            if (ioc::validate_indicator(ind, knowledge, &t).label == ioc::ProvenanceLabel::Verified) {
                ++verified_high;
                break;
            }
        }
    }
    if (verified_high >= 2) return ThreatLevel::Critical;
    if (verified_high == 1) return ThreatLevel::High;
    if (!t.suspicious_apis.empty()) return ThreatLevel::Medium;
    return ThreatLevel::Low;
}

StructuredReport assemble_report(const Transcript* t, const AnalysisResponse& response,
                                 const kb::KnowledgeStore& knowledge) {
    if (!t) throw Error(ErrorCode::MissingTranscript, "report needs a static-analysis transcript");
    StructuredReport r;

    auto& s1 = r.step1_file_triage;
    s1.sha256 = t->sha256;
    if (t->pe) {
        const auto& pe = *t->pe;
        s1.size_bytes = pe.size_bytes;
        s1.size_class = std::string(binscan::to_string(binscan::size_class(pe.size_bytes)));
        s1.architecture = std::string(binscan::to_string(pe.architecture));
        s1.entry_point = pe.entry_point;
        for (const auto& imp : pe.imports) s1.import_count += imp.functions.size();
        for (const auto& sec : pe.sections) s1.sections.push_back(sec.name);
        s1.imphash = pe.imphash;
        s1.entropy = pe.overall_entropy;
    }
    if (t->fcg_summary) s1.functions_detected = t->fcg_summary->nodes;

    auto& s2 = r.step2_code_behavior;
    s2.cfg = t->cfg_summary;
    s2.fcg = t->fcg_summary;
    s2.process_manipulation = has_behavior(*t, {"process", "injection", "execution"});
    s2.network_api = has_behavior(*t, {"network"});
    s2.registry_api = has_behavior(*t, {"registry"});
    for (const auto& a : t->suspicious_apis) s2.suspicious_apis.push_back(a.name);
    for (const auto& c : t->capability_matches) {
        s2.capabilities.push_back(c.name + " (" + c.technique + ", " + std::string(to_string(c.risk)) + ")");
    }

    // Indicators: the answer's, then capability techniques, then indicators
    // found in the sample's strings.
    std::set<std::string> seen;
    auto add = [&](const ioc::ValidatedIndicator& v) {
        if (seen.insert(key_of(v.indicator)).second) r.step3_indicators.push_back(v);
    };
    for (const auto& v : response.validated_indicators) add(v);
    auto validate_text = [&](const std::string& s) {
        for (const auto& ind : ioc::extract_indicators(s)) {
            if (ind.kind == ioc::IndicatorKind::Port || seen.contains(key_of(ind))) continue;
            add(ioc::validate_indicator(ind, knowledge, t));
        }
    };
    // Techniques the sample itself supports: fired capability rules and the
    // technique tags of its suspicious imports.
    std::set<std::string> sample_techniques;
    for (const auto& c : t->capability_matches) {
        validate_text(c.technique);
        sample_techniques.insert(text::upper(c.technique));
    }
    for (const auto& a : t->suspicious_apis) {
        auto doc = knowledge.is_open() ? knowledge.find_doc(a.doc_id) : std::nullopt;
        if (!doc) continue;
        for (const auto& tag : doc->tags) {
            if (!tag.starts_with("technique:")) continue;
            validate_text(tag.substr(10));
            sample_techniques.insert(text::upper(tag.substr(10)));
        }
    }
    if (t->pe) {
        for (const auto& s : t->pe->strings) validate_text(s);
    }

    auto& s4 = r.step4_assessment;
    if (response.label) {
        s4.family = response.label->family;
        s4.category = response.label->category;
        s4.label_source = std::string(attrib::to_string(response.label->source));
    }
    s4.threat_level = threat_level(*t, knowledge);
    for (const auto& v : r.step3_indicators) {
        if (v.indicator.kind != ioc::IndicatorKind::MitreTechnique || v.label == ioc::ProvenanceLabel::Invalid) continue;
        if (!sample_techniques.contains(v.indicator.normalized)) continue;
        if (std::find(s4.mitre_mappings.begin(), s4.mitre_mappings.end(), v.indicator.normalized) ==
            s4.mitre_mappings.end()) {
            s4.mitre_mappings.push_back(v.indicator.normalized);
        }
    }
    std::vector<std::string> guidance;
    for (const auto& c : t->capability_matches) {
        if (!c.guidance.empty() && std::find(guidance.begin(), guidance.end(), c.guidance) == guidance.end()) {
            guidance.push_back(c.guidance);
        }
    }
    if (s1.imphash) guidance.push_back("Hunt for other binaries sharing import hash " + *s1.imphash + ".");
    if (guidance.empty()) guidance.push_back("Block the sample hash " + t->sha256 + " and monitor for recurrences.");
    s4.detection_guidance = text::join(guidance, " ");

    std::size_t stages = t->tool_status.size();
    if (stages == 0 || t->failed_tools() * 2 >= stages) {
        s4.verdict_flag = VerdictFlag::Inconclusive;
    } else if (s4.threat_level != ThreatLevel::Low || s4.family != "unknown") {
        s4.verdict_flag = VerdictFlag::Malicious;
    } else {
        s4.verdict_flag = VerdictFlag::Benign;
    }
    return r;
}

json to_json(const StructuredReport& r) {
    const auto& s1 = r.step1_file_triage;
    const auto& s2 = r.step2_code_behavior;
    const auto& s4 = r.step4_assessment;
    json indicators = json::array();
    for (const auto& v : r.step3_indicators) indicators.push_back(ioc::to_json(v));
    return {{"step1_file_triage",
             {{"sha256", s1.sha256},
              {"size_bytes", s1.size_bytes},
              {"size_class", s1.size_class},
              {"architecture", s1.architecture},
              {"entry_point", s1.entry_point},
              {"functions_detected", s1.functions_detected},
              {"import_count", s1.import_count},
              {"sections", s1.sections},
              {"imphash", opt(s1.imphash)},
              {"entropy", s1.entropy}}},
            {"step2_code_behavior",
             {{"cfg_summary", graph_json(s2.cfg)},
              {"fcg_summary", graph_json(s2.fcg)},
              {"process_manipulation", s2.process_manipulation},
              {"network_api", s2.network_api},
              {"registry_api", s2.registry_api},
              {"suspicious_apis", s2.suspicious_apis},
              {"capabilities", s2.capabilities}}},
            {"step3_indicators", {{"indicators", indicators}}},
            {"step4_assessment",
             {{"classification", {{"family", s4.family}, {"category", s4.category}, {"source", s4.label_source}}},
              {"threat_level", to_string(s4.threat_level)},
              {"mitre_mappings", s4.mitre_mappings},
              {"detection_guidance", s4.detection_guidance},
              {"verdict_flag", to_string(s4.verdict_flag)}}}};
}

StructuredReport report_from_json(const json& j) {
    StructuredReport r;
    const auto& a = j.at("step1_file_triage");
    auto& s1 = r.step1_file_triage;
    s1.sha256 = a.at("sha256").get<std::string>();
    s1.size_bytes = a.at("size_bytes").get<std::uint64_t>();
    s1.size_class = a.at("size_class").get<std::string>();
    s1.architecture = a.at("architecture").get<std::string>();
    s1.entry_point = a.at("entry_point").get<std::uint64_t>();
    s1.functions_detected = a.at("functions_detected").get<std::size_t>();
    s1.import_count = a.at("import_count").get<std::size_t>();
    s1.sections = a.at("sections").get<std::vector<std::string>>();
    s1.imphash = opt_str(a, "imphash");
    s1.entropy = a.at("entropy").get<double>();

    const auto& b = j.at("step2_code_behavior");
    auto& s2 = r.step2_code_behavior;
    s2.cfg = graph_from(b.at("cfg_summary"));
    s2.fcg = graph_from(b.at("fcg_summary"));
    s2.process_manipulation = b.at("process_manipulation").get<bool>();
    s2.network_api = b.at("network_api").get<bool>();
    s2.registry_api = b.at("registry_api").get<bool>();
    s2.suspicious_apis = b.at("suspicious_apis").get<std::vector<std::string>>();
    s2.capabilities = b.at("capabilities").get<std::vector<std::string>>();

    for (const auto& v : j.at("step3_indicators").at("indicators")) r.step3_indicators.push_back(indicator_from(v));

    const auto& d = j.at("step4_assessment");
    auto& s4 = r.step4_assessment;
    s4.family = d.at("classification").at("family").get<std::string>();
    s4.category = d.at("classification").at("category").get<std::string>();
    s4.label_source = d.at("classification").at("source").get<std::string>();
    s4.threat_level = parse_enum(d.at("threat_level").get<std::string>(), kThreatLevels);
    s4.mitre_mappings = d.at("mitre_mappings").get<std::vector<std::string>>();
    s4.detection_guidance = d.at("detection_guidance").get<std::string>();
    s4.verdict_flag = parse_enum(d.at("verdict_flag").get<std::string>(), kVerdicts);
    return r;
}

std::string render_markdown(const StructuredReport& r) {
    const auto& s1 = r.step1_file_triage;
    const auto& s2 = r.step2_code_behavior;
    const auto& s4 = r.step4_assessment;
    std::string md = "# Malware Triage Report\n\n**Sample:** `" + s1.sha256 + "`\n\n";

    md += "## Step 1: File Triage\n\nFile characteristics:\n\n";
    md += "- **Size:** " + with_commas(s1.size_bytes) + " bytes (" + s1.size_class + ")\n";
    md += "- **Architecture:** " + s1.architecture + "\n";
    md += "- **Entry point:** " + hex(s1.entry_point) + "\n";
    md += "- **Functions detected:** " + std::to_string(s1.functions_detected) + "\n";
    md += "- **Imported functions:** " + std::to_string(s1.import_count) + "\n";
    md += "- **Sections:** " + (s1.sections.empty() ? std::string("none") : text::join(s1.sections, ", ")) + "\n";
    if (s1.imphash) md += "- **Imphash:** `" + *s1.imphash + "`\n";
    char ent[32];
    std::snprintf(ent, sizeof ent, "%.3f", s1.entropy);
    md += "- **Entropy:** " + std::string(ent) + " bits/byte\n\n";

    md += "## Step 2: Code & Behavior Analysis\n\n";
    if (s2.cfg) {
        md += "- **CFG:** " + std::to_string(s2.cfg->nodes) + " basic blocks, " + std::to_string(s2.cfg->edges) +
              " edges\n";
    } else {
        md += "- **CFG:** unavailable\n";
    }
    if (s2.fcg) {
        md += "- **FCG:** " + std::to_string(s2.fcg->nodes) + " functions, " + std::to_string(s2.fcg->edges) +
              " call edges";
        if (!s2.fcg->hotspots.empty()) md += " (hotspots: " + text::join(s2.fcg->hotspots, ", ") + ")";
        md += "\n";
    } else {
        md += "- **FCG:** unavailable\n";
    }
    md += "- **Process manipulation:** " + yes_no(s2.process_manipulation) + "\n";
    md += "- **Network API:** " + yes_no(s2.network_api) + "\n";
    md += "- **Registry API:** " + yes_no(s2.registry_api) + "\n";
    if (!s2.suspicious_apis.empty()) md += "- **Suspicious APIs:** " + text::join(s2.suspicious_apis, ", ") + "\n";
    for (const auto& c : s2.capabilities) md += "- **Capability:** " + c + "\n";
    md += "\n## Step 3: Indicator Identification\n\n";
    if (r.step3_indicators.empty()) md += "- No indicators extracted\n";
    for (const auto& v : r.step3_indicators) {
        md += "- `" + v.indicator.normalized + "` " + std::string(ioc::to_string(v.indicator.kind)) + " [" +
              std::string(ioc::tag_of(v.label)) + "]";
        if (v.evidence_ref) md += " (" + *v.evidence_ref + ")";
        md += "\n";
    }

    md += "\n## Step 4: Assessment & Classification\n\n";
    md += "**Classification:** " + s4.family + " (" + s4.category + ")\n\n";
    md += "**Threat Level:** " + std::string(to_string(s4.threat_level)) + "\n\n";
    md += "**MITRE ATT&CK Mapping:** " +
          (s4.mitre_mappings.empty() ? std::string("none") : text::join(s4.mitre_mappings, ", ")) + "\n\n";
    md += "**Detection Guidance:** " + s4.detection_guidance + "\n\n";
    md += "**" + std::string(to_string(s4.verdict_flag)) + "**\n";
    return md;
}

}  // namespace triage::engine
