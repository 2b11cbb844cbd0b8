#include "triage/engine.hpp"

#include "triage/error.hpp"
#include "triage/text.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include <httplib.h>

namespace triage::engine {
namespace {

std::string fmt_double(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string excerpt(std::string_view s, std::size_t max_chars) {
    std::string flat = text::collapse_whitespace(s);
    if (flat.size() <= max_chars) return flat;
    auto cut = flat.rfind(' ', max_chars);
    if (cut == std::string::npos || cut < max_chars / 2) cut = max_chars;
    return flat.substr(0, cut) + " ...";
}

std::string evidence_ref(const retrieve::EvidenceItem& e) {
    return e.source == retrieve::EvidenceSource::Knowledge ? "kb:" + e.ref : e.ref;
}

// Everything a section renderer may draw on.
struct Facts {
    const GenerationRequest& req;
    const Transcript* t;
    const attrib::FamilyLabel* label;
    std::vector<const retrieve::EvidenceItem*> evidence;

    std::string sample_name() const { return t ? t->sha256.substr(0, 16) : std::string("the queried subject"); }

    std::vector<const CapabilityMatch*> capabilities() const {
        std::vector<const CapabilityMatch*> out;
        if (t) {
            for (const auto& c : t->capability_matches) out.push_back(&c);
        }
        return out;
    }

    std::vector<const retrieve::EvidenceItem*> knowledge(kb::CollectionKind kind) const {
        std::vector<const retrieve::EvidenceItem*> out;
        for (auto* e : evidence) {
            if (e->collection && *e->collection == kind) out.push_back(e);
        }
        return out;
    }

    std::string tag_of(const retrieve::EvidenceItem* e) const {
        const auto& items = req.bundle->evidence;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (&items[i] == e) return "[E" + std::to_string(i + 1) + "]";
        }
        return "";
    }

    std::string threat() const {
        if (!t) return "Low";
        std::size_t high = 0;
        for (const auto& c : t->capability_matches) high += c.risk == RiskLevel::High ? 1 : 0;
        if (high >= 2) return "Critical";
        if (high == 1) return "High";
        if (!t->suspicious_apis.empty()) return "Medium";
        return "Low";
    }
};

void summary(const Facts& f, std::string& out) {
    if (f.t && f.t->pe) {
        const auto& pe = *f.t->pe;
        out += "Sample " + f.t->sha256 + " is a " + std::to_string(pe.size_bytes) + "-byte " +
               std::string(binscan::to_string(pe.architecture)) + " PE image with " + std::to_string(pe.imports.size()) +
               " imported modules.";
        if (f.label && f.label->family != "unknown") {
            out += " It is labelled " + f.label->family + " (" + f.label->category + ") from " +
                   std::string(attrib::to_string(f.label->source)) + ".";
        }
        out += " Static analysis matched " + std::to_string(f.t->capability_matches.size()) +
               " capability rules and " + std::to_string(f.t->suspicious_apis.size()) + " suspicious imports.\n";
        return;
    }
    if (!f.req.query.empty()) out += "Question: " + f.req.query + "\n\n";
    if (f.evidence.empty()) {
        out += "No supporting evidence was retrieved for this question.\n";
        return;
    }
    out += "The strongest retrieved evidence is " + evidence_ref(*f.evidence.front()) + " " +
           f.tag_of(f.evidence.front()) + ": " + excerpt(f.evidence.front()->text, 240) + "\n";
}

void evidence(const Facts& f, std::string& out) {
    if (f.evidence.empty()) {
        out += "- No evidence items were available.\n";
        return;
    }
    for (auto* e : f.evidence) {
        out += "- " + f.tag_of(e) + " " + evidence_ref(*e) + " (confidence " + fmt_double(e->confidence) +
               "): " + excerpt(e->text, 220) + "\n";
    }
}

void indicators(const Facts& f, std::string& out) {
    std::set<std::string> seen;
    std::size_t n = 0;
    if (f.t) {
        out += "- Sample SHA-256: " + f.t->sha256 + "\n";
        if (f.t->pe && f.t->pe->imphash) out += "- Import hash: " + *f.t->pe->imphash + "\n";
        if (f.t->pe) {
            for (const auto& s : f.t->pe->strings) {
                for (const auto& ind : ioc::extract_indicators(s)) {
                    if (ind.kind == ioc::IndicatorKind::Port) continue;
                    if (!seen.insert(ind.normalized).second) continue;
                    out += "- " + std::string(ioc::to_string(ind.kind)) + " observed in strings: " + ind.raw + "\n";
                    ++n;
                }
            }
        }
        for (auto* c : f.capabilities()) {
            if (!seen.insert(c->technique).second) continue;
            out += "- Technique " + c->technique + " via " + c->name + "\n";
            ++n;
        }
    }
    if (!f.t) {
        for (const auto& ind : ioc::extract_indicators(f.req.query)) {
            if (seen.insert(ind.normalized).second) {
                out += "- " + std::string(ioc::to_string(ind.kind)) + " named in the question: " + ind.raw + "\n";
                ++n;
            }
        }
    }
    if (n == 0 && !f.t) out += "- No network or host indicators were extracted.\n";
}

void mitre(const Facts& f, std::string& out) {
    std::set<std::string> seen;
    for (auto* c : f.capabilities()) {
        if (!seen.insert(c->technique).second) continue;
        out += "- " + c->technique + ": " + c->name + " (risk " + std::string(to_string(c->risk)) + "), evidence " +
               text::join(c->evidence, ", ") + "\n";
    }
    for (auto* e : f.knowledge(kb::CollectionKind::AttackTechniques)) {
        auto ids = ioc::extract_indicators(e->text);
        if (ids.empty() || ids.front().kind != ioc::IndicatorKind::MitreTechnique) continue;
        if (!seen.insert(ids.front().normalized).second) continue;
        out += "- " + ids.front().normalized + " " + f.tag_of(e) + ": " + excerpt(e->text, 160) + "\n";
    }
    if (seen.empty()) out += "- No ATT&CK technique is supported by the available evidence.\n";
}

void guidance(const Facts& f, std::string& out) {
    std::set<std::string> seen;
    for (auto* c : f.capabilities()) {
        if (c->guidance.empty() || !seen.insert(c->guidance).second) continue;
        out += "- " + c->guidance + "\n";
    }
    if (f.t && f.t->pe && f.t->pe->imphash) {
        out += "- Hunt for other binaries sharing import hash " + *f.t->pe->imphash + ".\n";
    }
    if (seen.empty()) {
        for (auto* e : f.knowledge(kb::CollectionKind::AttackTechniques)) {
            out += "- Monitor for the behaviour described in " + f.tag_of(e) + " " + evidence_ref(*e) + ".\n";
            break;
        }
        if (!f.t || !f.t->pe || !f.t->pe->imphash) {
            out += "- Block confirmed indicators at the perimeter and review endpoint telemetry for recurrences.\n";
        }
    }
}

void classification(const Facts& f, std::string& out) {
    if (f.label) {
        out += "Family: " + f.label->family + ". Category: " + f.label->category + ". Label source: " +
               std::string(attrib::to_string(f.label->source));
        if (f.label->confidence) out += " (" + *f.label->confidence + ")";
        out += ".\n";
    } else {
        out += "No sample was supplied, so no family label is assigned.\n";
    }
    if (f.t) out += "Verdict basis: " + std::to_string(f.t->capability_matches.size()) + " capability matches.\n";
}

void threat(const Facts& f, std::string& out) {
    out += "Threat Level: " + f.threat() + ".\n";
    for (auto* c : f.capabilities()) {
        if (c->risk == RiskLevel::High) out += "- High-risk capability: " + c->name + " (" + c->technique + ")\n";
    }
}

void confidence(const Facts& f, std::string& out) {
    if (!f.label) {
        out += "Low: the answer rests on retrieved knowledge only.\n";
    } else if (f.label->source == attrib::LabelSource::LocalGroundTruth) {
        out += "High: the family comes from curated ground truth.\n";
    } else if (f.label->source == attrib::LabelSource::CtiReport) {
        out += "Medium: the family is a plurality of " + std::to_string(f.label->vendor_labels.size()) +
               " vendor labels.\n";
    } else if (f.label->source == attrib::LabelSource::ImphashMatch) {
        out += "Low (heuristic): the family is inferred from a shared import hash.\n";
    } else {
        out += "None: no labeling source produced a family.\n";
    }
}

void code_overview(const Facts& f, std::string& out) {
    if (!f.t) {
        out += "No code views are available without a sample.\n";
        return;
    }
    if (f.t->cfg_summary) {
        out += "Control-flow graph: " + std::to_string(f.t->cfg_summary->nodes) + " basic blocks and " +
               std::to_string(f.t->cfg_summary->edges) + " edges.\n";
    }
    if (f.t->fcg_summary) {
        out += "Call graph: " + std::to_string(f.t->fcg_summary->nodes) + " functions and " +
               std::to_string(f.t->fcg_summary->edges) + " call edges.\n";
    }
    if (!f.t->cfg_summary && !f.t->fcg_summary) out += "Graph summaries are unavailable for this sample.\n";
}

void key_functions(const Facts& f, std::string& out) {
    if (f.t && f.t->fcg_summary && !f.t->fcg_summary->hotspots.empty()) {
        out += "Highest fan-out functions: " + text::join(f.t->fcg_summary->hotspots, ", ") + ".\n";
    } else {
        out += "No function hotspots were identified.\n";
    }
}

void api_behavior(const Facts& f, std::string& out) {
    if (!f.t || f.t->suspicious_apis.empty()) {
        for (auto* e : f.knowledge(kb::CollectionKind::WinApiBehavior)) {
            out += "- " + f.tag_of(e) + " " + excerpt(e->text, 200) + "\n";
        }
        if (f.knowledge(kb::CollectionKind::WinApiBehavior).empty()) out += "- No suspicious API usage identified.\n";
        return;
    }
    for (const auto& a : f.t->suspicious_apis) {
        out += "- " + a.name + " (" + a.library + ", risk " + std::string(to_string(a.risk)) + "): " + a.note + "\n";
    }
}

void threats(const Facts& f, std::string& out) {
    auto caps = f.capabilities();
    if (caps.empty()) {
        out += "No capability rule fired; threats are inferred from retrieved knowledge only.\n";
        return;
    }
    for (auto* c : caps) out += "- " + c->name + " mapped to " + c->technique + "\n";
}

void intent(const Facts& f, std::string& out) {
    auto caps = f.capabilities();
    if (caps.empty()) {
        out += "Intent cannot be established from static evidence alone.\n";
        return;
    }
    std::vector<std::string> names;
    for (auto* c : caps) names.push_back(c->name);
    out += "The combination of " + text::join(names, ", ") + " indicates the operator's objective.";
    if (f.label && f.label->category != "unknown") out += " This fits the " + f.label->category + " category.";
    out += "\n";
}

void weaknesses(const Facts& f, std::string& out) {
    auto cwe = f.knowledge(kb::CollectionKind::CweWeaknesses);
    if (cwe.empty()) {
        out += "No weakness records matched the question.\n";
        return;
    }
    for (auto* e : cwe) out += "- " + f.tag_of(e) + " " + excerpt(e->text, 200) + "\n";
}

void remediation(const Facts& f, std::string& out) {
    auto cwe = f.knowledge(kb::CollectionKind::CweWeaknesses);
    if (cwe.empty()) {
        guidance(f, out);
        return;
    }
    out += "Apply the mitigations recorded for " + evidence_ref(*cwe.front()) + " and retest the affected code path.\n";
}

void fallback_section(const Facts& f, std::string& out) {
    if (f.evidence.empty()) {
        out += "No evidence addresses this section.\n";
        return;
    }
    out += "See " + f.tag_of(f.evidence.front()) + ": " + excerpt(f.evidence.front()->text, 200) + "\n";
}

using Renderer = void (*)(const Facts&, std::string&);

// First keyword contained in the lowercased heading wins.
const std::vector<std::pair<std::string_view, Renderer>>& renderers() {
    static const std::vector<std::pair<std::string_view, Renderer>> kTable = {
        {"risk", threat},              {"summary", summary},             {"detection guidance", guidance}, {"mitre", mitre},
        {"technique", mitre},          {"indicator", indicators},        {"evidence", evidence},
        {"classification", classification}, {"category", classification}, {"family", classification},
        {"attribution", classification}, {"threat level", threat},
        {"confidence", confidence},    {"code overview", code_overview}, {"key functions", key_functions},
        {"api", api_behavior},         {"threats", threats},             {"intent", intent},
        {"weakness", weaknesses},      {"remediation", remediation},
    };
    return kTable;
}

}  // namespace

std::string TemplateGenerator::generate(const GenerationRequest& req) {
    Facts f{req, req.transcript, req.label, {}};
    if (req.bundle) {
        for (const auto& e : req.bundle->evidence) f.evidence.push_back(&e);
    }
    std::string out;
    for (const auto& heading : req.required_sections) {
        out += "## " + heading + "\n";
        auto lower = text::lower(heading);
        Renderer render = fallback_section;
        for (const auto& [key, fn] : renderers()) {
            if (lower.find(key) != std::string::npos) {
                render = fn;
                break;
            }
        }
        render(f, out);
        out += "\n";
    }
    while (!out.empty() && out.back() == '\n') out.pop_back();
    return out + "\n";
}

HttpChatGenerator::HttpChatGenerator(std::string endpoint, std::string model, std::string api_key,
                                     std::chrono::seconds timeout)
    : model_(std::move(model)), api_key_(std::move(api_key)), timeout_(timeout) {
    auto scheme = endpoint.find("://");
    if (scheme == std::string::npos || endpoint.substr(0, scheme) != "http") {
        throw Error(ErrorCode::Precondition, "generator endpoint must be an http:// URL: " + endpoint);
    }
    auto slash = endpoint.find('/', scheme + 3);
    scheme_host_port_ = endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
}

std::string HttpChatGenerator::generate(const GenerationRequest& req) {
    std::string user = req.prompt;
    if (req.feedback) user += "\n\n## Reviewer Feedback\n" + *req.feedback;
    if (!req.required_sections.empty()) {
        user += "\n\nAnswer with these Markdown sections: " + text::join(req.required_sections, ", ") + ".";
    }
    nlohmann::json body = {{"model", model_},
                           {"temperature", 0},
                           {"messages", nlohmann::json::array({{{"role", "user"}, {"content", user}}})}};
    httplib::Client client(scheme_host_port_);
    client.set_read_timeout(timeout_.count(), 0);
    client.set_connection_timeout(timeout_.count() > 10 ? 10 : timeout_.count(), 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::GeneratorUnavailable, "generator endpoint unreachable: " + scheme_host_port_);
    if (res->status != 200) {
        throw Error(ErrorCode::GeneratorUnavailable, "generator returned HTTP " + std::to_string(res->status));
    }
    try {
        auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::GeneratorUnavailable, std::string("malformed generator reply: ") + e.what());
    }
}

}  // namespace triage::engine
