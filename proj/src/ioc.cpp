#include "triage/ioc.hpp"

#include "triage/error.hpp"
#include "triage/text.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <map>
#include <set>

namespace triage::ioc {
namespace {

using text::is_alnum;
using text::is_digit;

bool is_hex_char(char c) noexcept {
    return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

bool is_alpha(char c) noexcept { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

bool left_boundary(std::string_view t, std::size_t pos) noexcept { return pos == 0 || !is_alnum(t[pos - 1]); }

bool right_boundary(std::string_view t, std::size_t end) noexcept { return end >= t.size() || !is_alnum(t[end]); }

std::size_t digits_from(std::string_view t, std::size_t pos) noexcept {
    std::size_t n = 0;
    while (pos + n < t.size() && is_digit(t[pos + n])) ++n;
    return n;
}

bool prefix_at(std::string_view t, std::size_t pos, std::string_view prefix) noexcept {
    return text::starts_with_icase(t.substr(pos), prefix);
}

std::size_t match_technique(std::string_view t, std::size_t pos) {
    if (pos >= t.size() || (t[pos] != 'T' && t[pos] != 't') || !left_boundary(t, pos)) return 0;
    if (digits_from(t, pos + 1) != 4) return 0;
    std::size_t end = pos + 5;
    if (end + 4 <= t.size() && t[end] == '.' && digits_from(t, end + 1) == 3 && right_boundary(t, end + 4)) {
        end += 4;
    }
    return right_boundary(t, end) ? end - pos : 0;
}

std::size_t match_prefixed_id(std::string_view t, std::size_t pos, std::string_view prefix) {
    if (!left_boundary(t, pos) || !prefix_at(t, pos, prefix)) return 0;
    std::size_t n = digits_from(t, pos + prefix.size());
    if (n == 0) return 0;
    std::size_t end = pos + prefix.size() + n;
    return right_boundary(t, end) ? end - pos : 0;
}

std::size_t match_cve(std::string_view t, std::size_t pos) {
    if (!left_boundary(t, pos) || !prefix_at(t, pos, "CVE-")) return 0;
    std::size_t at = pos + 4;
    if (digits_from(t, at) != 4 || at + 4 >= t.size() || t[at + 4] != '-') return 0;
    at += 5;
    std::size_t n = digits_from(t, at);
    if (n < 4) return 0;
    return right_boundary(t, at + n) ? at + n - pos : 0;
}

std::size_t match_cvss(std::string_view t, std::size_t pos) {
    if (!left_boundary(t, pos) || !prefix_at(t, pos, "CVSS:3.")) return 0;
    std::size_t at = pos + 7;
    if (digits_from(t, at) != 1) return 0;
    ++at;
    std::size_t pairs = 0;
    while (at < t.size() && t[at] == '/') {
        std::size_t k = 0;
        while (at + 1 + k < t.size() && is_alpha(t[at + 1 + k]) && k < 4) ++k;
        if (k == 0 || k > 3) break;
        std::size_t colon = at + 1 + k;
        if (colon + 1 >= t.size() || t[colon] != ':' || !is_alpha(t[colon + 1])) break;
        if (colon + 2 < t.size() && is_alnum(t[colon + 2])) break;
        at = colon + 2;
        ++pairs;
    }
    if (pairs == 0) return 0;
    return right_boundary(t, at) ? at - pos : 0;
}

std::size_t match_ip(std::string_view t, std::size_t pos) {
    if (pos > 0 && (is_alnum(t[pos - 1]) || t[pos - 1] == '.')) return 0;
    std::size_t at = pos;
    for (int group = 0; group < 4; ++group) {
        if (group > 0) {
            if (at >= t.size() || t[at] != '.') return 0;
            ++at;
        }
        std::size_t n = digits_from(t, at);
        if (n == 0 || n > 3) return 0;
        at += n;
    }
    if (!right_boundary(t, at)) return 0;
    if (at + 1 < t.size() && t[at] == '.' && is_digit(t[at + 1])) return 0;
    return at - pos;
}

std::size_t match_hash(std::string_view t, std::size_t pos) {
    if (!left_boundary(t, pos)) return 0;
    std::size_t n = 0;
    while (pos + n < t.size() && is_hex_char(t[pos + n])) ++n;
    if (n != 32 && n != 40 && n != 64) return 0;
    return right_boundary(t, pos + n) ? n : 0;
}

std::size_t match_url(std::string_view t, std::size_t pos) {
    if (!left_boundary(t, pos)) return 0;
    std::size_t scheme = 0;
    for (std::string_view s : {"https://", "http://", "ftp://"}) {
        if (prefix_at(t, pos, s)) {
            scheme = s.size();
            break;
        }
    }
    if (scheme == 0) return 0;
    std::size_t end = pos + scheme;
    while (end < t.size()) {
        char c = t[end];
        if (text::is_space(c) || c == '<' || c == '>' || c == '"' || c == '\'' || c == '`' || c == '[') break;
        ++end;
    }
    while (end > pos + scheme && std::string_view(".,;:!?)]}").find(t[end - 1]) != std::string_view::npos) --end;
    if (end == pos + scheme || !is_alnum(t[pos + scheme])) return 0;
    return end - pos;
}

bool is_local_char(char c) noexcept {
    return is_alnum(c) || c == '.' || c == '_' || c == '%' || c == '+' || c == '-';
}

std::size_t match_email(std::string_view t, std::size_t pos) {
    if (pos >= t.size() || !is_alnum(t[pos])) return 0;
    if (pos > 0 && is_local_char(t[pos - 1])) return 0;
    std::size_t at = pos;
    while (at < t.size() && is_local_char(t[at])) ++at;
    if (at >= t.size() || t[at] != '@') return 0;
    ++at;
    std::size_t end = at;
    std::size_t labels = 0;
    std::size_t last_label_start = at;
    while (true) {
        std::size_t start = end;
        while (end < t.size() && (is_alnum(t[end]) || t[end] == '-')) ++end;
        if (end == start) return 0;
        ++labels;
        last_label_start = start;
        if (end + 1 < t.size() && t[end] == '.' && is_alnum(t[end + 1])) {
            ++end;
            continue;
        }
        break;
    }
    if (labels < 2) return 0;
    std::string_view tld = t.substr(last_label_start, end - last_label_start);
    if (tld.size() < 2 || !std::all_of(tld.begin(), tld.end(), is_alpha)) return 0;
    return end - pos;
}

std::size_t match_port(std::string_view t, std::size_t pos) {
    if (!left_boundary(t, pos) || !prefix_at(t, pos, "port")) return 0;
    std::size_t at = pos + 4;
    std::size_t seps = 0;
    while (at < t.size() && seps < 3 && (t[at] == ' ' || t[at] == ':' || t[at] == '#' || t[at] == '=')) {
        ++at;
        ++seps;
    }
    std::size_t n = digits_from(t, at);
    if (n == 0 || n > 10) return 0;
    if (at == pos + 4 && n > 0) {
        // "port8080" is one token; require a separator.
        return 0;
    }
    return right_boundary(t, at + n) ? at + n - pos : 0;
}

std::size_t match_kind(IndicatorKind kind, std::string_view t, std::size_t pos) {
    switch (kind) {
    case IndicatorKind::MitreTechnique: return match_technique(t, pos);
    case IndicatorKind::Cve: return match_cve(t, pos);
    case IndicatorKind::Cwe: return match_prefixed_id(t, pos, "CWE-");
    case IndicatorKind::Capec: return match_prefixed_id(t, pos, "CAPEC-");
    case IndicatorKind::CvssVector: return match_cvss(t, pos);
    case IndicatorKind::IpAddress: return match_ip(t, pos);
    case IndicatorKind::FileHash: return match_hash(t, pos);
    case IndicatorKind::Url: return match_url(t, pos);
    case IndicatorKind::Email: return match_email(t, pos);
    case IndicatorKind::Port: return match_port(t, pos);
    }
    return 0;
}

std::string normalize(IndicatorKind kind, std::string_view raw) {
    switch (kind) {
    case IndicatorKind::MitreTechnique:
    case IndicatorKind::Cve:
    case IndicatorKind::Cwe:
    case IndicatorKind::Capec:
    case IndicatorKind::CvssVector: return text::upper(raw);
    case IndicatorKind::IpAddress: return std::string(raw);
    case IndicatorKind::FileHash:
    case IndicatorKind::Url:
    case IndicatorKind::Email: return text::lower(raw);
    case IndicatorKind::Port: {
        auto first = std::find_if(raw.begin(), raw.end(), is_digit);
        std::string digits(first, raw.end());
        auto nz = digits.find_first_not_of('0');
        return nz == std::string::npos ? std::string("0") : digits.substr(nz);
    }
    }
    return std::string(raw);
}

int current_year() {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    return utc.tm_year + 1900;
}

ValidatedIndicator invalid(const Indicator& i, std::string reason) {
    return {i, ProvenanceLabel::Invalid, std::nullopt, std::move(reason)};
}

ValidatedIndicator verified(const Indicator& i, std::string ref, std::string reason) {
    return {i, ProvenanceLabel::Verified, std::move(ref), std::move(reason)};
}

ValidatedIndicator unverified(const Indicator& i, std::string reason) {
    return {i, ProvenanceLabel::ValidUnverified, std::nullopt, std::move(reason)};
}

std::optional<std::string> cvss_violation(std::string_view normalized) {
    static const std::map<std::string, std::string, std::less<>> kLegal = {
        {"AV", "NALP"}, {"AC", "LH"},    {"PR", "NLH"},   {"UI", "NR"},   {"S", "UC"},    {"C", "HLN"},
        {"I", "HLN"},   {"A", "HLN"},    {"E", "XUPFH"},  {"RL", "XOTWU"}, {"RC", "XURC"}, {"CR", "XLMH"},
        {"IR", "XLMH"}, {"AR", "XLMH"},  {"MAV", "XNALP"}, {"MAC", "XLH"}, {"MPR", "XNLH"}, {"MUI", "XNR"},
        {"MS", "XUC"},  {"MC", "XNLH"},  {"MI", "XNLH"},  {"MA", "XNLH"}};
    static const std::array<std::string_view, 8> kBase = {"AV", "AC", "PR", "UI", "S", "C", "I", "A"};

    auto parts = text::split(normalized, '/');
    const std::string& version = parts.front();
    if (version != "CVSS:3.0" && version != "CVSS:3.1") return "unsupported CVSS version " + version.substr(5);
    std::set<std::string, std::less<>> seen;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        auto colon = parts[i].find(':');
        std::string key = parts[i].substr(0, colon);
        std::string value = parts[i].substr(colon + 1);
        auto it = kLegal.find(key);
        if (it == kLegal.end()) return "unknown CVSS metric " + key;
        if (it->second.find(value) == std::string::npos) return "CVSS metric " + key + " has illegal value " + value;
        if (!seen.insert(key).second) return "duplicate CVSS metric " + key;
    }
    for (auto base : kBase) {
        if (!seen.contains(base)) return "missing CVSS base metric " + std::string(base);
    }
    return std::nullopt;
}

bool reserved_ipv4(const std::array<int, 4>& o) noexcept {
    return o[0] == 10 || o[0] == 127 || (o[0] == 172 && o[1] >= 16 && o[1] <= 31) || (o[0] == 192 && o[1] == 168);
}

std::optional<std::string> in_transcript(const Indicator& i, const Transcript* t) {
    if (!t) return std::nullopt;
    if (i.kind == IndicatorKind::Port) {
        if (auto hit = t->find_item(":" + i.normalized)) return hit;
        return t->find_item("port " + i.normalized);
    }
    if (auto hit = t->find_item(i.normalized)) return hit;
    return t->find_item(i.raw);
}

ValidatedIndicator from_knowledge_or_transcript(const Indicator& i, const kb::KnowledgeStore& knowledge,
                                                const Transcript* t) {
    using kb::CollectionKind;
    auto cite = [&](const kb::KnowledgeDoc& d, const char* why) {
        return verified(i, "kb:" + d.doc_id, std::string(why) + ": " + d.title);
    };
    switch (i.kind) {
    case IndicatorKind::MitreTechnique: {
        if (auto d = knowledge.lookup(CollectionKind::AttackTechniques, i.normalized)) return cite(*d, "ATT&CK");
        auto dot = i.normalized.find('.');
        if (dot != std::string::npos) {
            if (auto d = knowledge.lookup(CollectionKind::AttackTechniques, i.normalized.substr(0, dot))) {
                return cite(*d, "parent ATT&CK technique");
            }
        }
        break;
    }
    case IndicatorKind::Cwe:
        if (auto d = knowledge.lookup(CollectionKind::CweWeaknesses, i.normalized)) return cite(*d, "CWE");
        break;
    case IndicatorKind::FileHash: {
        auto docs = knowledge.find_by_tag(CollectionKind::FamilyIntel, i.normalized);
        if (!docs.empty()) return cite(docs.front(), "family intelligence");
        break;
    }
    default: break;
    }
    if (auto item = in_transcript(i, t)) return verified(i, *item, "present in static-analysis transcript");
    return unverified(i, "no supporting evidence");
}

}  // namespace

std::string_view to_string(IndicatorKind kind) noexcept {
    switch (kind) {
    case IndicatorKind::MitreTechnique: return "mitre_technique";
    case IndicatorKind::Cve: return "cve";
    case IndicatorKind::Cwe: return "cwe";
    case IndicatorKind::Capec: return "capec";
    case IndicatorKind::CvssVector: return "cvss_vector";
    case IndicatorKind::IpAddress: return "ip_address";
    case IndicatorKind::FileHash: return "file_hash";
    case IndicatorKind::Url: return "url";
    case IndicatorKind::Email: return "email";
    case IndicatorKind::Port: return "port";
    }
    return "unknown";
}

std::optional<IndicatorKind> parse_kind(std::string_view name) {
    for (auto k : kAllKinds) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

std::string_view to_string(ProvenanceLabel label) noexcept {
    switch (label) {
    case ProvenanceLabel::Verified: return "verified";
    case ProvenanceLabel::ValidUnverified: return "valid_unverified";
    case ProvenanceLabel::Invalid: return "invalid";
    }
    return "invalid";
}

std::string_view tag_of(ProvenanceLabel label) noexcept {
    switch (label) {
    case ProvenanceLabel::Verified: return "verified";
    case ProvenanceLabel::ValidUnverified: return "unverified";
    case ProvenanceLabel::Invalid: return "invalid";
    }
    return "invalid";
}

std::optional<Indicator> match_at(std::string_view text, std::size_t pos) {
    std::size_t best_len = 0;
    IndicatorKind best_kind = IndicatorKind::MitreTechnique;
    for (auto kind : kAllKinds) {
        std::size_t len = match_kind(kind, text, pos);
        if (len > best_len) {
            best_len = len;
            best_kind = kind;
        }
    }
    if (best_len == 0) return std::nullopt;
    std::string raw(text.substr(pos, best_len));
    return Indicator{best_kind, raw, normalize(best_kind, raw), {pos, pos + best_len}};
}

std::vector<Indicator> extract_indicators(std::string_view text) {
    std::vector<Indicator> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        if (auto hit = match_at(text, pos)) {
            pos = hit->span.end;
            out.push_back(std::move(*hit));
        } else {
            ++pos;
        }
    }
    return out;
}

std::string_view hash_algorithm(const Indicator& hash) noexcept {
    switch (hash.normalized.size()) {
    case 32: return "md5";
    case 40: return "sha1";
    case 64: return "sha256";
    default: return "unknown";
    }
}

ValidatedIndicator validate_indicator(const Indicator& i, const kb::KnowledgeStore& knowledge,
                                      const Transcript* transcript, const ValidationOptions& options) {
    if (!knowledge.is_open()) throw Error(ErrorCode::KnowledgeUnavailable, "knowledge store is closed");
    switch (i.kind) {
    case IndicatorKind::IpAddress: {
        auto parts = text::split(i.normalized, '.');
        std::array<int, 4> octets{};
        for (std::size_t k = 0; k < 4; ++k) {
            octets[k] = std::stoi(parts[k]);
            if (octets[k] > 255) return invalid(i, "octet out of range");
        }
        if (reserved_ipv4(octets)) return unverified(i, "reserved range");
        break;
    }
    case IndicatorKind::Port: {
        const auto value = std::stoull(i.normalized);
        if (value < 1 || value > 65535) return invalid(i, "port out of range");
        break;
    }
    case IndicatorKind::Cve: {
        const int year = std::stoi(i.normalized.substr(4, 4));
        const int now = options.reference_year > 0 ? options.reference_year : current_year();
        if (year < 1999 || year > now + 1) return invalid(i, "CVE year out of range");
        break;
    }
    case IndicatorKind::CvssVector:
        if (auto why = cvss_violation(i.normalized)) return invalid(i, *why);
        break;
    default: break;
    }
    return from_knowledge_or_transcript(i, knowledge, transcript);
}

ValidationBatch validate_all(std::span<const Indicator> indicators, const kb::KnowledgeStore& knowledge,
                             const Transcript* transcript, const ValidationOptions& options) {
    ValidationBatch batch;
    for (const auto& i : indicators) {
        try {
            batch.indicators.push_back(validate_indicator(i, knowledge, transcript, options));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::KnowledgeUnavailable) throw;
            batch.knowledge_degraded = true;
            batch.indicators.push_back(unverified(i, "knowledge store unavailable"));
        }
    }
    return batch;
}

std::string annotate_response(std::string_view text, std::span<const ValidatedIndicator> validated) {
    std::vector<const ValidatedIndicator*> order;
    for (const auto& v : validated) order.push_back(&v);
    std::sort(order.begin(), order.end(),
              [](auto* a, auto* b) { return a->indicator.span.start < b->indicator.span.start; });
    std::string out;
    std::size_t cursor = 0;
    for (const auto* v : order) {
        const auto& span = v->indicator.span;
        if (span.start < cursor || span.end < span.start || span.end > text.size()) {
            throw Error(ErrorCode::SpanMismatch, "indicator spans overlap or exceed the text");
        }
        if (text.substr(span.start, span.end - span.start) != v->indicator.raw) {
            throw Error(ErrorCode::SpanMismatch, "text changed since extraction at offset " + std::to_string(span.start));
        }
        out.append(text.substr(cursor, span.end - cursor));
        out.append(" [");
        out.append(tag_of(v->label));
        out.append("]");
        cursor = span.end;
    }
    out.append(text.substr(cursor));
    return out;
}

std::string strip_provenance_tags(std::string_view annotated) {
    std::string out(annotated);
    for (std::string_view tag : {" [verified]", " [unverified]", " [invalid]"}) {
        std::size_t pos = 0;
        while ((pos = out.find(tag, pos)) != std::string::npos) out.erase(pos, tag.size());
    }
    return out;
}

nlohmann::json to_json(const Indicator& i) {
    return {{"kind", to_string(i.kind)},
            {"raw", i.raw},
            {"normalized", i.normalized},
            {"span", {i.span.start, i.span.end}}};
}

nlohmann::json to_json(const ValidatedIndicator& v) {
    auto j = to_json(v.indicator);
    j["label"] = to_string(v.label);
    j["evidence_ref"] = v.evidence_ref ? nlohmann::json(*v.evidence_ref) : nlohmann::json(nullptr);
    j["reason"] = v.reason ? nlohmann::json(*v.reason) : nlohmann::json(nullptr);
    return j;
}

}  // namespace triage::ioc
