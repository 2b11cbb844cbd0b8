#include "triage/attrib.hpp"

#include "triage/digest.hpp"
#include "triage/error.hpp"
#include "triage/text.hpp"

#include <algorithm>

namespace triage::attrib {

std::string_view to_string(LabelSource s) noexcept {
    switch (s) {
    case LabelSource::LocalGroundTruth: return "local_ground_truth";
    case LabelSource::CtiReport: return "cti_report";
    case LabelSource::ImphashMatch: return "imphash_match";
    case LabelSource::Unknown: return "unknown";
    }
    return "unknown";
}

nlohmann::json to_json(const FamilyLabel& label) {
    nlohmann::json j = {{"family", label.family},
                        {"category", label.category},
                        {"source", to_string(label.source)},
                        {"vendor_labels", label.vendor_labels},
                        {"cti_degraded", label.cti_degraded}};
    j["confidence"] = label.confidence ? nlohmann::json(*label.confidence) : nlohmann::json(nullptr);
    return j;
}

Taxonomy::Taxonomy(std::map<std::string, std::string> aliases, std::set<std::string> generic_tokens,
                   std::vector<std::string> categories, std::map<std::string, std::string> family_categories)
    : aliases_(std::move(aliases)),
      generic_(std::move(generic_tokens)),
      categories_(std::move(categories)),
      family_categories_(std::move(family_categories)) {
    for (const auto& [family, category] : family_categories_) {
        if (!is_category(category)) {
            throw Error(ErrorCode::SchemaViolation, "family " + family + " maps to unlisted category " + category);
        }
    }
}

Taxonomy Taxonomy::load(const std::filesystem::path& dir) {
    auto read = [&](const char* name) { return nlohmann::json::parse(text::read_file((dir / name).string())); };
    auto aliases = read("aliases.json").at("aliases").get<std::map<std::string, std::string>>();
    auto generic = read("generic_tokens.json").at("generic_tokens").get<std::set<std::string>>();
    auto cats = read("categories.json");
    return Taxonomy(std::move(aliases), std::move(generic), cats.at("categories").get<std::vector<std::string>>(),
                    cats.at("families").get<std::map<std::string, std::string>>());
}

const Taxonomy& Taxonomy::builtin() {
    static const Taxonomy kBuiltin = load(std::filesystem::path(TRIAGE_DATA_DIR) / "attrib");
    return kBuiltin;
}

std::vector<std::string> Taxonomy::label_tokens(std::string_view label) const {
    std::vector<std::string> out;
    for (auto& part : text::split(text::lower(label), ' ')) {
        std::string cur;
        auto flush = [&] {
            bool digits = !cur.empty() && std::all_of(cur.begin(), cur.end(), text::is_digit);
            if (cur.size() >= 3 && !digits) {
                auto alias = aliases_.find(cur);
                std::string token = alias == aliases_.end() ? cur : alias->second;
                if (!generic_.contains(token) && std::find(out.begin(), out.end(), token) == out.end()) {
                    out.push_back(std::move(token));
                }
            }
            cur.clear();
        };
        for (char c : part) {
            if (text::is_alnum(c)) {
                cur.push_back(c);
            } else {
                flush();
            }
        }
        flush();
    }
    return out;
}

std::string Taxonomy::normalize_family(const std::vector<std::string>& vendor_labels) const {
    if (vendor_labels.empty()) throw Error(ErrorCode::EmptyList, "no vendor labels");
    std::map<std::string, std::size_t> votes;
    for (const auto& label : vendor_labels) {
        for (auto& token : label_tokens(label)) ++votes[token];
    }
    if (votes.empty()) throw Error(ErrorCode::NoSignal, "vendor labels carry only generic tokens");
    // std::map iterates in ascending order, so strict > keeps the smallest name on ties.
    const std::pair<const std::string, std::size_t>* best = nullptr;
    for (const auto& entry : votes) {
        if (!best || entry.second > best->second) best = &entry;
    }
    return best->first;
}

std::string Taxonomy::map_category(std::string_view family) const {
    auto it = family_categories_.find(std::string(family));
    return it == family_categories_.end() ? "unknown" : it->second;
}

bool Taxonomy::is_category(std::string_view category) const {
    return std::find(categories_.begin(), categories_.end(), category) != categories_.end();
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    auto j = nlohmann::json::parse(text::read_file(path.string()));
    GroundTruth out;
    for (const auto& [sha, entry] : j.items()) {
        if (sha.size() != 64 || !digest::is_hex(sha)) {
            throw Error(ErrorCode::SchemaViolation, "ground truth key is not a sha256: " + sha);
        }
        GroundTruthEntry e{entry.at("family").get<std::string>(), entry.value("category", "unknown"), std::nullopt};
        if (entry.contains("imphash")) e.imphash = entry.at("imphash").get<std::string>();
        out.emplace(text::lower(sha), std::move(e));
    }
    return out;
}

FixtureCtiClient::FixtureCtiClient(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::optional<std::vector<std::string>> FixtureCtiClient::vendor_labels(const std::string& sha256) {
    ++calls_;
    if (!std::filesystem::is_directory(dir_)) {
        throw Error(ErrorCode::CtiUnavailable, "CTI fixture directory missing: " + dir_.string());
    }
    auto path = dir_ / (text::lower(sha256) + ".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        auto j = nlohmann::json::parse(text::read_file(path.string()));
        return j.at("vendor_labels").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CtiUnavailable, "unreadable CTI report: " + std::string(e.what()));
    }
}

void ImphashTable::add(const std::string& imphash, const std::string& family) {
    auto key = text::lower(imphash);
    auto [it, inserted] = table_.emplace(key, family);
    if (!inserted && it->second != family) it->second = std::nullopt;
}

ImphashTable ImphashTable::from_ground_truth(const GroundTruth& truth) {
    ImphashTable t;
    for (const auto& [_, entry] : truth) {
        if (entry.imphash && entry.family != "unknown") t.add(*entry.imphash, entry.family);
    }
    return t;
}

std::optional<std::string> ImphashTable::lookup(const std::string& imphash) const {
    auto it = table_.find(text::lower(imphash));
    if (it == table_.end()) return std::nullopt;
    return it->second;
}

FamilyLabel label_sample(const std::string& sha256, const std::optional<std::string>& imphash,
                         const LabelingContext& ctx) {
    if (sha256.size() != 64 || !digest::is_hex(sha256)) {
        throw Error(ErrorCode::Precondition, "sha256 must be 64 hex characters");
    }
    const Taxonomy& tax = ctx.taxonomy ? *ctx.taxonomy : Taxonomy::builtin();
    const std::string sha = text::lower(sha256);
    FamilyLabel label;

    if (ctx.ground_truth) {
        if (auto it = ctx.ground_truth->find(sha); it != ctx.ground_truth->end()) {
            label.family = it->second.family;
            label.category = tax.is_category(it->second.category) ? it->second.category : tax.map_category(label.family);
            label.source = LabelSource::LocalGroundTruth;
            return label;
        }
    }

    if (ctx.cti) {
        try {
            if (auto labels = ctx.cti->vendor_labels(sha)) {
                label.vendor_labels = *labels;
                if (!labels->empty()) {
                    try {
                        label.family = tax.normalize_family(*labels);
                        label.category = tax.map_category(label.family);
                        label.source = LabelSource::CtiReport;
                        return label;
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::NoSignal) throw;
                    }
                }
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::CtiUnavailable) throw;
            label.cti_degraded = true;
        }
    }

    if (imphash && ctx.imphash_table) {
        if (auto family = ctx.imphash_table->lookup(*imphash)) {
            label.family = *family;
            label.category = tax.map_category(*family);
            label.source = LabelSource::ImphashMatch;
            label.confidence = "heuristic";
            return label;
        }
    }

    label.family = "unknown";
    label.category = "unknown";
    label.source = LabelSource::Unknown;
    return label;
}

}  // namespace triage::attrib
