#include "triage/kb.hpp"

#include "triage/digest.hpp"
#include "triage/error.hpp"
#include "triage/text.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace triage::kb {
namespace {

constexpr std::size_t index_of(CollectionKind kind) { return static_cast<std::size_t>(kind); }

[[noreturn]] void schema_error(std::size_t line, const std::string& what) {
    throw Error(ErrorCode::SchemaViolation, "line " + std::to_string(line) + ": " + what);
}

std::string serialize(const std::vector<KnowledgeDoc>& docs) {
    std::string out;
    for (const auto& d : docs) {
        out += to_json(d).dump();
        out += '\n';
    }
    return out;
}

}  // namespace

std::string_view to_string(CollectionKind kind) noexcept {
    switch (kind) {
    case CollectionKind::AttackTechniques: return "attack_techniques";
    case CollectionKind::CweWeaknesses: return "cwe_weaknesses";
    case CollectionKind::WinApiBehavior: return "winapi_behavior";
    case CollectionKind::FamilyIntel: return "family_intel";
    }
    return "attack_techniques";
}

std::optional<CollectionKind> parse_collection(std::string_view name) {
    const std::string n = text::lower(name);
    if (n == "attack_techniques" || n == "attack") return CollectionKind::AttackTechniques;
    if (n == "cwe_weaknesses" || n == "cwe") return CollectionKind::CweWeaknesses;
    if (n == "winapi_behavior" || n == "winapi") return CollectionKind::WinApiBehavior;
    if (n == "family_intel" || n == "family") return CollectionKind::FamilyIntel;
    return std::nullopt;
}

nlohmann::json to_json(const KnowledgeDoc& doc) {
    return {{"doc_id", doc.doc_id}, {"collection", to_string(doc.collection)}, {"key", doc.key},
            {"title", doc.title},   {"body", doc.body},                        {"tags", doc.tags}};
}

KnowledgeDoc doc_from_json(const nlohmann::json& j, CollectionKind expected) {
    static const std::set<std::string> kFields = {"doc_id", "collection", "key", "title", "body", "tags"};
    if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, "document is not a JSON object");
    for (const auto& [name, _] : j.items()) {
        if (!kFields.contains(name)) throw Error(ErrorCode::SchemaViolation, "unknown field '" + name + "'");
    }
    auto field = [&](const char* name, bool non_empty) {
        if (!j.contains(name) || !j[name].is_string()) {
            throw Error(ErrorCode::SchemaViolation, std::string("field '") + name + "' must be a string");
        }
        auto v = j[name].get<std::string>();
        if (non_empty && text::trim(v).empty()) {
            throw Error(ErrorCode::SchemaViolation, std::string("field '") + name + "' must be non-empty");
        }
        return v;
    };
    KnowledgeDoc doc;
    doc.doc_id = field("doc_id", true);
    auto kind = parse_collection(field("collection", true));
    if (!kind || *kind != expected) {
        throw Error(ErrorCode::SchemaViolation,
                    "field 'collection' must be '" + std::string(to_string(expected)) + "'");
    }
    doc.collection = *kind;
    doc.key = field("key", true);
    doc.title = field("title", false);
    doc.body = field("body", true);
    if (!j.contains("tags") || !j["tags"].is_array()) {
        throw Error(ErrorCode::SchemaViolation, "field 'tags' must be an array of strings");
    }
    for (const auto& t : j["tags"]) {
        if (!t.is_string()) throw Error(ErrorCode::SchemaViolation, "field 'tags' must be an array of strings");
        doc.tags.push_back(t.get<std::string>());
    }
    return doc;
}

const KnowledgeDoc* Collection::find_key(std::string_view key) const {
    auto it = by_key.find(text::lower(key));
    return it == by_key.end() ? nullptr : &docs[it->second];
}

const KnowledgeDoc* Collection::find_id(std::string_view doc_id) const {
    auto it = by_id.find(std::string(doc_id));
    return it == by_id.end() ? nullptr : &docs[it->second];
}

std::shared_ptr<const Collection> build_collection(CollectionKind kind, std::vector<KnowledgeDoc> docs) {
    auto c = std::make_shared<Collection>();
    c->kind = kind;
    std::sort(docs.begin(), docs.end(), [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
    c->docs = std::move(docs);
    for (std::size_t i = 0; i < c->docs.size(); ++i) {
        const auto& d = c->docs[i];
        c->by_key.emplace(text::lower(d.key), i);
        c->by_id.emplace(d.doc_id, i);
        for (const auto& t : d.tags) c->by_tag[text::lower(t)].push_back(i);
    }
    c->fingerprint = digest::sha256_hex(serialize(c->docs));
    return c;
}

KnowledgeStore::KnowledgeStore() {
    for (auto kind : kAllCollections) collections_[index_of(kind)] = build_collection(kind, {});
}

KnowledgeStore::KnowledgeStore(std::filesystem::path dir) : KnowledgeStore() {
    std::filesystem::create_directories(dir);
    dir_ = std::move(dir);
    for (auto kind : kAllCollections) {
        auto file = *dir_ / (std::string(to_string(kind)) + ".jsonl");
        if (std::filesystem::exists(file)) {
            // Persisted files are already compacted; reload without re-persisting.
            std::vector<KnowledgeDoc> docs;
            std::size_t line_no = 0;
            for (const auto& line : text::split(text::read_file(file.string()), '\n')) {
                ++line_no;
                if (text::trim(line).empty()) continue;
                try {
                    docs.push_back(doc_from_json(nlohmann::json::parse(line), kind));
                } catch (const nlohmann::json::exception& e) {
                    schema_error(line_no, e.what());
                }
            }
            collections_[index_of(kind)] = build_collection(kind, std::move(docs));
        }
    }
}

void KnowledgeStore::require_open() const {
    if (!open_.load()) throw Error(ErrorCode::KnowledgeUnavailable, "knowledge store is closed");
}

IngestResult KnowledgeStore::ingest_collection(const std::filesystem::path& path, CollectionKind kind) {
    return ingest_lines(text::read_file(path.string()), kind);
}

IngestResult KnowledgeStore::ingest_lines(std::string_view jsonl, CollectionKind kind) {
    require_open();
    std::vector<KnowledgeDoc> incoming;
    std::size_t line_no = 0;
    for (const auto& line : text::split(jsonl, '\n')) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            schema_error(line_no, "not valid JSON");
        }
        try {
            incoming.push_back(doc_from_json(j, kind));
        } catch (const Error& e) {
            schema_error(line_no, e.what());
        }
    }

    std::lock_guard writer(writer_);
    auto current = snapshot(kind);
    std::map<std::string, KnowledgeDoc> by_key;
    for (const auto& d : current->docs) by_key.emplace(text::lower(d.key), d);
    IngestResult result{incoming.size(), 0};
    std::set<std::string> batch_keys;
    for (auto& d : incoming) {
        auto key = text::lower(d.key);
        const bool repeated_in_batch = !batch_keys.insert(key).second;
        auto it = by_key.find(key);
        if (it != by_key.end()) {
            if (repeated_in_batch || !(it->second == d)) ++result.duplicates_replaced;
            it->second = std::move(d);
        } else {
            by_key.emplace(std::move(key), std::move(d));
        }
    }
    std::vector<KnowledgeDoc> merged;
    std::set<std::string> ids;
    for (auto& [_, d] : by_key) {
        if (!ids.insert(d.doc_id).second) {
            throw Error(ErrorCode::SchemaViolation, "doc_id '" + d.doc_id + "' is used by two keys");
        }
        merged.push_back(std::move(d));
    }
    auto next = build_collection(kind, std::move(merged));
    persist(*next);
    {
        std::lock_guard lock(swap_);
        collections_[index_of(kind)] = std::move(next);
    }
    duplicate_warnings_ += result.duplicates_replaced;
    return result;
}

void KnowledgeStore::persist(const Collection& c) const {
    if (!dir_) return;
    auto file = *dir_ / (std::string(to_string(c.kind)) + ".jsonl");
    text::write_file_atomic(file.string(), serialize(c.docs));
}

std::shared_ptr<const Collection> KnowledgeStore::snapshot(CollectionKind kind) const {
    std::lock_guard lock(swap_);
    return collections_[index_of(kind)];
}

std::optional<KnowledgeDoc> KnowledgeStore::lookup(CollectionKind kind, std::string_view key) const {
    require_open();
    auto c = snapshot(kind);
    if (const auto* d = c->find_key(key)) return *d;
    return std::nullopt;
}

std::vector<KnowledgeDoc> KnowledgeStore::find_by_tag(CollectionKind kind, std::string_view tag) const {
    require_open();
    auto c = snapshot(kind);
    std::vector<KnowledgeDoc> out;
    auto it = c->by_tag.find(text::lower(tag));
    if (it == c->by_tag.end()) return out;
    for (auto i : it->second) out.push_back(c->docs[i]);
    return out;
}

std::optional<KnowledgeDoc> KnowledgeStore::find_doc(std::string_view doc_id) const {
    require_open();
    for (auto kind : kAllCollections) {
        auto c = snapshot(kind);
        if (const auto* d = c->find_id(doc_id)) return *d;
    }
    return std::nullopt;
}

std::size_t KnowledgeStore::size(CollectionKind kind) const { return snapshot(kind)->docs.size(); }

std::size_t KnowledgeStore::size() const {
    std::size_t n = 0;
    for (auto kind : kAllCollections) n += size(kind);
    return n;
}

}  // namespace triage::kb
