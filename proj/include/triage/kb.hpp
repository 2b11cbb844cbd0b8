#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace triage::kb {

enum class CollectionKind { AttackTechniques, CweWeaknesses, WinApiBehavior, FamilyIntel };

inline constexpr std::array<CollectionKind, 4> kAllCollections = {
    CollectionKind::AttackTechniques, CollectionKind::CweWeaknesses,
    CollectionKind::WinApiBehavior, CollectionKind::FamilyIntel};

std::string_view to_string(CollectionKind kind) noexcept;

/// Accepts the canonical names ("attack_techniques", ...) and short
/// aliases ("attack", "cwe", "winapi", "family").
std::optional<CollectionKind> parse_collection(std::string_view name);

struct KnowledgeDoc {
    std::string doc_id;
    CollectionKind collection = CollectionKind::AttackTechniques;
    std::string key;
    std::string title;
    std::string body;
    std::vector<std::string> tags;

    bool operator==(const KnowledgeDoc&) const = default;
};

nlohmann::json to_json(const KnowledgeDoc& doc);

/// Parses one ingest line. Throws SchemaViolation naming the offending field.
KnowledgeDoc doc_from_json(const nlohmann::json& j, CollectionKind expected);

/// Immutable view of one collection. Docs are ordered by doc_id.
struct Collection {
    CollectionKind kind = CollectionKind::AttackTechniques;
    std::vector<KnowledgeDoc> docs;
    std::unordered_map<std::string, std::size_t> by_key;  // case-folded key
    std::unordered_map<std::string, std::size_t> by_id;
    std::unordered_map<std::string, std::vector<std::size_t>> by_tag;  // case-folded tag
    std::string fingerprint;  // sha256 of the canonical serialization

    const KnowledgeDoc* find_key(std::string_view key) const;
    const KnowledgeDoc* find_id(std::string_view doc_id) const;
};

struct IngestResult {
    std::size_t count = 0;
    std::size_t duplicates_replaced = 0;
};

/// The four knowledge collections. Readers grab an immutable snapshot;
/// ingestion builds a new snapshot and swaps it in under the writer lock.
/// With a directory, each collection persists as `<dir>/<kind>.jsonl`
/// rewritten through an atomic rename.
class KnowledgeStore {
public:
    KnowledgeStore();
    explicit KnowledgeStore(std::filesystem::path dir);

    IngestResult ingest_collection(const std::filesystem::path& path, CollectionKind kind);
    IngestResult ingest_lines(std::string_view jsonl, CollectionKind kind);

    std::optional<KnowledgeDoc> lookup(CollectionKind kind, std::string_view key) const;
    std::vector<KnowledgeDoc> find_by_tag(CollectionKind kind, std::string_view tag) const;
    std::optional<KnowledgeDoc> find_doc(std::string_view doc_id) const;

    std::shared_ptr<const Collection> snapshot(CollectionKind kind) const;
    std::size_t size(CollectionKind kind) const;
    std::size_t size() const;

    /// Total (collection, key) collisions resolved last-wins since construction.
    std::uint64_t duplicate_warnings() const noexcept { return duplicate_warnings_.load(); }

    void close() noexcept { open_.store(false); }
    bool is_open() const noexcept { return open_.load(); }

    const std::optional<std::filesystem::path>& directory() const noexcept { return dir_; }

private:
    void require_open() const;
    void persist(const Collection& c) const;

    std::optional<std::filesystem::path> dir_;
    mutable std::mutex writer_;
    mutable std::mutex swap_;
    std::array<std::shared_ptr<const Collection>, 4> collections_;
    std::atomic<bool> open_{true};
    std::atomic<std::uint64_t> duplicate_warnings_{0};
};

std::shared_ptr<const Collection> build_collection(CollectionKind kind, std::vector<KnowledgeDoc> docs);

}  // namespace triage::kb
