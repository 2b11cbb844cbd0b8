#pragma once

// Hybrid lexical/dense retrieval over the knowledge collections:
// BM25 and cosine search per collection, reciprocal rank fusion, pairwise
// rerank, top-k, transcript enrichment, then dedup and a confidence floor.

#include "triage/kb.hpp"
#include "triage/transcript.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace triage::retrieve {

// ---- tokens and chunks -------------------------------------------------

struct Token {
    std::string text;
    std::size_t start = 0;
    std::size_t end = 0;
};

/// Lowercase alphanumeric runs of length >= 2. Indicator-shaped tokens
/// (technique IDs, CVE/CWE/CAPEC IDs, IPs, hashes, URLs, emails) are kept
/// whole instead of being split at punctuation.
std::vector<Token> tokenize_with_offsets(std::string_view text);
std::vector<std::string> tokenize(std::string_view text);

struct Chunk {
    std::string doc_id;
    std::size_t seq = 0;
    std::vector<std::string> tokens;
    std::size_t char_start = 0;
    std::size_t char_end = 0;
};

inline constexpr std::size_t kDefaultWindow = 512;
inline constexpr std::size_t kDefaultStride = 256;

/// Number of windows for n tokens: max(1, ceil((n - window) / stride) + 1).
std::size_t chunk_count(std::size_t n_tokens, std::size_t window, std::size_t stride);

/// Sliding windows over the token stream. Throws Precondition unless
/// window >= stride >= 1. Empty text yields one empty chunk.
std::vector<Chunk> chunk_text(std::string_view text, std::size_t window = kDefaultWindow,
                              std::size_t stride = kDefaultStride, std::string doc_id = {});

// ---- embeddings --------------------------------------------------------

inline constexpr std::size_t kEmbeddingDim = 768;

struct Embedding {
    std::vector<double> vector;
    double norm = 0.0;

    static Embedding from(std::vector<double> values);
    std::size_t dimension() const noexcept { return vector.size(); }
};

/// Component-wise mean. Throws EmptyList / DimensionMismatch.
Embedding mean_pool(std::span<const Embedding> vectors);

/// 0 when either side has zero norm.
double cosine(const Embedding& a, const Embedding& b);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual Embedding embed(std::string_view text) const = 0;
    virtual std::string name() const = 0;
};

/// Feature hashing of each token plus its boundary-padded character
/// trigrams into 768 signed buckets, L2-normalized.
class HashedTrigramEmbedder final : public Embedder {
public:
    Embedding embed(std::string_view text) const override;
    std::string name() const override { return "hashed-trigram-768"; }
};

/// Chunk with the sliding window, embed each chunk, mean-pool.
Embedding embed_document(const Embedder& embedder, std::string_view text, std::size_t window = kDefaultWindow,
                         std::size_t stride = kDefaultStride);

// ---- ranked lists ------------------------------------------------------

enum class Channel { Lexical, Dense, Fused, Reranked };
std::string_view to_string(Channel c) noexcept;

struct ScoredHit {
    std::string doc_id;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based
    Channel channel = Channel::Lexical;
};

/// Sorts by score descending, doc_id ascending, and assigns ranks 1..n.
void rank_hits(std::vector<ScoredHit>& hits, Channel channel);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

class Bm25Index {
public:
    Bm25Index() = default;
    Bm25Index(std::vector<std::string> doc_ids, const std::vector<std::vector<std::string>>& doc_tokens,
              Bm25Params params = {});

    /// Top-k docs with positive score; query duplicates count once each.
    std::vector<ScoredHit> search(std::span<const std::string> query, std::size_t k) const;
    double idf(const std::string& term) const;
    std::size_t size() const noexcept { return doc_ids_.size(); }

private:
    struct Posting {
        std::size_t doc;
        std::size_t tf;
    };
    std::vector<std::string> doc_ids_;
    std::vector<std::size_t> doc_len_;
    double avg_len_ = 0.0;
    Bm25Params params_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

class DenseIndex {
public:
    DenseIndex() = default;
    DenseIndex(std::vector<std::string> doc_ids, std::vector<Embedding> vectors);

    /// Exact cosine scan, top-k.
    std::vector<ScoredHit> search(const Embedding& query, std::size_t k) const;
    const std::vector<Embedding>& vectors() const noexcept { return vectors_; }
    std::size_t size() const noexcept { return doc_ids_.size(); }

private:
    std::vector<std::string> doc_ids_;
    std::vector<Embedding> vectors_;
};

/// Reciprocal rank fusion: score(d) = sum over lists of 1 / (k_const + rank).
std::vector<ScoredHit> rrf(std::span<const ScoredHit> list_a, std::span<const ScoredHit> list_b,
                           double k_const = 60.0);

class PairScorer {
public:
    virtual ~PairScorer() = default;
    virtual double score(std::span<const std::string> query, std::span<const std::string> doc) const = 0;
};

/// |Q ∩ D| / |Q ∪ D| over token sets, with kStopwords removed from both.
class JaccardScorer final : public PairScorer {
public:
    double score(std::span<const std::string> query, std::span<const std::string> doc) const override;
};

/// Function words ignored by JaccardScorer.
bool is_stopword(std::string_view token);

using DocTokens = std::function<const std::vector<std::string>*(const std::string& doc_id)>;

/// Re-scores hits with `scorer`; stable on ties. A throwing scorer
/// surfaces as Error{ScorerFailure}.
std::vector<ScoredHit> rerank(std::span<const std::string> query, std::span<const ScoredHit> hits,
                              const DocTokens& doc_tokens, const PairScorer& scorer);

nlohmann::json to_json(const ScoredHit& hit);

// ---- context bundle ----------------------------------------------------

enum class EvidenceSource { Knowledge, CodeEvidence, SecurityEvidence };
std::string_view to_string(EvidenceSource s) noexcept;

struct EvidenceItem {
    EvidenceSource source = EvidenceSource::Knowledge;
    std::string ref;  // knowledge doc_id or transcript item id
    std::string text;
    double confidence = 0.0;
    std::optional<kb::CollectionKind> collection;
};

struct ContextBundle {
    std::vector<EvidenceItem> evidence;
    std::map<std::string, std::string> status;  // per collection: ok / index_not_built / rerank_degraded
};

nlohmann::json to_json(const ContextBundle& bundle);

struct RetrievalConfig {
    double k_const = 60.0;
    std::size_t top_k = 5;
    std::size_t candidate_k = 20;
    Bm25Params bm25;
    double near_duplicate_cosine = 0.95;
    double confidence_floor = 0.05;  // fraction of the bundle's max confidence
    std::size_t window = kDefaultWindow;
    std::size_t stride = kDefaultStride;
    std::size_t excerpt_chars = 800;
};

/// Exact normalized-text dedup, then cosine near-duplicate dedup, keeping
/// the highest-confidence member of each group; then drops items below
/// floor * max confidence. Survivors keep their input order.
std::vector<EvidenceItem> dedup_and_filter(std::vector<EvidenceItem> items, const Embedder& embedder,
                                           const RetrievalConfig& cfg);

/// Code evidence (decompiled C, assembly, CFG/FCG) from a transcript.
std::vector<EvidenceItem> code_evidence(const Transcript& t, std::size_t excerpt_chars);
/// Security evidence (suspicious APIs, capability matches, PE metadata).
std::vector<EvidenceItem> security_evidence(const Transcript& t);

/// One collection's searchable snapshot.
struct CollectionIndex {
    kb::CollectionKind kind = kb::CollectionKind::AttackTechniques;
    std::string fingerprint;
    std::string embedder;
    std::vector<std::string> doc_ids;
    std::vector<std::string> texts;
    std::vector<std::vector<std::string>> tokens;
    Bm25Index bm25;
    DenseIndex dense;
    std::unordered_map<std::string, std::size_t> position;

    const std::vector<std::string>* tokens_of(const std::string& doc_id) const;
};

/// Text indexed for a knowledge document.
std::string index_text(const kb::KnowledgeDoc& doc);

class Retriever {
public:
    explicit Retriever(const kb::KnowledgeStore& store, std::shared_ptr<const Embedder> embedder = nullptr,
                       RetrievalConfig cfg = {});

    /// Builds (or rebuilds) a collection snapshot from the store.
    void build(kb::CollectionKind kind);
    void build_all();
    /// Built and still matching the store's current contents.
    bool is_fresh(kb::CollectionKind kind) const;

    /// Writes `<dir>/<kind>.index.json`; load_index accepts it only while
    /// the store fingerprint still matches.
    void save_index(kb::CollectionKind kind, const std::filesystem::path& dir) const;
    bool load_index(kb::CollectionKind kind, const std::filesystem::path& dir);

    std::vector<ScoredHit> bm25_search(std::span<const std::string> query, kb::CollectionKind kind,
                                       std::size_t k) const;
    std::vector<ScoredHit> dense_search(const Embedding& query, kb::CollectionKind kind, std::size_t k) const;
    std::vector<ScoredHit> rerank(std::span<const std::string> query, std::span<const ScoredHit> hits,
                                  kb::CollectionKind kind) const;

    ContextBundle hybrid_retrieve(std::string_view query, const Transcript* transcript,
                                  std::span<const kb::CollectionKind> collections) const;
    ContextBundle hybrid_retrieve(std::string_view query, const Transcript* transcript = nullptr) const;

    void set_scorer(std::shared_ptr<const PairScorer> scorer);
    const Embedder& embedder() const noexcept { return *embedder_; }
    const RetrievalConfig& config() const noexcept { return cfg_; }
    std::shared_ptr<const CollectionIndex> index(kb::CollectionKind kind) const;

private:
    std::shared_ptr<const CollectionIndex> fresh_index(kb::CollectionKind kind) const;

    const kb::KnowledgeStore& store_;
    std::shared_ptr<const Embedder> embedder_;
    std::shared_ptr<const PairScorer> scorer_;
    RetrievalConfig cfg_;
    mutable std::mutex mu_;
    std::array<std::shared_ptr<const CollectionIndex>, 4> indexes_;
};

}  // namespace triage::retrieve
