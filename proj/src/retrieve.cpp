#include "triage/retrieve.hpp"

#include "triage/error.hpp"
#include "triage/ioc.hpp"
#include "triage/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace triage::retrieve {
namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void add_feature(std::vector<double>& v, std::string_view feature, double weight) {
    auto h = fnv1a(feature);
    double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % v.size()] += sign * weight;
}

std::string excerpt(std::string_view s, std::size_t max_chars) {
    if (s.size() <= max_chars) return std::string(s);
    auto cut = s.substr(0, max_chars);
    auto space = cut.find_last_of(" \n\t");
    if (space != std::string_view::npos && space > max_chars / 2) cut = cut.substr(0, space);
    return std::string(cut) + " ...";
}

std::string normalized_text(std::string_view s) { return text::lower(text::collapse_whitespace(text::trim(s))); }

double api_confidence(RiskLevel r) {
    switch (r) {
    case RiskLevel::High: return 0.9;
    case RiskLevel::Medium: return 0.7;
    case RiskLevel::Low: return 0.5;
    }
    return 0.5;
}

// Lines that mention one of the needles, capped; the head of the text otherwise.
std::string focused_excerpt(std::string_view body, const std::vector<std::string>& needles, std::size_t max_chars) {
    std::string out;
    if (!needles.empty()) {
        std::istringstream in{std::string(body)};
        std::string line;
        while (std::getline(in, line)) {
            bool hit = std::any_of(needles.begin(), needles.end(),
                                   [&](const std::string& n) { return text::icontains(line, n); });
            if (!hit) continue;
            auto trimmed = text::trim(line);
            if (out.size() + trimmed.size() + 1 > max_chars) break;
            out += trimmed;
            out += '\n';
        }
    }
    if (out.empty()) return excerpt(body, max_chars);
    out.pop_back();
    return out;
}

}  // namespace

// ---- tokens and chunks -------------------------------------------------

std::vector<Token> tokenize_with_offsets(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!text::is_alnum(s[i])) {
            ++i;
            continue;
        }
        if (i == 0 || !text::is_alnum(s[i - 1])) {
            auto ind = ioc::match_at(s, i);
            if (ind && ind->kind != ioc::IndicatorKind::Port && ind->span.start == i) {
                out.push_back({text::lower(ind->raw), ind->span.start, ind->span.end});
                i = ind->span.end;
                continue;
            }
        }
        std::size_t j = i;
        while (j < s.size() && text::is_alnum(s[j])) ++j;
        if (j - i >= 2) out.push_back({text::lower(s.substr(i, j - i)), i, j});
        i = j;
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> out;
    for (auto& t : tokenize_with_offsets(s)) out.push_back(std::move(t.text));
    return out;
}

std::size_t chunk_count(std::size_t n, std::size_t window, std::size_t stride) {
    if (stride == 0 || window < stride) throw Error(ErrorCode::Precondition, "require window >= stride >= 1");
    if (n <= window) return 1;
    return (n - window + stride - 1) / stride + 1;
}

std::vector<Chunk> chunk_text(std::string_view s, std::size_t window, std::size_t stride, std::string doc_id) {
    auto tokens = tokenize_with_offsets(s);
    std::size_t count = chunk_count(tokens.size(), window, stride);
    std::vector<Chunk> out;
    out.reserve(count);
    for (std::size_t c = 0; c < count; ++c) {
        Chunk chunk;
        chunk.doc_id = doc_id;
        chunk.seq = c;
        std::size_t begin = c * stride;
        std::size_t end = std::min(tokens.size(), begin + window);
        for (std::size_t i = begin; i < end; ++i) chunk.tokens.push_back(tokens[i].text);
        if (begin < end) {
            chunk.char_start = tokens[begin].start;
            chunk.char_end = tokens[end - 1].end;
        }
        out.push_back(std::move(chunk));
    }
    return out;
}

// ---- embeddings --------------------------------------------------------

Embedding Embedding::from(std::vector<double> values) {
    Embedding e;
    double sq = 0.0;
    for (double x : values) sq += x * x;
    e.norm = std::sqrt(sq);
    e.vector = std::move(values);
    return e;
}

Embedding mean_pool(std::span<const Embedding> vectors) {
    if (vectors.empty()) throw Error(ErrorCode::EmptyList, "mean_pool of no vectors");
    std::size_t dim = vectors.front().dimension();
    std::vector<double> acc(dim, 0.0);
    for (const auto& v : vectors) {
        if (v.dimension() != dim) throw Error(ErrorCode::DimensionMismatch, "vectors differ in dimension");
        for (std::size_t i = 0; i < dim; ++i) acc[i] += v.vector[i];
    }
    for (double& x : acc) x /= static_cast<double>(vectors.size());
    return Embedding::from(std::move(acc));
}

double cosine(const Embedding& a, const Embedding& b) {
    if (a.dimension() != b.dimension()) throw Error(ErrorCode::DimensionMismatch, "vectors differ in dimension");
    if (a.norm == 0.0 || b.norm == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < a.vector.size(); ++i) dot += a.vector[i] * b.vector[i];
    return std::clamp(dot / (a.norm * b.norm), -1.0, 1.0);
}

Embedding HashedTrigramEmbedder::embed(std::string_view s) const {
    std::vector<double> v(kEmbeddingDim, 0.0);
    for (const auto& tok : tokenize(s)) {
        add_feature(v, "w:" + tok, 1.0);
        std::string padded = "^" + tok + "$";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add_feature(v, "c:" + padded.substr(i, 3), 0.5);
    }
    auto e = Embedding::from(std::move(v));
    if (e.norm > 0.0) {
        for (double& x : e.vector) x /= e.norm;
        e.norm = 1.0;
    }
    return e;
}

Embedding embed_document(const Embedder& embedder, std::string_view s, std::size_t window, std::size_t stride) {
    auto tokens = tokenize_with_offsets(s);
    if (tokens.size() <= window) return embedder.embed(s);
    std::vector<Embedding> parts;
    for (const auto& chunk : chunk_text(s, window, stride)) {
        parts.push_back(embedder.embed(s.substr(chunk.char_start, chunk.char_end - chunk.char_start)));
    }
    return mean_pool(parts);
}

// ---- ranked lists ------------------------------------------------------

std::string_view to_string(Channel c) noexcept {
    switch (c) {
    case Channel::Lexical: return "lexical";
    case Channel::Dense: return "dense";
    case Channel::Fused: return "fused";
    case Channel::Reranked: return "reranked";
    }
    return "lexical";
}

void rank_hits(std::vector<ScoredHit>& hits, Channel channel) {
    std::sort(hits.begin(), hits.end(), [](const ScoredHit& a, const ScoredHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    for (std::size_t i = 0; i < hits.size(); ++i) {
        hits[i].rank = i + 1;
        hits[i].channel = channel;
    }
}

Bm25Index::Bm25Index(std::vector<std::string> doc_ids, const std::vector<std::vector<std::string>>& doc_tokens,
                     Bm25Params params)
    : doc_ids_(std::move(doc_ids)), params_(params) {
    if (doc_ids_.size() != doc_tokens.size()) throw Error(ErrorCode::Precondition, "doc ids and tokens differ in size");
    std::size_t total = 0;
    for (std::size_t d = 0; d < doc_tokens.size(); ++d) {
        doc_len_.push_back(doc_tokens[d].size());
        total += doc_tokens[d].size();
        std::unordered_map<std::string, std::size_t> tf;
        for (const auto& t : doc_tokens[d]) ++tf[t];
        for (auto& [term, n] : tf) postings_[term].push_back({d, n});
    }
    avg_len_ = doc_ids_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(doc_ids_.size());
}

double Bm25Index::idf(const std::string& term) const {
    auto it = postings_.find(term);
    double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
    double n = static_cast<double>(doc_ids_.size());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

std::vector<ScoredHit> Bm25Index::search(std::span<const std::string> query, std::size_t k) const {
    std::vector<double> scores(doc_ids_.size(), 0.0);
    for (const auto& term : query) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        double w = idf(term);
        for (const auto& p : it->second) {
            double tf = static_cast<double>(p.tf);
            double len_norm = avg_len_ > 0.0 ? static_cast<double>(doc_len_[p.doc]) / avg_len_ : 0.0;
            scores[p.doc] += w * tf * (params_.k1 + 1.0) / (tf + params_.k1 * (1.0 - params_.b + params_.b * len_norm));
        }
    }
    std::vector<ScoredHit> hits;
    for (std::size_t d = 0; d < scores.size(); ++d) {
        if (scores[d] > 0.0) hits.push_back({doc_ids_[d], scores[d], 0, Channel::Lexical});
    }
    rank_hits(hits, Channel::Lexical);
    if (hits.size() > k) hits.resize(k);
    return hits;
}

DenseIndex::DenseIndex(std::vector<std::string> doc_ids, std::vector<Embedding> vectors)
    : doc_ids_(std::move(doc_ids)), vectors_(std::move(vectors)) {
    if (doc_ids_.size() != vectors_.size()) throw Error(ErrorCode::Precondition, "doc ids and vectors differ in size");
    for (const auto& v : vectors_) {
        if (v.dimension() != vectors_.front().dimension()) {
            throw Error(ErrorCode::DimensionMismatch, "index vectors differ in dimension");
        }
    }
}

std::vector<ScoredHit> DenseIndex::search(const Embedding& query, std::size_t k) const {
    std::vector<ScoredHit> hits;
    hits.reserve(doc_ids_.size());
    for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
        hits.push_back({doc_ids_[d], cosine(query, vectors_[d]), 0, Channel::Dense});
    }
    rank_hits(hits, Channel::Dense);
    if (hits.size() > k) hits.resize(k);
    return hits;
}

std::vector<ScoredHit> rrf(std::span<const ScoredHit> list_a, std::span<const ScoredHit> list_b, double k_const) {
    std::map<std::string, double> fused;
    for (auto list : {list_a, list_b}) {
        for (const auto& h : list) {
            if (h.rank == 0) throw Error(ErrorCode::Precondition, "hits must carry 1-based ranks");
            fused[h.doc_id] += 1.0 / (k_const + static_cast<double>(h.rank));
        }
    }
    std::vector<ScoredHit> out;
    for (const auto& [id, score] : fused) out.push_back({id, score, 0, Channel::Fused});
    rank_hits(out, Channel::Fused);
    return out;
}

bool is_stopword(std::string_view token) {
    static const std::set<std::string, std::less<>> kWords = {
        "an",   "and",  "are",  "as",   "at",   "be",   "by",   "can",  "do",   "does", "for",  "from",
        "has",  "have", "how",  "if",   "in",   "into", "is",   "it",   "its",  "of",   "on",   "or",
        "that", "the",  "this", "to",   "was",  "what", "when", "which", "who",  "why",  "with", "i",
        "me",   "my",   "we",   "you",  "your", "about", "tell", "please", "there", "their", "them", "they"};
    return kWords.contains(token);
}

double JaccardScorer::score(std::span<const std::string> query, std::span<const std::string> doc) const {
    std::set<std::string> q;
    std::set<std::string> d;
    for (const auto& t : query) {
        if (!is_stopword(t)) q.insert(t);
    }
    for (const auto& t : doc) {
        if (!is_stopword(t)) d.insert(t);
    }
    if (q.empty() && d.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& t : q) inter += d.contains(t) ? 1 : 0;
    return static_cast<double>(inter) / static_cast<double>(q.size() + d.size() - inter);
}

std::vector<ScoredHit> rerank(std::span<const std::string> query, std::span<const ScoredHit> hits,
                              const DocTokens& doc_tokens, const PairScorer& scorer) {
    static const std::vector<std::string> kNone;
    std::vector<ScoredHit> out(hits.begin(), hits.end());
    try {
        for (auto& h : out) {
            const auto* toks = doc_tokens ? doc_tokens(h.doc_id) : nullptr;
            h.score = scorer.score(query, toks ? *toks : kNone);
            if (!std::isfinite(h.score)) throw Error(ErrorCode::ScorerFailure, "scorer returned a non-finite value");
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ScorerFailure) throw;
        throw Error(ErrorCode::ScorerFailure, e.what());
    } catch (const std::exception& e) {
        throw Error(ErrorCode::ScorerFailure, e.what());
    }
    std::stable_sort(out.begin(), out.end(), [](const ScoredHit& a, const ScoredHit& b) { return a.score > b.score; });
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].rank = i + 1;
        out[i].channel = Channel::Reranked;
    }
    return out;
}

nlohmann::json to_json(const ScoredHit& hit) {
    return {{"doc_id", hit.doc_id}, {"score", hit.score}, {"rank", hit.rank}, {"channel", to_string(hit.channel)}};
}

// ---- context bundle ----------------------------------------------------

std::string_view to_string(EvidenceSource s) noexcept {
    switch (s) {
    case EvidenceSource::Knowledge: return "knowledge";
    case EvidenceSource::CodeEvidence: return "code_evidence";
    case EvidenceSource::SecurityEvidence: return "security_evidence";
    }
    return "knowledge";
}

nlohmann::json to_json(const ContextBundle& bundle) {
    auto items = nlohmann::json::array();
    for (const auto& e : bundle.evidence) {
        nlohmann::json j = {{"source", to_string(e.source)},
                            {"ref", e.ref},
                            {"text", e.text},
                            {"confidence", e.confidence}};
        if (e.collection) j["collection"] = kb::to_string(*e.collection);
        items.push_back(std::move(j));
    }
    return {{"evidence", items}, {"status", bundle.status}};
}

std::vector<EvidenceItem> dedup_and_filter(std::vector<EvidenceItem> items, const Embedder& embedder,
                                           const RetrievalConfig& cfg) {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return items[a].confidence > items[b].confidence; });

    std::vector<std::string> norms;
    std::vector<Embedding> vecs;
    for (const auto& it : items) {
        norms.push_back(normalized_text(it.text));
        vecs.push_back(embed_document(embedder, it.text, cfg.window, cfg.stride));
    }

    std::vector<std::size_t> kept;
    for (auto i : order) {
        bool dup = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return norms[k] == norms[i] || cosine(vecs[k], vecs[i]) >= cfg.near_duplicate_cosine;
        });
        if (!dup) kept.push_back(i);
    }

    double max_conf = 0.0;
    for (auto k : kept) max_conf = std::max(max_conf, items[k].confidence);
    std::vector<std::size_t> survivors;
    for (auto k : kept) {
        if (items[k].confidence >= cfg.confidence_floor * max_conf) survivors.push_back(k);
    }
    std::sort(survivors.begin(), survivors.end());
    std::vector<EvidenceItem> out;
    for (auto k : survivors) out.push_back(std::move(items[k]));
    return out;
}

std::vector<EvidenceItem> code_evidence(const Transcript& t, std::size_t excerpt_chars) {
    std::vector<std::string> needles;
    for (const auto& a : t.suspicious_apis) needles.push_back(a.name);
    for (const auto& c : t.capability_matches) {
        for (const auto& e : c.evidence) needles.push_back(e);
    }
    std::vector<EvidenceItem> out;
    if (t.decompiled_c && !text::trim(*t.decompiled_c).empty()) {
        out.push_back({EvidenceSource::CodeEvidence, "transcript:decompiled_c",
                       focused_excerpt(*t.decompiled_c, needles, excerpt_chars), 0.8, std::nullopt});
    }
    if (t.assembly && !text::trim(*t.assembly).empty()) {
        out.push_back({EvidenceSource::CodeEvidence, "transcript:assembly",
                       focused_excerpt(*t.assembly, needles, excerpt_chars), 0.7, std::nullopt});
    }
    if (t.cfg_summary || t.fcg_summary) {
        std::string s;
        if (t.cfg_summary) {
            s += "CFG: " + std::to_string(t.cfg_summary->nodes) + " basic blocks, " +
                 std::to_string(t.cfg_summary->edges) + " edges.";
        }
        if (t.fcg_summary) {
            if (!s.empty()) s += ' ';
            s += "Call graph: " + std::to_string(t.fcg_summary->nodes) + " functions, " +
                 std::to_string(t.fcg_summary->edges) + " calls";
            if (!t.fcg_summary->hotspots.empty()) s += "; hotspots " + text::join(t.fcg_summary->hotspots, ", ");
            s += '.';
        }
        out.push_back({EvidenceSource::CodeEvidence, "transcript:graph_summary", s, 0.8, std::nullopt});
    }
    return out;
}

std::vector<EvidenceItem> security_evidence(const Transcript& t) {
    std::vector<EvidenceItem> out;
    if (t.pe) {
        const auto& pe = *t.pe;
        std::size_t functions = 0;
        for (const auto& imp : pe.imports) functions += imp.functions.size();
        std::ostringstream s;
        s << "PE metadata: " << binscan::to_string(pe.architecture) << ", " << pe.size_bytes << " bytes, entry point 0x"
          << std::hex << pe.entry_point << std::dec << ", " << pe.sections.size() << " sections, "
          << pe.imports.size() << " imported libraries (" << functions << " functions)";
        if (pe.imphash) s << ", imphash " << *pe.imphash;
        s.setf(std::ios::fixed);
        s.precision(2);
        s << ", entropy " << pe.overall_entropy << '.';
        out.push_back({EvidenceSource::SecurityEvidence, "transcript:pe", s.str(), 1.0, std::nullopt});
    }
    for (const auto& a : t.suspicious_apis) {
        std::string s = "Suspicious API " + a.name;
        if (!a.library.empty()) s += " (" + a.library + ")";
        s += ", risk " + std::string(to_string(a.risk));
        if (!a.behaviors.empty()) s += ", behaviors: " + text::join(a.behaviors, ", ");
        if (!a.note.empty()) s += ". " + a.note;
        out.push_back({EvidenceSource::SecurityEvidence, "transcript:suspicious_apis/" + a.name, s,
                       api_confidence(a.risk), std::nullopt});
    }
    for (const auto& c : t.capability_matches) {
        std::string s = "Capability: " + c.name;
        if (!c.technique.empty()) s += " (" + c.technique + ")";
        s += ", risk " + std::string(to_string(c.risk));
        if (!c.evidence.empty()) s += ", evidence: " + text::join(c.evidence, ", ");
        out.push_back({EvidenceSource::SecurityEvidence, "transcript:capability_matches/" + c.name, s, 0.9,
                       std::nullopt});
    }
    return out;
}

// ---- retriever ---------------------------------------------------------

const std::vector<std::string>* CollectionIndex::tokens_of(const std::string& doc_id) const {
    auto it = position.find(doc_id);
    return it == position.end() ? nullptr : &tokens[it->second];
}

std::string index_text(const kb::KnowledgeDoc& doc) {
    std::string s = doc.key + "\n" + doc.title + "\n" + doc.body;
    if (!doc.tags.empty()) s += "\n" + text::join(doc.tags, " ");
    return s;
}

Retriever::Retriever(const kb::KnowledgeStore& store, std::shared_ptr<const Embedder> embedder, RetrievalConfig cfg)
    : store_(store),
      embedder_(embedder ? std::move(embedder) : std::make_shared<HashedTrigramEmbedder>()),
      scorer_(std::make_shared<JaccardScorer>()),
      cfg_(cfg) {
    chunk_count(0, cfg_.window, cfg_.stride);  // validates window/stride
}

void Retriever::build(kb::CollectionKind kind) {
    auto snap = store_.snapshot(kind);
    auto idx = std::make_shared<CollectionIndex>();
    idx->kind = kind;
    idx->fingerprint = snap->fingerprint;
    idx->embedder = embedder_->name();
    std::vector<Embedding> vectors;
    for (const auto& doc : snap->docs) {
        idx->position[doc.doc_id] = idx->doc_ids.size();
        idx->doc_ids.push_back(doc.doc_id);
        idx->texts.push_back(index_text(doc));
        idx->tokens.push_back(tokenize(idx->texts.back()));
        vectors.push_back(embed_document(*embedder_, idx->texts.back(), cfg_.window, cfg_.stride));
    }
    idx->bm25 = Bm25Index(idx->doc_ids, idx->tokens, cfg_.bm25);
    idx->dense = DenseIndex(idx->doc_ids, std::move(vectors));
    std::lock_guard lock(mu_);
    indexes_[static_cast<std::size_t>(kind)] = std::move(idx);
}

void Retriever::build_all() {
    for (auto kind : kb::kAllCollections) build(kind);
}

std::shared_ptr<const CollectionIndex> Retriever::index(kb::CollectionKind kind) const {
    std::lock_guard lock(mu_);
    return indexes_[static_cast<std::size_t>(kind)];
}

std::shared_ptr<const CollectionIndex> Retriever::fresh_index(kb::CollectionKind kind) const {
    auto idx = index(kind);
    if (!idx) {
        throw Error(ErrorCode::IndexNotBuilt, "no index for " + std::string(kb::to_string(kind)));
    }
    if (idx->fingerprint != store_.snapshot(kind)->fingerprint || idx->embedder != embedder_->name()) {
        throw Error(ErrorCode::IndexNotBuilt, "index for " + std::string(kb::to_string(kind)) + " is stale");
    }
    return idx;
}

bool Retriever::is_fresh(kb::CollectionKind kind) const {
    try {
        fresh_index(kind);
        return true;
    } catch (const Error&) {
        return false;
    }
}

void Retriever::save_index(kb::CollectionKind kind, const std::filesystem::path& dir) const {
    auto idx = fresh_index(kind);
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& v : idx->dense.vectors()) vectors.push_back(v.vector);
    nlohmann::json j = {{"collection", kb::to_string(kind)}, {"fingerprint", idx->fingerprint},
                        {"embedder", idx->embedder},         {"doc_ids", idx->doc_ids},
                        {"tokens", idx->tokens},             {"vectors", vectors}};
    std::filesystem::create_directories(dir);
    text::write_file_atomic((dir / (std::string(kb::to_string(kind)) + ".index.json")).string(), j.dump());
}

bool Retriever::load_index(kb::CollectionKind kind, const std::filesystem::path& dir) {
    auto path = dir / (std::string(kb::to_string(kind)) + ".index.json");
    if (!std::filesystem::exists(path)) return false;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text::read_file(path.string()));
    } catch (const nlohmann::json::exception&) {
        return false;
    }
    auto snap = store_.snapshot(kind);
    if (j.value("fingerprint", "") != snap->fingerprint || j.value("embedder", "") != embedder_->name()) return false;

    auto idx = std::make_shared<CollectionIndex>();
    idx->kind = kind;
    idx->fingerprint = snap->fingerprint;
    idx->embedder = embedder_->name();
    idx->doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    idx->tokens = j.at("tokens").get<std::vector<std::vector<std::string>>>();
    std::vector<Embedding> vectors;
    for (const auto& v : j.at("vectors")) vectors.push_back(Embedding::from(v.get<std::vector<double>>()));
    if (idx->doc_ids.size() != idx->tokens.size() || idx->doc_ids.size() != vectors.size()) return false;
    for (std::size_t i = 0; i < idx->doc_ids.size(); ++i) {
        const auto* doc = snap->find_id(idx->doc_ids[i]);
        if (!doc) return false;
        idx->position[idx->doc_ids[i]] = i;
        idx->texts.push_back(index_text(*doc));
    }
    idx->bm25 = Bm25Index(idx->doc_ids, idx->tokens, cfg_.bm25);
    idx->dense = DenseIndex(idx->doc_ids, std::move(vectors));
    std::lock_guard lock(mu_);
    indexes_[static_cast<std::size_t>(kind)] = std::move(idx);
    return true;
}

std::vector<ScoredHit> Retriever::bm25_search(std::span<const std::string> query, kb::CollectionKind kind,
                                              std::size_t k) const {
    return fresh_index(kind)->bm25.search(query, k);
}

std::vector<ScoredHit> Retriever::dense_search(const Embedding& query, kb::CollectionKind kind, std::size_t k) const {
    return fresh_index(kind)->dense.search(query, k);
}

std::vector<ScoredHit> Retriever::rerank(std::span<const std::string> query, std::span<const ScoredHit> hits,
                                         kb::CollectionKind kind) const {
    auto idx = fresh_index(kind);
    std::shared_ptr<const PairScorer> scorer;
    {
        std::lock_guard lock(mu_);
        scorer = scorer_;
    }
    return retrieve::rerank(query, hits, [&](const std::string& id) { return idx->tokens_of(id); }, *scorer);
}

void Retriever::set_scorer(std::shared_ptr<const PairScorer> scorer) {
    std::lock_guard lock(mu_);
    scorer_ = scorer ? std::move(scorer) : std::make_shared<JaccardScorer>();
}

ContextBundle Retriever::hybrid_retrieve(std::string_view query, const Transcript* transcript) const {
    return hybrid_retrieve(query, transcript, kb::kAllCollections);
}

ContextBundle Retriever::hybrid_retrieve(std::string_view query, const Transcript* transcript,
                                         std::span<const kb::CollectionKind> collections) const {
    store_.snapshot(kb::CollectionKind::AttackTechniques);  // throws KnowledgeUnavailable when closed
    ContextBundle bundle;
    std::vector<EvidenceItem> items;
    auto q_tokens = tokenize(query);
    auto q_vec = embed_document(*embedder_, query, cfg_.window, cfg_.stride);
    const double max_rrf = 2.0 / (cfg_.k_const + 1.0);

    for (auto kind : collections) {
        std::string name(kb::to_string(kind));
        std::shared_ptr<const CollectionIndex> idx;
        try {
            idx = fresh_index(kind);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::IndexNotBuilt) throw;
            bundle.status[name] = "index_not_built";
            continue;
        }
        auto lexical = idx->bm25.search(q_tokens, cfg_.candidate_k);
        auto dense = idx->dense.search(q_vec, cfg_.candidate_k);
        std::erase_if(dense, [](const ScoredHit& h) { return h.score <= 0.0; });
        for (std::size_t i = 0; i < dense.size(); ++i) dense[i].rank = i + 1;
        auto fused = rrf(lexical, dense, cfg_.k_const);

        std::vector<ScoredHit> ranked;
        std::string status = "ok";
        try {
            ranked = rerank(q_tokens, fused, kind);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ScorerFailure) throw;
            ranked = fused;
            status = "rerank_degraded";
        }
        bundle.status[name] = status;

        std::unordered_map<std::string, double> fused_score;
        for (const auto& h : fused) fused_score[h.doc_id] = h.score;
        if (ranked.size() > cfg_.top_k) ranked.resize(cfg_.top_k);
        for (const auto& h : ranked) {
            auto pos = idx->position.at(h.doc_id);
            const auto& full = idx->texts[pos];
            auto snap = store_.snapshot(kind);
            const auto* doc = snap->find_id(h.doc_id);
            std::string body = doc ? (doc->title.empty() ? doc->key : doc->key + " " + doc->title) + ": " + doc->body
                                   : full;
            items.push_back({EvidenceSource::Knowledge, h.doc_id, excerpt(body, cfg_.excerpt_chars),
                             std::min(1.0, fused_score[h.doc_id] / max_rrf), kind});
        }
    }

    if (transcript) {
        for (auto& e : code_evidence(*transcript, cfg_.excerpt_chars)) items.push_back(std::move(e));
        for (auto& e : security_evidence(*transcript)) items.push_back(std::move(e));
    }
    bundle.evidence = dedup_and_filter(std::move(items), *embedder_, cfg_);
    return bundle;
}

}  // namespace triage::retrieve
