#include "world.hpp"

#include "triage/error.hpp"
#include "triage/retrieve.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace triage;
using namespace triage::retrieve;

TEST(Retrieve, TokenizerKeepsIndicatorsWhole) {
    auto toks = tokenize("Beacon to 10.0.0.1 uses T1055.012 and CVE-2021-44228, see http://x.io/a.");
    auto has = [&](const std::string& t) { return std::find(toks.begin(), toks.end(), t) != toks.end(); };
    EXPECT_TRUE(has("10.0.0.1"));
    EXPECT_TRUE(has("t1055.012"));
    EXPECT_TRUE(has("cve-2021-44228"));
    EXPECT_TRUE(has("beacon"));
    EXPECT_FALSE(has("a"));
}

TEST(Retrieve, TokenOffsets) {
    std::string text = "Alpha beta, GAMMA";
    for (const auto& t : tokenize_with_offsets(text)) {
        std::string slice = text.substr(t.start, t.end - t.start);
        std::transform(slice.begin(), slice.end(), slice.begin(), ::tolower);
        EXPECT_EQ(slice, t.text);
    }
}

TEST(Retrieve, ChunkingClosedForm) {
    EXPECT_EQ(chunk_count(0, 512, 256), 1u);
    EXPECT_EQ(chunk_count(512, 512, 256), 1u);
    EXPECT_EQ(chunk_count(513, 512, 256), 2u);
    EXPECT_EQ(chunk_count(768, 512, 256), 2u);
    EXPECT_EQ(chunk_count(769, 512, 256), 3u);
    EXPECT_THROW(chunk_text("a b", 4, 8), Error);
    EXPECT_THROW(chunk_text("a b", 4, 0), Error);
    auto empty = chunk_text("");
    ASSERT_EQ(empty.size(), 1u);
    EXPECT_TRUE(empty[0].tokens.empty());

    std::string text;
    for (int i = 0; i < 10; ++i) text += "tok" + std::to_string(i) + " ";
    auto chunks = chunk_text(text, 4, 3, "d");
    ASSERT_EQ(chunks.size(), 3u);
    EXPECT_EQ(chunks[2].tokens, (std::vector<std::string>{"tok6", "tok7", "tok8", "tok9"}));
    EXPECT_EQ(chunks[1].seq, 1u);
    EXPECT_EQ(chunks[0].doc_id, "d");
}

TEST(Retrieve, MeanPoolAndCosine) {
    std::vector<Embedding> v = {Embedding::from({1, 2, 3}), Embedding::from({3, 2, 1})};
    auto m = mean_pool(v);
    EXPECT_EQ(m.vector, (std::vector<double>{2, 2, 2}));
    std::vector<Embedding> bad = {Embedding::from({1}), Embedding::from({1, 2})};
    EXPECT_THROW(mean_pool(bad), Error);
    EXPECT_THROW(mean_pool(std::span<const Embedding>{}), Error);
    EXPECT_EQ(cosine(Embedding::from({0, 0}), Embedding::from({1, 0})), 0.0);
    EXPECT_NEAR(cosine(Embedding::from({1, 0}), Embedding::from({2, 0})), 1.0, 1e-12);
}

TEST(Retrieve, EmbedderIsNormalizedAndDeterministic) {
    HashedTrigramEmbedder e;
    auto a = e.embed("process injection into explorer");
    EXPECT_EQ(a.dimension(), kEmbeddingDim);
    EXPECT_NEAR(a.norm, 1.0, 1e-12);
    EXPECT_EQ(a.vector, e.embed("process injection into explorer").vector);
    EXPECT_GT(cosine(a, e.embed("injection into explorer process")), 0.9);
}

TEST(Retrieve, Bm25MatchesOracle) {
    std::vector<std::vector<std::string>> docs = {
        {"ransomware", "encrypts", "files"}, {"stealer", "steals", "browser", "files", "files"}, {"rat", "remote"}};
    Bm25Index idx({"a", "b", "c"}, docs);
    std::vector<std::string> q = {"files", "browser"};
    auto hits = idx.search(q, 10);
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0].doc_id, "b");
    EXPECT_NEAR(hits[0].score, oracle::bm25(q, docs, 1), 1e-12);
    EXPECT_NEAR(hits[1].score, oracle::bm25(q, docs, 0), 1e-12);
    EXPECT_EQ(hits[1].rank, 2u);
    EXPECT_EQ(idx.search(q, 1).size(), 1u);
}

TEST(Retrieve, RrfAndRankTies) {
    std::vector<ScoredHit> a = {{"x", 3, 1}, {"y", 2, 2}};
    std::vector<ScoredHit> b = {{"y", 0.9, 1}, {"x", 0.8, 2}, {"z", 0.1, 3}};
    auto f = rrf(a, b);
    ASSERT_EQ(f.size(), 3u);
    EXPECT_EQ(f[0].doc_id, "x");  // tie with y broken by id
    EXPECT_EQ(f[1].doc_id, "y");
    EXPECT_NEAR(f[0].score, 1.0 / 61 + 1.0 / 62, 1e-15);
    EXPECT_NEAR(f[2].score, 1.0 / 63, 1e-15);
    std::vector<ScoredHit> unranked = {{"x", 1, 0}};
    EXPECT_THROW(rrf(unranked, b), Error);
}

namespace {

struct ThrowingScorer final : PairScorer {
    double score(std::span<const std::string>, std::span<const std::string>) const override {
        throw std::runtime_error("boom");
    }
};

}  // namespace

TEST(Retrieve, RerankStableAndFailure) {
    std::map<std::string, std::vector<std::string>> tokens = {
        {"a", {"apple", "pear"}}, {"b", {"apple", "pear"}}, {"c", {"apple", "plum", "fig"}}};
    DocTokens lookup = [&](const std::string& id) { return &tokens.at(id); };
    std::vector<ScoredHit> hits = {{"c", 0.3, 1}, {"b", 0.2, 2}, {"a", 0.1, 3}};
    std::vector<std::string> q = {"apple", "pear", "the"};
    auto r = rerank(q, hits, lookup, JaccardScorer{});
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0].doc_id, "b");
    EXPECT_EQ(r[1].doc_id, "a");
    EXPECT_EQ(r[2].doc_id, "c");
    EXPECT_NEAR(r[2].score, 0.25, 1e-15);
    try {
        rerank(q, hits, lookup, ThrowingScorer{});
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ScorerFailure);
    }
    EXPECT_EQ(JaccardScorer{}.score(std::vector<std::string>{"the"}, std::vector<std::string>{"of"}), 0.0);
}

TEST(Retrieve, DedupAndFloor) {
    HashedTrigramEmbedder e;
    RetrievalConfig cfg;
    std::vector<EvidenceItem> items = {
        {EvidenceSource::Knowledge, "k1", "Process injection via WriteProcessMemory", 0.5, std::nullopt},
        {EvidenceSource::Knowledge, "k2", "process   injection via writeprocessmemory", 0.9, std::nullopt},
        {EvidenceSource::Knowledge, "k3", "Registry run key persistence", 0.04, std::nullopt},
        {EvidenceSource::Knowledge, "k4", "Network beaconing over HTTPS", 0.6, std::nullopt}};
    auto out = dedup_and_filter(items, e, cfg);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].ref, "k2");
    EXPECT_EQ(out[1].ref, "k4");
}

TEST(Retrieve, RetrieverOverSeededStore) {
    auto store = support::seeded_store();
    Retriever r(*store);
    EXPECT_FALSE(r.is_fresh(kb::CollectionKind::AttackTechniques));
    try {
        r.hybrid_retrieve("process injection");
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IndexNotBuilt);
    }
    r.build_all();
    auto bundle = r.hybrid_retrieve("process injection into a remote process");
    ASSERT_FALSE(bundle.evidence.empty());
    for (auto kind : kb::kAllCollections) EXPECT_EQ(bundle.status.at(std::string(kb::to_string(kind))), "ok");

    auto dir = std::filesystem::temp_directory_path() / "triage-index-test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    r.save_index(kb::CollectionKind::CweWeaknesses, dir);
    Retriever r2(*store);
    EXPECT_TRUE(r2.load_index(kb::CollectionKind::CweWeaknesses, dir));
    EXPECT_TRUE(r2.is_fresh(kb::CollectionKind::CweWeaknesses));

    store->ingest_lines(
        R"({"doc_id":"cwe-x","collection":"cwe_weaknesses","key":"CWE-9999","title":"t","body":"b","tags":[]})",
        kb::CollectionKind::CweWeaknesses);
    EXPECT_FALSE(r.is_fresh(kb::CollectionKind::CweWeaknesses));
    EXPECT_FALSE(r2.load_index(kb::CollectionKind::CweWeaknesses, dir));
    std::filesystem::remove_all(dir);
}
