#include "world.hpp"

#include "triage/error.hpp"
#include "triage/kb.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace triage;
using namespace triage::kb;

namespace {

std::string line(const std::string& id, const std::string& key, const std::string& title = "t") {
    return R"({"doc_id":")" + id + R"(","collection":"attack_techniques","key":")" + key + R"(","title":")" + title +
           R"(","body":"b","tags":["Persistence"]})";
}

}  // namespace

TEST(Kb, CollectionNames) {
    for (auto k : kAllCollections) EXPECT_EQ(parse_collection(to_string(k)), k);
    EXPECT_EQ(parse_collection("cwe"), CollectionKind::CweWeaknesses);
    EXPECT_EQ(parse_collection("family"), CollectionKind::FamilyIntel);
    EXPECT_FALSE(parse_collection("nope"));
}

TEST(Kb, SeededStoreLoads) {
    auto s = support::seeded_store();
    EXPECT_EQ(s->size(CollectionKind::AttackTechniques), 59u);
    EXPECT_EQ(s->size(CollectionKind::CweWeaknesses), 30u);
    EXPECT_EQ(s->size(CollectionKind::WinApiBehavior), 50u);
    EXPECT_EQ(s->size(CollectionKind::FamilyIntel), 20u);
    EXPECT_TRUE(s->lookup(CollectionKind::AttackTechniques, "t1486"));
    auto fam = s->lookup(CollectionKind::FamilyIntel, "gandcrab");
    ASSERT_TRUE(fam);
    EXPECT_EQ(s->find_doc(fam->doc_id)->key, "gandcrab");
    EXPECT_FALSE(s->find_by_tag(CollectionKind::FamilyIntel, "category:ransomware").empty());
}

TEST(Kb, DuplicatesLastWins) {
    KnowledgeStore s;
    auto r = s.ingest_lines(line("a", "T1", "first") + "\n" + line("b", "T1", "second") + "\n",
                            CollectionKind::AttackTechniques);
    EXPECT_EQ(r.duplicates_replaced, 1u);
    EXPECT_EQ(s.lookup(CollectionKind::AttackTechniques, "T1")->title, "second");
    EXPECT_EQ(s.duplicate_warnings(), 1u);
}

TEST(Kb, SchemaViolationsNameTheField) {
    KnowledgeStore s;
    try {
        s.ingest_lines(R"({"doc_id":"a","collection":"attack_techniques","title":"t","body":"b","tags":[]})",
                       CollectionKind::AttackTechniques);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
        EXPECT_NE(std::string(e.what()).find("key"), std::string::npos);
    }
    try {
        s.ingest_lines(line("a", "T1"), CollectionKind::CweWeaknesses);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
    }
    EXPECT_EQ(s.size(), 0u);
}

TEST(Kb, FingerprintTracksContent) {
    KnowledgeStore a, b;
    a.ingest_lines(line("a", "T1"), CollectionKind::AttackTechniques);
    b.ingest_lines(line("a", "T1"), CollectionKind::AttackTechniques);
    EXPECT_EQ(a.snapshot(CollectionKind::AttackTechniques)->fingerprint,
              b.snapshot(CollectionKind::AttackTechniques)->fingerprint);
    b.ingest_lines(line("c", "T2"), CollectionKind::AttackTechniques);
    EXPECT_NE(a.snapshot(CollectionKind::AttackTechniques)->fingerprint,
              b.snapshot(CollectionKind::AttackTechniques)->fingerprint);
}

TEST(Kb, PersistsAndReloads) {
    auto dir = std::filesystem::temp_directory_path() / "triage-kb-test";
    std::filesystem::remove_all(dir);
    {
        KnowledgeStore s(dir);
        s.ingest_lines(line("a", "T1") + "\n" + line("b", "T2"), CollectionKind::AttackTechniques);
    }
    KnowledgeStore again(dir);
    EXPECT_EQ(again.size(CollectionKind::AttackTechniques), 2u);
    std::filesystem::remove_all(dir);
}

TEST(Kb, ClosedStoreRefuses) {
    KnowledgeStore s;
    s.close();
    EXPECT_FALSE(s.is_open());
    try {
        s.lookup(CollectionKind::AttackTechniques, "T1");
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::KnowledgeUnavailable);
    }
}
