#include "world.hpp"

#include "triage/error.hpp"
#include "triage/ioc.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace triage;
using namespace triage::ioc;

namespace {

const kb::KnowledgeStore& store() {
    static auto s = support::seeded_store();
    return *s;
}

ProvenanceLabel label_named(const std::string& s) {
    if (s == "verified") return ProvenanceLabel::Verified;
    if (s == "invalid") return ProvenanceLabel::Invalid;
    return ProvenanceLabel::ValidUnverified;
}

std::vector<Indicator> of_kind(std::string_view text, IndicatorKind kind) {
    std::vector<Indicator> out;
    for (auto& i : extract_indicators(text))
        if (i.kind == kind) out.push_back(i);
    return out;
}

}  // namespace

TEST(Ioc, KindNamesRoundTrip) {
    for (auto k : kAllKinds) EXPECT_EQ(parse_kind(to_string(k)), k);
    EXPECT_FALSE(parse_kind("nonsense"));
}

TEST(Ioc, LabeledLineCorpus) {
    std::ifstream in(oracle::fixture_dir() / "indicators.jsonl");
    std::string line;
    std::size_t lines = 0, negatives = 0, expected_total = 0, matched = 0, extracted_total = 0;
    ValidationOptions opts{2026};
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        ++lines;
        std::string text = j["text"];
        auto got = extract_indicators(text);
        extracted_total += got.size();
        const auto& exp = j["expected"];
        if (exp.empty()) ++negatives;
        expected_total += exp.size();
        SCOPED_TRACE("line " + std::to_string(j["id"].get<int>()) + ": " + text);
        ASSERT_EQ(got.size(), exp.size());
        for (std::size_t i = 0; i < exp.size(); ++i) {
            EXPECT_EQ(std::string(to_string(got[i].kind)), exp[i]["kind"].get<std::string>());
            EXPECT_EQ(got[i].raw, exp[i]["raw"].get<std::string>());
            EXPECT_EQ(got[i].normalized, exp[i]["normalized"].get<std::string>());
            EXPECT_EQ(text.substr(got[i].span.start, got[i].span.end - got[i].span.start), got[i].raw);
            auto v = validate_indicator(got[i], store(), nullptr, opts);
            EXPECT_EQ(v.label, label_named(exp[i]["label"])) << got[i].raw;
            if (got[i].raw == exp[i]["raw"].get<std::string>()) ++matched;
        }
    }
    EXPECT_EQ(lines, 250u);
    EXPECT_EQ(negatives, 50u);
    EXPECT_EQ(matched, expected_total);
    EXPECT_EQ(extracted_total, expected_total);
}

TEST(Ioc, LongestMatchWinsAndNoOverlap) {
    auto got = extract_indicators("See http://10.0.0.1/x.php and T1055.012 now");
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].kind, IndicatorKind::Url);
    EXPECT_EQ(got[1].kind, IndicatorKind::MitreTechnique);
    EXPECT_EQ(got[1].normalized, "T1055.012");
}

TEST(Ioc, UrlTrailingPunctuationTrimmed) {
    auto got = of_kind("Fetch https://a.example.com/p?q=1).", IndicatorKind::Url);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].raw, "https://a.example.com/p?q=1");
}

TEST(Ioc, HashAlgorithms) {
    std::string md5(32, 'a'), sha1(40, 'b'), sha256(64, 'c');
    auto got = extract_indicators(md5 + " " + sha1 + " " + sha256);
    ASSERT_EQ(got.size(), 3u);
    EXPECT_EQ(hash_algorithm(got[0]), "md5");
    EXPECT_EQ(hash_algorithm(got[1]), "sha1");
    EXPECT_EQ(hash_algorithm(got[2]), "sha256");
}

TEST(Ioc, RangeChecksComeFirst) {
    ValidationOptions opts{2026};
    auto v = [&](std::string_view text) {
        auto got = extract_indicators(text);
        EXPECT_EQ(got.size(), 1u) << text;
        return validate_indicator(got.at(0), store(), nullptr, opts).label;
    };
    EXPECT_EQ(v("ip 256.1.1.1 seen"), ProvenanceLabel::Invalid);
    EXPECT_EQ(v("ip 8.8.8.8 seen"), ProvenanceLabel::ValidUnverified);
    EXPECT_EQ(v("port 0"), ProvenanceLabel::Invalid);
    EXPECT_EQ(v("port 65535"), ProvenanceLabel::ValidUnverified);
    EXPECT_EQ(v("port 65536"), ProvenanceLabel::Invalid);
    EXPECT_EQ(v("CVE-1998-0001"), ProvenanceLabel::Invalid);
    EXPECT_EQ(v("CVE-1999-0001"), ProvenanceLabel::ValidUnverified);
    EXPECT_EQ(v("CVE-2027-0001"), ProvenanceLabel::ValidUnverified);
    EXPECT_EQ(v("CVE-2028-0001"), ProvenanceLabel::Invalid);
    EXPECT_EQ(v("CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"), ProvenanceLabel::ValidUnverified);
    EXPECT_EQ(v("CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H/AV:L"), ProvenanceLabel::Invalid);
}

TEST(Ioc, TranscriptEvidenceVerifies) {
    Transcript t;
    t.sha256 = std::string(64, 'a');
    t.decompiled_c = "connect(\"203.0.113.77\", 443);";
    auto got = extract_indicators("beacons to 203.0.113.77");
    ASSERT_EQ(got.size(), 1u);
    auto v = validate_indicator(got[0], store(), &t, {2026});
    EXPECT_EQ(v.label, ProvenanceLabel::Verified);
    ASSERT_TRUE(v.evidence_ref);
    EXPECT_EQ(v.evidence_ref->rfind("transcript:", 0), 0u);
}

TEST(Ioc, KnowledgeEvidenceVerifies) {
    auto got = extract_indicators("uses T1486");
    auto v = validate_indicator(got.at(0), store(), nullptr, {2026});
    EXPECT_EQ(v.label, ProvenanceLabel::Verified);
    ASSERT_TRUE(v.evidence_ref);
    EXPECT_EQ(v.evidence_ref->rfind("kb:", 0), 0u);
}

TEST(Ioc, ClosedStoreDegrades) {
    kb::KnowledgeStore closed;
    closed.close();
    auto got = extract_indicators("uses T1486");
    try {
        validate_indicator(got.at(0), closed);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::KnowledgeUnavailable);
    }
    auto batch = validate_all(got, closed);
    EXPECT_TRUE(batch.knowledge_degraded);
    EXPECT_EQ(batch.indicators.at(0).label, ProvenanceLabel::ValidUnverified);
}

TEST(Ioc, AnnotateAndStripRoundTrip) {
    std::string text = "C2 at 8.8.8.8 and 999.1.1.1 via T1486.";
    auto got = extract_indicators(text);
    auto batch = validate_all(got, store(), nullptr, {2026});
    auto annotated = annotate_response(text, batch.indicators);
    EXPECT_NE(annotated.find("8.8.8.8 [unverified]"), std::string::npos);
    EXPECT_NE(annotated.find("999.1.1.1 [invalid]"), std::string::npos);
    EXPECT_NE(annotated.find("T1486 [verified]"), std::string::npos);
    EXPECT_EQ(strip_provenance_tags(annotated), text);
}

TEST(Ioc, AnnotateRejectsStaleSpans) {
    auto got = extract_indicators("ip 8.8.8.8");
    auto batch = validate_all(got, store());
    try {
        annotate_response("ip 9.9.9.9", batch.indicators);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SpanMismatch);
    }
    try {
        annotate_response("ip", batch.indicators);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SpanMismatch);
    }
}
