#include "oracles.hpp"

#include "triage/attrib.hpp"
#include "triage/error.hpp"

#include <gtest/gtest.h>

using namespace triage;
using namespace triage::attrib;

namespace {

class DownCti final : public CtiClient {
public:
    std::optional<std::vector<std::string>> vendor_labels(const std::string&) override {
        throw Error(ErrorCode::CtiUnavailable, "offline");
    }
};

struct Fixture {
    GroundTruth truth = load_ground_truth(oracle::fixture_dir() / "ground_truth.json");
    FixtureCtiClient cti{oracle::fixture_dir() / "cti"};
    ImphashTable table = ImphashTable::from_ground_truth(truth);
    LabelingContext ctx() { return {&truth, &cti, &table, nullptr}; }
};

std::string sha_of(const std::string& name) {
    for (const auto& s : oracle::manifest())
        if (s["name"] == name) return s["sha256"];
    throw std::runtime_error(name);
}

}  // namespace

TEST(Attrib, NormalizeFamilyVotes) {
    const auto& tax = Taxonomy::builtin();
    EXPECT_EQ(tax.normalize_family({"Trojan.GandCrypt.A", "Ransom:Win32/GandCrab", "GandCrab!MTB"}), "gandcrab");
    EXPECT_EQ(tax.normalize_family({"Backdoor.AsyncRAT", "AsyncRAT!MTB"}), "asyncrat");
    EXPECT_EQ(tax.normalize_family({"Spyware.AgentTesla", "Tesla.Gen"}), "agenttesla");
    try {
        tax.normalize_family({"Trojan.Generic", "Malware.Win32.Generic"});
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoSignal);
    }
    try {
        tax.normalize_family({});
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyList);
    }
}

TEST(Attrib, CategoryMapping) {
    const auto& tax = Taxonomy::builtin();
    EXPECT_EQ(tax.map_category("gandcrab"), "ransomware");
    EXPECT_EQ(tax.map_category("agenttesla"), "stealer");
    EXPECT_EQ(tax.map_category("asyncrat"), "rat");
    EXPECT_EQ(tax.map_category("no-such-family"), "unknown");
    EXPECT_TRUE(tax.is_category("benign"));
}

TEST(Attrib, GroundTruthWins) {
    Fixture f;
    auto l = label_sample(sha_of("zbot"), std::nullopt, f.ctx());
    EXPECT_EQ(l.source, LabelSource::LocalGroundTruth);
    EXPECT_EQ(l.family, "zbot");
    EXPECT_EQ(l.category, "banker");
    EXPECT_EQ(f.cti.calls(), 0u);
}

TEST(Attrib, CtiPath) {
    Fixture f;
    auto l = label_sample(sha_of("gandcrab"), std::nullopt, f.ctx());
    EXPECT_EQ(l.source, LabelSource::CtiReport);
    EXPECT_EQ(l.family, "gandcrab");
    EXPECT_EQ(l.category, "ransomware");
    EXPECT_FALSE(l.vendor_labels.empty());
}

TEST(Attrib, ImphashPathIsHeuristic) {
    Fixture f;
    std::string unseen(64, '0');
    std::string imphash = f.truth.at(sha_of("zbot")).imphash.value();
    auto l = label_sample(unseen, imphash, f.ctx());
    EXPECT_EQ(l.source, LabelSource::ImphashMatch);
    EXPECT_EQ(l.family, "zbot");
    EXPECT_EQ(l.confidence, "heuristic");
}

TEST(Attrib, UnknownPath) {
    Fixture f;
    auto generic = label_sample(sha_of("amadey"), std::nullopt, f.ctx());
    EXPECT_EQ(generic.source, LabelSource::Unknown);
    EXPECT_EQ(generic.family, "unknown");
    auto nothing = label_sample(std::string(64, 'f'), std::string(32, 'f'), f.ctx());
    EXPECT_EQ(nothing.source, LabelSource::Unknown);
}

TEST(Attrib, CtiOutageDegradesToImphash) {
    Fixture f;
    DownCti down;
    LabelingContext ctx{&f.truth, &down, &f.table, nullptr};
    std::string imphash = f.truth.at(sha_of("zbot")).imphash.value();
    auto l = label_sample(std::string(64, '1'), imphash, ctx);
    EXPECT_TRUE(l.cti_degraded);
    EXPECT_EQ(l.source, LabelSource::ImphashMatch);
}

TEST(Attrib, AmbiguousImphashDropped) {
    ImphashTable t;
    t.add("aa", "x");
    t.add("aa", "x");
    t.add("bb", "x");
    t.add("bb", "y");
    EXPECT_EQ(t.lookup("aa"), "x");
    EXPECT_FALSE(t.lookup("bb"));
}
