#include "oracles.hpp"

#include "triage/error.hpp"
#include "triage/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace triage;
using namespace triage::metrics;

TEST(Metrics, EntropyMatchesOracle) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        std::vector<std::uint64_t> c(1 + rng() % 30);
        for (auto& x : c) x = 1 + rng() % 5000;
        EXPECT_NEAR(shannon_entropy(c), oracle::entropy_bits(c), 1e-9);
        auto j = pielou_evenness(c);
        if (c.size() == 1) {
            EXPECT_FALSE(j);
        } else {
            ASSERT_TRUE(j);
            EXPECT_NEAR(*j, *oracle::evenness(c), 1e-9);
        }
    }
}

TEST(Metrics, EntropyEdgeCases) {
    std::vector<std::uint64_t> one = {982};
    EXPECT_EQ(shannon_entropy(one), 0.0);
    EXPECT_FALSE(pielou_evenness(one));
    std::vector<std::uint64_t> uniform(8, 3);
    EXPECT_NEAR(shannon_entropy(uniform), 3.0, 1e-12);
    EXPECT_NEAR(*pielou_evenness(uniform), 1.0, 1e-12);
    std::vector<std::uint64_t> empty;
    EXPECT_THROW(shannon_entropy(empty), Error);
}

TEST(Metrics, PrfFromSets) {
    std::set<std::string> pred, gold;
    for (int i = 0; i < 19; ++i) pred.insert("T" + std::to_string(1000 + i));
    for (int i = 0; i < 28; ++i) gold.insert("T" + std::to_string(1009 + i));
    auto m = prf_metrics(pred, gold);
    EXPECT_NEAR(m.precision, 10.0 / 19, 1e-12);
    EXPECT_NEAR(m.recall, 10.0 / 28, 1e-12);
    EXPECT_NEAR(m.f1, 2.0 * 10 / (19 + 28), 1e-12);
    EXPECT_EQ(f1_from(0.0, 0.0), 0.0);
    auto none = prf_metrics({}, {});
    EXPECT_EQ(none.f1, 0.0);
}

TEST(Metrics, DifficultyTiers) {
    DifficultyInput small{100, 2, 0, 0, 0, 0};
    DifficultyInput big{400'000, 300, 40, 1, 1, 1};
    EXPECT_EQ(difficulty_score(small).tier, DifficultyTier::Beginner);
    auto d = difficulty_score(big);
    EXPECT_NEAR(d.score, 1.0, 1e-12);
    EXPECT_EQ(d.tier, DifficultyTier::Expert);
    DifficultyWeights bad = {0.5, 0.5, 0.5, 0, 0, 0};
    try {
        difficulty_score(small, bad);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::WeightSumViolation);
    }
    for (auto t : {DifficultyTier::Beginner, DifficultyTier::Intermediate, DifficultyTier::Expert})
        EXPECT_EQ(parse_tier(to_string(t)), t);
}

TEST(Metrics, DifficultyCutoffsInclusive) {
    DifficultyConfig cfg;
    EXPECT_EQ(score_components({cfg.intermediate_cutoff, cfg.intermediate_cutoff, cfg.intermediate_cutoff, 0, 0, 0},
                               kPromptWeights, cfg)
                  .tier,
              DifficultyTier::Intermediate);
    EXPECT_EQ(score_components({1, 1, 1, 0, 0, 0}, kPromptWeights, cfg).tier, DifficultyTier::Expert);
}

TEST(Metrics, BalanceReport) {
    std::vector<LabelPair> data;
    for (int i = 0; i < 30; ++i) data.push_back({"ransomware", "gandcrab"});
    for (int i = 0; i < 10; ++i) data.push_back({"ransomware", "lockbit"});
    for (int i = 0; i < 5; ++i) data.push_back({"benign", "benign"});
    auto rows = balance_report(data);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].category, "ransomware");
    EXPECT_EQ(rows[0].total_samples, 40u);
    EXPECT_EQ(rows[0].family_count, 2u);
    EXPECT_EQ(rows[0].top_family, "gandcrab");
    EXPECT_NEAR(rows[0].top_family_share, 0.75, 1e-12);
    EXPECT_NEAR(rows[0].entropy, oracle::entropy_bits({30, 10}), 1e-12);
    EXPECT_EQ(rows[1].category, "benign");
    EXPECT_FALSE(rows[1].evenness);
    EXPECT_TRUE(to_json(rows[1])["evenness"].is_null());
}
