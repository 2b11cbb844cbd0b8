#include "world.hpp"

#include "triage/corpus.hpp"
#include "triage/error.hpp"

#include <gtest/gtest.h>

using namespace triage;
using namespace triage::corpus;

namespace {

struct Setup {
    std::unique_ptr<engine::FixtureWorld> world = support::world();
    engine::EngineDeps deps = world->deps(oracle::fixture_dir());
    retrieve::Retriever retriever{*world->knowledge};
    std::vector<CorpusSample> samples;

    Setup() {
        retriever.build_all();
        for (const char* name : {"gandcrab", "agenttesla", "asyncrat"}) {
            samples.push_back(prepare_sample(oracle::read_bytes(oracle::fixture_dir() / "samples" /
                                                                (std::string(name) + ".exe")),
                                             deps));
        }
    }
    GenerationContext gen_ctx() {
        GenerationContext c;
        c.generator = deps.generator.get();
        c.knowledge = world->knowledge.get();
        c.retriever = &retriever;
        return c;
    }
    QaContext qa_ctx() {
        QaContext q;
        q.knowledge = world->knowledge.get();
        q.labels = [this](const std::string& sha) -> std::optional<attrib::FamilyLabel> {
            for (const auto& s : samples)
                if (s.transcript.sha256 == sha) return s.label;
            return std::nullopt;
        };
        return q;
    }
};

Setup& setup() {
    static Setup s;
    return s;
}

std::vector<const tasks::TaskType*> all_tasks() {
    std::vector<const tasks::TaskType*> out;
    for (const auto& t : tasks::TaskCatalog::builtin().tasks()) out.push_back(&t);
    return out;
}

}  // namespace

TEST(Corpus, ParseNames) {
    EXPECT_EQ(parse_augmentation("cove"), Augmentation::CoVe);
    EXPECT_EQ(parse_augmentation(to_string(Augmentation::CoT)), Augmentation::CoT);
    EXPECT_EQ(parse_pipeline("aaj"), Pipeline::ArchitectAnalystJudge);
    EXPECT_EQ(parse_pipeline("template"), Pipeline::TemplateFilling);
    EXPECT_FALSE(parse_augmentation("x"));
}

TEST(Corpus, PartitionIsExactAndDeterministic) {
    std::vector<std::string> ids;
    for (int i = 35; i >= 0; --i) ids.push_back("id" + std::to_string(100 + i));
    auto p = partition_augmentation(ids);
    std::map<Augmentation, int> count;
    for (auto a : p) count[a]++;
    EXPECT_EQ(count[Augmentation::Base], 12);
    EXPECT_EQ(count[Augmentation::CoT], 12);
    EXPECT_EQ(count[Augmentation::CoVe], 12);
    EXPECT_EQ(p, partition_augmentation(ids));
    EXPECT_EQ(p.back(), Augmentation::Base);  // smallest id comes first in the rotation
    try {
        partition_augmentation({"a", "b"});
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooFewRecords);
    }
}

TEST(Corpus, PreparedSamplesCarryLabels) {
    auto& s = setup();
    EXPECT_EQ(s.samples[0].label.family, "gandcrab");
    EXPECT_EQ(s.samples[1].label.category, "stealer");
    EXPECT_TRUE(s.samples[2].transcript.pe);
}

TEST(Corpus, ArchitectPlanCoversSections) {
    auto& s = setup();
    const auto& task = tasks::TaskCatalog::builtin().at("malware_classification");
    auto plan = architect(s.samples[0], task);
    EXPECT_FALSE(plan.features_to_extract.empty());
    EXPECT_FALSE(plan.reasoning_steps.empty());
    auto vars = template_vars(s.samples[0].transcript);
    EXPECT_EQ(vars.at("sha256"), s.samples[0].transcript.sha256);
}

TEST(Corpus, GenerateQaAndExport) {
    auto& s = setup();
    auto ctx = s.gen_ctx();
    auto recs = generate_corpus(s.samples, all_tasks(), {Augmentation::Base, Augmentation::CoT, Augmentation::CoVe},
                                Pipeline::ArchitectAnalystJudge, ctx);
    ASSERT_EQ(recs.size(), 36u);
    auto rep = qa_validate(recs, {}, s.qa_ctx());
    EXPECT_EQ(rep.passed, 36u) << to_json(rep).dump(1);
    EXPECT_TRUE(rep.balance_ok);
    for (const auto& r : recs) {
        if (r.augmentation == Augmentation::CoVe) EXPECT_NE(r.assistant.find("## Verification"), std::string::npos);
        if (r.augmentation == Augmentation::CoT) EXPECT_NE(r.assistant.find("## Reasoning Steps"), std::string::npos);
    }

    auto jsonl = export_jsonl(recs);
    auto back = load_jsonl(jsonl);
    ASSERT_EQ(back.size(), 36u);
    for (std::size_t i = 1; i < back.size(); ++i) EXPECT_LE(back[i - 1].difficulty_tier, back[i].difficulty_tier);
    EXPECT_EQ(to_json(back[0]), to_json(record_from_json(to_json(back[0]))));
}

TEST(Corpus, TemplateFillingPipeline) {
    auto& s = setup();
    auto ctx = s.gen_ctx();
    const auto& task = tasks::TaskCatalog::builtin().at("api_behavior");
    auto r = generate_record(s.samples[1], task, Augmentation::Base, Pipeline::TemplateFilling, ctx);
    EXPECT_EQ(r.pipeline, Pipeline::TemplateFilling);
    EXPECT_EQ(r.task_type, "API Behavior");
    EXPECT_FALSE(r.assistant.empty());
    GenerationContext none;
    EXPECT_THROW(generate_record(s.samples[1], task, Augmentation::Base, Pipeline::TemplateFilling, none), Error);
}

TEST(Corpus, QaFlagsBadRecords) {
    auto& s = setup();
    auto ctx = s.gen_ctx();
    const auto& task = tasks::TaskCatalog::builtin().at("malware_family_detection");
    auto good = generate_record(s.samples[0], task, Augmentation::Base, Pipeline::ArchitectAnalystJudge, ctx);
    auto qa = s.qa_ctx();
    EXPECT_TRUE(check_record(good, qa).empty());

    auto refusal = good;
    refusal.assistant = "I cannot assist with this request.";
    auto reasons = check_record(refusal, qa);
    EXPECT_FALSE(reasons.empty());

    auto mislabeled = good;
    mislabeled.family = "zbot";
    EXPECT_FALSE(check_record(mislabeled, qa).empty());

    auto bad_id = good;
    bad_id.sample_id = "xyz";
    EXPECT_FALSE(check_record(bad_id, qa).empty());

    auto placeholder = good;
    placeholder.user = "Analyze {sha256} now";
    EXPECT_FALSE(check_record(placeholder, qa).empty());
}

TEST(Corpus, BalanceCheck) {
    auto& s = setup();
    auto ctx = s.gen_ctx();
    const auto& cat = tasks::TaskCatalog::builtin();
    std::vector<InstructionRecord> recs;
    for (int i = 0; i < 3; ++i)
        recs.push_back(generate_record(s.samples[i], cat.at("code_analysis"), Augmentation::Base,
                                       Pipeline::ArchitectAnalystJudge, ctx));
    recs.push_back(generate_record(s.samples[0], cat.at("risk_assessment"), Augmentation::Base,
                                   Pipeline::ArchitectAnalystJudge, ctx));
    auto rep = qa_validate(recs, {}, s.qa_ctx());
    EXPECT_FALSE(rep.balance_ok);
    auto ok = qa_validate(recs, {{"Code Analysis", 0.75}, {"Risk Assessment", 0.25}}, s.qa_ctx());
    EXPECT_TRUE(ok.balance_ok);
}

TEST(Corpus, BackfillRepairsOrExcludes) {
    auto& s = setup();
    auto ctx = s.gen_ctx();
    const auto& task = tasks::TaskCatalog::builtin().at("intent_analysis");
    auto good = generate_record(s.samples[2], task, Augmentation::CoT, Pipeline::ArchitectAnalystJudge, ctx);
    auto broken = good;
    broken.assistant = "   ";
    broken.qa_status = {false, {"refusal"}};

    std::size_t calls = 0;
    Regenerator regen = [&](const InstructionRecord&) -> std::optional<InstructionRecord> {
        ++calls;
        return good;
    };
    auto fixed = backfill({broken}, regen, s.qa_ctx());
    EXPECT_EQ(fixed.repaired, 1u);
    EXPECT_TRUE(fixed.excluded.empty());
    ASSERT_EQ(fixed.records.size(), 1u);
    EXPECT_TRUE(fixed.records[0].qa_status.passed);

    Regenerator hopeless = [&](const InstructionRecord& r) -> std::optional<InstructionRecord> {
        ++calls;
        return r;
    };
    calls = 0;
    auto gone = backfill({broken}, hopeless, s.qa_ctx(), 2);
    EXPECT_EQ(calls, 2u);
    EXPECT_TRUE(gone.records.empty());
    EXPECT_EQ(gone.excluded, (std::vector<std::string>{broken.record_id()}));
}

TEST(Corpus, ExportDropsFailedAndRefusals) {
    auto& s = setup();
    auto ctx = s.gen_ctx();
    const auto& task = tasks::TaskCatalog::builtin().at("threat_identification");
    auto good = generate_record(s.samples[0], task, Augmentation::Base, Pipeline::ArchitectAnalystJudge, ctx);
    good.qa_status = {true, {}};
    auto refusal = good;
    refusal.assistant = "I cannot assist with this request";
    auto failed = good;
    failed.qa_status = {false, {"x"}};
    auto lines = load_jsonl(export_jsonl({good, refusal, failed}));
    EXPECT_EQ(lines.size(), 1u);
}
