#pragma once

// Instruction-corpus generation: Architect plans, Analyst answers through
// the generator, Judge audits against the plan and the label. Records are
// QA-checked, backfilled and exported as JSONL in difficulty order.

#include "triage/attrib.hpp"
#include "triage/engine.hpp"
#include "triage/gate.hpp"
#include "triage/kb.hpp"
#include "triage/metrics.hpp"
#include "triage/tasks.hpp"
#include "triage/transcript.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace triage::corpus {

enum class Augmentation { Base, CoT, CoVe };
enum class Pipeline { TemplateFilling, ArchitectAnalystJudge };

std::string_view to_string(Augmentation a) noexcept;
std::string_view to_string(Pipeline p) noexcept;
std::optional<Augmentation> parse_augmentation(std::string_view s);
std::optional<Pipeline> parse_pipeline(std::string_view s);

struct QaStatus {
    bool passed = false;
    std::vector<std::string> reasons;  // empty when passed
};

struct InstructionRecord {
    std::string system;
    std::string user;
    std::string assistant;
    std::string task_type;  // catalog display name
    metrics::DifficultyTier difficulty_tier = metrics::DifficultyTier::Beginner;
    Augmentation augmentation = Augmentation::Base;
    Pipeline pipeline = Pipeline::ArchitectAnalystJudge;
    std::string sample_id;  // sha256
    std::string family = "unknown";
    std::string category = "unknown";
    QaStatus qa_status;
    std::size_t attempts = 0;  // generator calls spent on this record

    std::string record_id() const;  // sample_id:task:augmentation
};

nlohmann::json to_json(const InstructionRecord& r);
InstructionRecord record_from_json(const nlohmann::json& j);

struct RolePlan {
    std::vector<std::string> features_to_extract;
    std::vector<std::string> edge_cases;
    std::vector<std::string> reasoning_steps;
};

/// One analyzed, labeled sample.
struct CorpusSample {
    Transcript transcript;
    attrib::FamilyLabel label;
};

struct GenerationContext {
    engine::Generator* generator = nullptr;
    const kb::KnowledgeStore* knowledge = nullptr;
    const retrieve::Retriever* retriever = nullptr;  // optional RAG context
    const tasks::TaskCatalog* catalog = nullptr;      // builtin when null
    gate::RefusalDetector refusal;
};

/// Static chain plus labeling for one sample's bytes.
CorpusSample prepare_sample(binscan::Bytes bytes, const engine::EngineDeps& deps);

/// Rule-based plan from the sample's evidence and the task's sections.
RolePlan architect(const CorpusSample& sample, const tasks::TaskType& task);

/// Placeholder values for a task's user template.
std::map<std::string, std::string> template_vars(const Transcript& t);

/// One record. Empty or refusal output gets one reprompt; a second failure
/// leaves the record Failed. Throws GeneratorUnavailable without a generator.
InstructionRecord generate_record(const CorpusSample& sample, const tasks::TaskType& task, Augmentation mode,
                                  Pipeline pipeline, GenerationContext& ctx);

/// Deterministic round-robin over the ids sorted ascending (input order on
/// ties). Result is aligned with the input. Throws TooFewRecords below 3.
std::vector<Augmentation> partition_augmentation(const std::vector<std::string>& sample_ids,
                                                 const std::vector<Augmentation>& modes = {
                                                     Augmentation::Base, Augmentation::CoT, Augmentation::CoVe});

/// Every (sample, task) pair with modes from partition_augmentation.
std::vector<InstructionRecord> generate_corpus(const std::vector<CorpusSample>& samples,
                                               const std::vector<const tasks::TaskType*>& task_list,
                                               const std::vector<Augmentation>& modes, Pipeline pipeline,
                                               GenerationContext& ctx);

// ---- QA --------------------------------------------------------------------

struct QaConfig {
    double balance_tolerance = 0.20;  // relative
    std::size_t min_assistant_words = 40;
    gate::Thresholds thresholds;
};

using LabelLookup = std::function<std::optional<attrib::FamilyLabel>(const std::string& sha256)>;

struct QaContext {
    const kb::KnowledgeStore* knowledge = nullptr;
    const tasks::TaskCatalog* catalog = nullptr;
    LabelLookup labels;  // optional
    QaConfig config;
};

struct BalanceRow {
    std::string task_type;
    std::size_t count = 0;
    double share = 0.0;
    double target = 0.0;
    bool ok = true;
};

struct QaReport {
    std::size_t total = 0;
    std::size_t passed = 0;
    std::map<std::string, std::vector<std::string>> failures;  // record_id -> reasons
    std::vector<BalanceRow> balance;
    bool balance_ok = true;
};

nlohmann::json to_json(const QaReport& r);

/// Format, Content, Label and Quality reasons for one record.
std::vector<std::string> check_record(const InstructionRecord& r, const QaContext& ctx);

/// Runs the record checks (updating qa_status) and the corpus Balance check.
/// Empty targets mean uniform over the task types present.
QaReport qa_validate(std::vector<InstructionRecord>& records, const std::map<std::string, double>& targets,
                     const QaContext& ctx);

using Regenerator = std::function<std::optional<InstructionRecord>(const InstructionRecord&)>;

struct BackfillResult {
    std::vector<InstructionRecord> records;  // all Passed
    std::vector<std::string> excluded;       // record ids still failing
    std::size_t repaired = 0;
};

BackfillResult backfill(std::vector<InstructionRecord> records, const Regenerator& regenerate, const QaContext& ctx,
                        std::size_t retry_budget = 2);

/// Passed, refusal-free records sorted by difficulty tier (stable), one
/// JSON object per line.
std::string export_jsonl(const std::vector<InstructionRecord>& records);
std::vector<InstructionRecord> load_jsonl(std::string_view text);

}  // namespace triage::corpus
