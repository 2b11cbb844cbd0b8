#pragma once

// Request orchestration: normalize, cache, static chain, retrieval, prompt,
// specialist routing, generation, verification, evidence attachment and
// report assembly.

#include "triage/attrib.hpp"
#include "triage/gate.hpp"
#include "triage/ioc.hpp"
#include "triage/kb.hpp"
#include "triage/retrieve.hpp"
#include "triage/static_chain.hpp"
#include "triage/tasks.hpp"
#include "triage/transcript.hpp"

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace triage::engine {

// ---- query, key, prompt --------------------------------------------------

struct NormalizedQuery {
    std::string display;  // trimmed and whitespace-collapsed, original casing
    std::string key;      // case-folded except indicator tokens
};

NormalizedQuery normalize_query(std::string_view query);

/// sha256 over length-prefixed (query, sample digest, model id). An absent
/// sample is encoded with its own tag so it cannot alias any digest.
std::string cache_key(std::string_view query_key, const std::optional<std::string>& sample_digest,
                      std::string_view model_id);

struct PromptConfig {
    std::size_t token_budget = 3000;  // whitespace-delimited words
    std::string system_preamble;      // first catalog system variant when empty
};

struct Prompt {
    std::string text;
    std::vector<std::string> cited_refs;  // refs of evidence kept, in tag order
    std::size_t dropped_evidence = 0;
};

inline constexpr std::string_view kUserQueryHeading = "## User Query";

/// Sections in order: system preamble, evidence (each tagged "[E<n>]" with
/// its source ref), transcript digest, user query. Evidence is dropped
/// lowest-confidence first until the word count fits the budget.
Prompt format_prompt(const NormalizedQuery& query, const retrieve::ContextBundle& bundle, const Transcript* transcript,
                     const PromptConfig& cfg = {});

/// Compact one-paragraph-per-tool digest of a transcript.
std::string transcript_digest(const Transcript& t);

/// Routes on the user-query section of the prompt (the whole text if the
/// heading is missing).
const tasks::TaskType* match_specialist(std::string_view prompt, const tasks::TaskCatalog& catalog);

// ---- generators ------------------------------------------------------------

struct GenerationRequest {
    std::string prompt;
    std::optional<std::string> feedback;
    std::string query;
    const tasks::TaskType* specialist = nullptr;
    const retrieve::ContextBundle* bundle = nullptr;
    const Transcript* transcript = nullptr;
    const attrib::FamilyLabel* label = nullptr;
    std::vector<std::string> required_sections;
};

class Generator {
public:
    virtual ~Generator() = default;
    virtual std::string name() const = 0;
    /// Throws on transport failure; the caller treats that as empty output.
    virtual std::string generate(const GenerationRequest& request) = 0;
};

/// Deterministic Markdown renderer over the bundle and transcript. One
/// "## <heading>" section per required section.
class TemplateGenerator final : public Generator {
public:
    std::string name() const override { return "template-v1"; }
    std::string generate(const GenerationRequest& request) override;
};

/// OpenAI-style chat-completions client over plain HTTP.
class HttpChatGenerator final : public Generator {
public:
    /// `endpoint` like "http://127.0.0.1:8000/v1/chat/completions".
    HttpChatGenerator(std::string endpoint, std::string model, std::string api_key = {},
                      std::chrono::seconds timeout = std::chrono::seconds(60));
    std::string name() const override { return model_; }
    std::string generate(const GenerationRequest& request) override;

private:
    std::string scheme_host_port_;
    std::string path_;
    std::string model_;
    std::string api_key_;
    std::chrono::seconds timeout_;
};

// ---- report ----------------------------------------------------------------

enum class ThreatLevel { Low, Medium, High, Critical };
enum class VerdictFlag { Malicious, Benign, Inconclusive };
std::string_view to_string(ThreatLevel t) noexcept;
std::string_view to_string(VerdictFlag v) noexcept;

struct FileTriage {
    std::string sha256;
    std::uint64_t size_bytes = 0;
    std::string size_class;
    std::string architecture;
    std::uint64_t entry_point = 0;
    std::size_t functions_detected = 0;
    std::size_t import_count = 0;
    std::vector<std::string> sections;
    std::optional<std::string> imphash;
    double entropy = 0.0;
};

struct CodeBehavior {
    std::optional<GraphSummary> cfg;
    std::optional<GraphSummary> fcg;
    bool process_manipulation = false;
    bool network_api = false;
    bool registry_api = false;
    std::vector<std::string> suspicious_apis;
    std::vector<std::string> capabilities;  // "name (technique, risk)"
};

struct Assessment {
    std::string family = "unknown";
    std::string category = "unknown";
    std::string label_source = "unknown";
    ThreatLevel threat_level = ThreatLevel::Low;
    std::vector<std::string> mitre_mappings;
    std::string detection_guidance;
    VerdictFlag verdict_flag = VerdictFlag::Inconclusive;
};

struct StructuredReport {
    FileTriage step1_file_triage;
    CodeBehavior step2_code_behavior;
    std::vector<ioc::ValidatedIndicator> step3_indicators;
    Assessment step4_assessment;
};

nlohmann::json to_json(const StructuredReport& r);
StructuredReport report_from_json(const nlohmann::json& j);
/// Markdown with the four "Step N" headings.
std::string render_markdown(const StructuredReport& r);

/// Critical with >= 2 Verified high-risk capabilities, High with 1, Medium
/// when only suspicious APIs are present, Low otherwise.
ThreatLevel threat_level(const Transcript& t, const kb::KnowledgeStore& knowledge);

// ---- engine ----------------------------------------------------------------

struct AnalysisRequest {
    std::string query;
    std::optional<std::vector<std::uint8_t>> sample;
    std::string model_id;  // configured generator's id when empty
    bool include_report = true;
};

struct AnalysisResponse {
    std::string response_id;
    std::string answer;
    std::vector<ioc::ValidatedIndicator> validated_indicators;
    std::vector<std::string> bundle_refs;
    gate::QualityVerdict verdict;
    std::vector<std::string> route;  // gate decisions taken, in order
    std::optional<StructuredReport> report;
    std::optional<std::string> specialist;
    std::optional<attrib::FamilyLabel> label;
    std::optional<std::string> sample_sha256;
    std::map<std::string, bool> tool_status;
    std::vector<std::string> warnings;
    bool from_cache = false;
};

nlohmann::json to_json(const AnalysisResponse& r);
AnalysisResponse response_from_json(const nlohmann::json& j);

/// Throws MissingTranscript when `t` is null.
StructuredReport assemble_report(const Transcript* t, const AnalysisResponse& response,
                                 const kb::KnowledgeStore& knowledge);

struct EngineConfig {
    std::string model_id = "template-v1";
    gate::Thresholds thresholds;
    gate::QualityWeights weights = gate::kDefaultWeights;
    gate::DimensionConfig dimensions;
    std::size_t retry_budget = 1;
    std::size_t cache_capacity = 1024;
    std::optional<std::filesystem::path> cache_dir;
    PromptConfig prompt;
    retrieve::RetrievalConfig retrieval;
    std::chrono::milliseconds tool_timeout{10'000};
    std::optional<std::filesystem::path> tool_fixture_dir;
    std::vector<std::string> decompiler_command;    // argv with "{sample}"
    std::vector<std::string> disassembler_command;  // argv with "{sample}"
    std::optional<std::string> generator_endpoint;  // HTTP chat generator when set
    std::string generator_api_key_env;
    std::uint64_t max_sample_bytes = binscan::kLargeLimit;

    static EngineConfig from_json(const nlohmann::json& j);
    static EngineConfig load(const std::filesystem::path& path);
};

nlohmann::json to_json(const EngineConfig& c);

/// Called as each pipeline stage completes: static_chain, retrieval,
/// generation, verification, report.
using StageObserver = std::function<void(std::string_view stage, const nlohmann::json& detail)>;

/// Bounded LRU of serialized responses with optional on-disk copies.
class ResponseCache {
public:
    explicit ResponseCache(std::size_t capacity, std::optional<std::filesystem::path> dir = std::nullopt);
    std::optional<nlohmann::json> get(const std::string& key);
    void put(const std::string& key, const nlohmann::json& value);
    std::size_t size() const;

private:
    std::size_t capacity_;
    std::optional<std::filesystem::path> dir_;
    mutable std::mutex mu_;
    std::list<std::pair<std::string, nlohmann::json>> order_;
    std::unordered_map<std::string, std::list<std::pair<std::string, nlohmann::json>>::iterator> index_;
};

struct EngineDeps {
    kb::KnowledgeStore* knowledge = nullptr;
    std::shared_ptr<Generator> generator;  // null: template fallback only
    AdapterSet adapters;
    attrib::LabelingContext labeling;
    const tasks::TaskCatalog* catalog = nullptr;  // builtin when null
    const std::vector<CapabilityRule>* rules = nullptr;
    std::shared_ptr<const retrieve::Embedder> embedder;
};

class Engine {
public:
    Engine(EngineConfig config, EngineDeps deps);

    /// Full pipeline. Concurrent identical requests compute once.
    AnalysisResponse analyze(const AnalysisRequest& request, const StageObserver& observer = {});

    /// A previously produced response by id, if still cached.
    std::optional<AnalysisResponse> find_response(const std::string& response_id);

    /// Rebuilds every retrieval index against the store's current contents.
    void rebuild_indexes();

    const EngineConfig& config() const noexcept { return config_; }
    const kb::KnowledgeStore& knowledge() const noexcept { return *deps_.knowledge; }
    retrieve::Retriever& retriever() noexcept { return *retriever_; }
    std::size_t computations() const noexcept { return computations_.load(); }

private:
    AnalysisResponse compute(const AnalysisRequest& request, const NormalizedQuery& query, const std::string& key,
                             const std::optional<std::string>& digest, const StageObserver& observer);
    std::string fallback_answer(const GenerationRequest& request);

    EngineConfig config_;
    EngineDeps deps_;
    const tasks::TaskCatalog& catalog_;
    std::unique_ptr<retrieve::Retriever> retriever_;
    gate::RefusalDetector refusal_;
    TemplateGenerator template_;
    ResponseCache cache_;
    std::mutex flight_mu_;
    std::condition_variable flight_cv_;
    std::unordered_map<std::string, std::size_t> in_flight_;
    std::atomic<std::size_t> computations_{0};
};

/// Standard fixture-backed wiring: knowledge from `data_dir/kb`, tool
/// transcripts and CTI reports from `fixture_dir`.
struct FixtureWorld {
    std::unique_ptr<kb::KnowledgeStore> knowledge;
    attrib::GroundTruth ground_truth;
    std::unique_ptr<attrib::FixtureCtiClient> cti;
    attrib::ImphashTable imphash_table;

    static std::unique_ptr<FixtureWorld> load(const std::filesystem::path& data_dir,
                                              const std::filesystem::path& fixture_dir);
    EngineDeps deps(const std::filesystem::path& fixture_dir);
};

}  // namespace triage::engine
