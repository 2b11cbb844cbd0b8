#include "triage/corpus.hpp"

#include "triage/error.hpp"
#include "triage/ioc.hpp"
#include "triage/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace triage::corpus {

using nlohmann::json;

std::string_view to_string(Augmentation a) noexcept {
    switch (a) {
        case Augmentation::Base: return "Base";
        case Augmentation::CoT: return "CoT";
        case Augmentation::CoVe: return "CoVe";
    }
    return "Base";
}

std::string_view to_string(Pipeline p) noexcept {
    return p == Pipeline::TemplateFilling ? "TemplateFilling" : "ArchitectAnalystJudge";
}

std::optional<Augmentation> parse_augmentation(std::string_view s) {
    if (text::iequals(s, "base")) return Augmentation::Base;
    if (text::iequals(s, "cot")) return Augmentation::CoT;
    if (text::iequals(s, "cove")) return Augmentation::CoVe;
    return std::nullopt;
}

std::optional<Pipeline> parse_pipeline(std::string_view s) {
    if (text::iequals(s, "templatefilling") || text::iequals(s, "template")) return Pipeline::TemplateFilling;
    if (text::iequals(s, "architectanalystjudge") || text::iequals(s, "aaj")) return Pipeline::ArchitectAnalystJudge;
    return std::nullopt;
}

std::string InstructionRecord::record_id() const {
    return sample_id + ":" + task_type + ":" + std::string(to_string(augmentation));
}

json to_json(const InstructionRecord& r) {
    json qa = {{"status", r.qa_status.passed ? "Passed" : "Failed"}};
    if (!r.qa_status.passed) qa["reasons"] = r.qa_status.reasons;
    return {{"system", r.system},
            {"user", r.user},
            {"assistant", r.assistant},
            {"task_type", r.task_type},
            {"difficulty_tier", metrics::to_string(r.difficulty_tier)},
            {"augmentation", to_string(r.augmentation)},
            {"pipeline", to_string(r.pipeline)},
            {"sample_id", r.sample_id},
            {"family", r.family},
            {"category", r.category},
            {"qa_status", qa},
            {"attempts", r.attempts}};
}

InstructionRecord record_from_json(const json& j) {
    InstructionRecord r;
    try {
        r.system = j.value("system", "");
        r.user = j.value("user", "");
        r.assistant = j.value("assistant", "");
        r.task_type = j.value("task_type", "");
        r.difficulty_tier = metrics::parse_tier(j.value("difficulty_tier", "Beginner")).value_or(
            metrics::DifficultyTier::Beginner);
        r.augmentation = parse_augmentation(j.value("augmentation", "Base")).value_or(Augmentation::Base);
        r.pipeline = parse_pipeline(j.value("pipeline", "ArchitectAnalystJudge")).value_or(
            Pipeline::ArchitectAnalystJudge);
        r.sample_id = j.value("sample_id", "");
        r.family = j.value("family", "unknown");
        r.category = j.value("category", "unknown");
        r.attempts = j.value("attempts", std::size_t{0});
        if (j.contains("qa_status")) {
            const auto& qa = j.at("qa_status");
            r.qa_status.passed = qa.value("status", "Failed") == "Passed";
            if (qa.contains("reasons")) r.qa_status.reasons = qa.at("reasons").get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidRequest, std::string("bad instruction record: ") + e.what());
    }
    return r;
}

// ---- generation ----------------------------------------------------------

namespace {

const tasks::TaskCatalog& catalog_of(const tasks::TaskCatalog* c) {
    return c ? *c : tasks::TaskCatalog::builtin();
}

std::vector<std::string> capability_techniques(const Transcript& t) {
    std::vector<std::string> out;
    for (const auto& c : t.capability_matches)
        if (!c.technique.empty() && std::find(out.begin(), out.end(), c.technique) == out.end())
            out.push_back(c.technique);
    return out;
}

std::string list_or_none(const std::vector<std::string>& items, std::size_t cap) {
    if (items.empty()) return "none observed";
    std::vector<std::string> head(items.begin(), items.begin() + static_cast<long>(std::min(cap, items.size())));
    return text::join(head, ", ");
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

bool has_heading(std::string_view body, std::string_view section) {
    std::istringstream in{std::string(body)};
    std::string line;
    while (std::getline(in, line)) {
        auto t = text::trim(line);
        if (t.starts_with("#") && text::icontains(t, section)) return true;
    }
    return false;
}

// Judge: drop lines carrying invalid indicators, restore missing sections
// from the plan, and make sure the known family is named.
std::string judge(std::string raw, const RolePlan& plan, const tasks::TaskType& task, const CorpusSample& sample,
                  const kb::KnowledgeStore* knowledge) {
    if (knowledge) {
        auto found = ioc::extract_indicators(raw);
        auto batch = ioc::validate_all(found, *knowledge, &sample.transcript);
        std::vector<std::pair<std::size_t, std::size_t>> bad;
        for (const auto& v : batch.indicators)
            if (v.label == ioc::ProvenanceLabel::Invalid) bad.emplace_back(v.indicator.span.start, v.indicator.span.end);
        if (!bad.empty()) {
            std::string kept;
            std::size_t pos = 0;
            while (pos < raw.size()) {
                auto nl = raw.find('\n', pos);
                auto end = nl == std::string::npos ? raw.size() : nl;
                bool drop = std::any_of(bad.begin(), bad.end(), [&](auto& s) { return s.first >= pos && s.first < end; });
                if (!drop) kept.append(raw, pos, (nl == std::string::npos ? end : nl + 1) - pos);
                pos = nl == std::string::npos ? raw.size() : nl + 1;
            }
            raw = std::move(kept);
        }
    }
    for (const auto& sec : task.required_sections) {
        if (has_heading(raw, sec)) continue;
        raw += "\n\n## " + sec + "\n\n";
        raw += "Observed features: " + list_or_none(plan.features_to_extract, 6) + ".";
    }
    const auto& label = sample.label;
    if (label.family != "unknown" && !text::icontains(raw, label.family)) {
        raw += "\n\nGround-truth label: family " + label.family + ", category " + label.category + ".";
    }
    return raw;
}

std::string cot_prefix(const RolePlan& plan) {
    std::string out = "## Reasoning Steps\n\n";
    for (std::size_t i = 0; i < plan.reasoning_steps.size(); ++i)
        out += std::to_string(i + 1) + ". " + plan.reasoning_steps[i] + "\n";
    return out + "\n";
}

// Verification questions over the record's own indicators. Only indicators
// that survive validation are asked about, and answers name no new ones.
std::string cove_suffix(std::string_view body, const CorpusSample& sample, const kb::KnowledgeStore* knowledge) {
    std::string out = "\n\n## Verification\n\n";
    auto found = ioc::extract_indicators(body);
    std::vector<ioc::ValidatedIndicator> checked;
    if (knowledge) {
        checked = ioc::validate_all(found, *knowledge, &sample.transcript).indicators;
    } else {
        for (auto& f : found) checked.push_back({f, ioc::ProvenanceLabel::ValidUnverified, std::nullopt, std::nullopt});
    }
    std::set<std::string> asked;
    std::size_t n = 0;
    for (const auto& v : checked) {
        if (v.label == ioc::ProvenanceLabel::Invalid) continue;
        if (!asked.insert(v.indicator.normalized).second) continue;
        if (++n > 8) break;
        out += "- Q: Is " + v.indicator.normalized + " supported by the evidence? A: ";
        if (v.label == ioc::ProvenanceLabel::Verified)
            out += "Yes. A matching record was found for it.\n";
        else
            out += "It is well-formed, but no supporting record was found.\n";
    }
    if (n == 0) {
        out += "- Q: Does the answer rely on any unverifiable indicator? A: No. It makes no indicator claims.\n";
    }
    return out;
}

}  // namespace

std::map<std::string, std::string> template_vars(const Transcript& t) {
    std::map<std::string, std::string> v;
    v["sha256"] = t.sha256;
    v["arch"] = t.pe ? std::string(binscan::to_string(t.pe->architecture)) : "unknown";
    v["size"] = t.pe ? std::to_string(t.pe->size_bytes) : "0";
    std::vector<std::string> apis;
    for (const auto& a : t.suspicious_apis) apis.push_back(a.name);
    v["apis"] = list_or_none(apis, 8);
    v["function_count"] = t.fcg_summary ? std::to_string(t.fcg_summary->nodes) : "0";
    v["hotspots"] = t.fcg_summary ? list_or_none(t.fcg_summary->hotspots, 3) : "none observed";
    std::vector<std::string> caps;
    for (const auto& c : t.capability_matches) caps.push_back(c.name);
    v["capabilities"] = list_or_none(caps, 8);
    std::vector<std::string> strs;
    if (t.pe)
        for (const auto& s : t.pe->strings)
            if (s.size() >= 6 && strs.size() < 5) strs.push_back(s);
    v["strings"] = list_or_none(strs, 5);
    v["techniques"] = list_or_none(capability_techniques(t), 8);
    return v;
}

CorpusSample prepare_sample(binscan::Bytes bytes, const engine::EngineDeps& deps) {
    engine::ChainOptions options{deps.knowledge, deps.rules};
    CorpusSample s;
    s.transcript = engine::run_static_chain(bytes, binscan::detect_file_type(bytes), deps.adapters, options);
    std::optional<std::string> imphash = s.transcript.pe ? s.transcript.pe->imphash : std::nullopt;
    s.label = attrib::label_sample(s.transcript.sha256, imphash, deps.labeling);
    return s;
}

RolePlan architect(const CorpusSample& sample, const tasks::TaskType& task) {
    const auto& t = sample.transcript;
    RolePlan plan;
    if (t.pe) {
        plan.features_to_extract.push_back("architecture " + std::string(binscan::to_string(t.pe->architecture)));
        std::size_t imports = 0;
        for (const auto& e : t.pe->imports) imports += e.functions.size();
        plan.features_to_extract.push_back(std::to_string(imports) + " imported functions");
    }
    for (const auto& a : t.suspicious_apis) plan.features_to_extract.push_back("API " + a.name);
    for (const auto& c : t.capability_matches)
        plan.features_to_extract.push_back("capability " + c.name + " (" + c.technique + ")");

    if (!t.decompiled_c) plan.edge_cases.push_back("decompiler output missing; rely on imports and strings");
    if (!t.assembly) plan.edge_cases.push_back("disassembly missing; no control-flow evidence");
    if (sample.label.family == "unknown") plan.edge_cases.push_back("family unknown; do not guess a name");
    if (sample.label.confidence) plan.edge_cases.push_back("label is " + *sample.label.confidence);
    if (t.pe)
        for (const auto& e : t.pe->imports)
            for (const auto& f : e.functions)
                if (f.starts_with("ord")) {
                    plan.edge_cases.push_back("ordinal imports present");
                    goto done;
                }
done:
    plan.reasoning_steps.push_back("Review file metadata and imports");
    if (!t.suspicious_apis.empty()) plan.reasoning_steps.push_back("Map suspicious APIs to behaviors");
    if (!t.capability_matches.empty()) plan.reasoning_steps.push_back("Relate capabilities to ATT&CK techniques");
    for (const auto& s : task.required_sections) plan.reasoning_steps.push_back("Write the " + s + " section");
    return plan;
}

InstructionRecord generate_record(const CorpusSample& sample, const tasks::TaskType& task, Augmentation mode,
                                  Pipeline pipeline, GenerationContext& ctx) {
    if (!ctx.generator) throw Error(ErrorCode::GeneratorUnavailable, "no generator configured");
    const auto& catalog = catalog_of(ctx.catalog);
    const auto& t = sample.transcript;

    InstructionRecord rec;
    rec.task_type = task.name;
    rec.augmentation = mode;
    rec.pipeline = pipeline;
    rec.sample_id = t.sha256;
    rec.family = sample.label.family;
    rec.category = sample.label.category;

    const auto& variants = catalog.system_variants();
    rec.system = variants.empty() ? std::string("You are a malware analyst.")
                                  : variants[fnv1a(t.sha256 + "|" + task.id) % variants.size()];
    rec.user = tasks::render_template(task.user_template, template_vars(t));

    metrics::DifficultyInput din;
    din.code_length_chars = t.decompiled_c ? t.decompiled_c->size() : 0;
    if (t.pe)
        for (const auto& e : t.pe->imports) din.import_count += e.functions.size();
    din.technique_count = capability_techniques(t).size();
    rec.difficulty_tier = metrics::difficulty_score(din, metrics::kPromptWeights).tier;

    RolePlan plan = architect(sample, task);

    retrieve::ContextBundle bundle;
    if (pipeline == Pipeline::ArchitectAnalystJudge && ctx.retriever)
        bundle = ctx.retriever->hybrid_retrieve(rec.user, &t);

    engine::GenerationRequest req;
    req.query = rec.user;
    req.specialist = &task;
    req.transcript = &t;
    req.label = &sample.label;
    req.required_sections = task.required_sections;
    if (pipeline == Pipeline::ArchitectAnalystJudge) {
        req.bundle = &bundle;
        std::string plan_text = "Plan:\n";
        for (std::size_t i = 0; i < plan.reasoning_steps.size(); ++i)
            plan_text += std::to_string(i + 1) + ". " + plan.reasoning_steps[i] + "\n";
        for (const auto& e : plan.edge_cases) plan_text += "Edge case: " + e + "\n";
        engine::PromptConfig pc;
        pc.system_preamble = rec.system;
        auto prompt = engine::format_prompt(engine::normalize_query(rec.user), bundle, &t, pc);
        req.prompt = prompt.text + "\n\n" + plan_text;
    } else {
        req.prompt = rec.system + "\n\n" + std::string(engine::kUserQueryHeading) + "\n\n" + rec.user;
    }

    std::string raw;
    bool ok = false;
    for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
        if (attempt == 1)
            req.feedback = raw.empty() ? "The previous answer was empty. Answer the task."
                                       : "The previous answer declined the task. Answer it from the evidence.";
        raw = ctx.generator->generate(req);
        ++rec.attempts;
        ok = !text::trim(raw).empty() && !ctx.refusal(raw);
    }
    if (!ok) {
        rec.assistant = raw;
        rec.qa_status = {false, {text::trim(raw).empty() ? "empty output" : "refusal"}};
        return rec;
    }

    std::string body = pipeline == Pipeline::ArchitectAnalystJudge
                           ? judge(std::move(raw), plan, task, sample, ctx.knowledge)
                           : std::move(raw);
    switch (mode) {
        case Augmentation::Base: rec.assistant = body; break;
        case Augmentation::CoT: rec.assistant = cot_prefix(plan) + body; break;
        case Augmentation::CoVe: rec.assistant = body + cove_suffix(body, sample, ctx.knowledge); break;
    }
    rec.qa_status = {true, {}};
    return rec;
}

std::vector<Augmentation> partition_augmentation(const std::vector<std::string>& sample_ids,
                                                 const std::vector<Augmentation>& modes) {
    if (sample_ids.size() < 3)
        throw Error(ErrorCode::TooFewRecords, "augmentation partition needs at least 3 records, got " +
                                                  std::to_string(sample_ids.size()));
    if (modes.empty()) throw Error(ErrorCode::Precondition, "no augmentation modes given");
    std::vector<std::size_t> order(sample_ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sample_ids[a] < sample_ids[b]; });
    std::vector<Augmentation> out(sample_ids.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank) out[order[rank]] = modes[rank % modes.size()];
    return out;
}

std::vector<InstructionRecord> generate_corpus(const std::vector<CorpusSample>& samples,
                                               const std::vector<const tasks::TaskType*>& task_list,
                                               const std::vector<Augmentation>& modes, Pipeline pipeline,
                                               GenerationContext& ctx) {
    std::vector<std::pair<const CorpusSample*, const tasks::TaskType*>> jobs;
    std::vector<std::string> ids;
    for (const auto& s : samples)
        for (const auto* task : task_list) {
            jobs.emplace_back(&s, task);
            ids.push_back(s.transcript.sha256);
        }
    std::vector<Augmentation> assigned;
    if (modes.size() == 1)
        assigned.assign(jobs.size(), modes.front());
    else
        assigned = partition_augmentation(ids, modes);
    std::vector<InstructionRecord> out;
    out.reserve(jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i)
        out.push_back(generate_record(*jobs[i].first, *jobs[i].second, assigned[i], pipeline, ctx));
    return out;
}

// ---- QA --------------------------------------------------------------------

namespace {

bool is_hex64(std::string_view s) {
    return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
               return text::is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
           });
}

}  // namespace

std::vector<std::string> check_record(const InstructionRecord& r, const QaContext& ctx) {
    std::vector<std::string> reasons;
    const auto& catalog = catalog_of(ctx.catalog);

    // Format
    if (text::trim(r.system).empty()) reasons.push_back("format: missing system text");
    if (text::trim(r.user).empty()) reasons.push_back("format: missing user text");
    if (text::trim(r.assistant).empty()) reasons.push_back("format: missing assistant text");
    const tasks::TaskType* task = catalog.find(r.task_type);
    if (!task) reasons.push_back("format: unknown task type '" + r.task_type + "'");
    if (!is_hex64(r.sample_id)) reasons.push_back("format: sample_id is not a sha256");
    if (!text::trim(r.user).empty() && r.user.find('{') != std::string::npos &&
        r.user.find('}') != std::string::npos)
        reasons.push_back("format: unfilled template placeholder in user text");
    if (!text::trim(r.assistant).empty() && !has_heading(r.assistant, ""))
        reasons.push_back("format: assistant text has no section headings");

    // Content
    if (!text::trim(r.assistant).empty()) {
        if (gate::detect_refusal(r.assistant)) reasons.push_back("content: refusal");
        auto words = text::word_count(r.assistant);
        if (words < ctx.config.min_assistant_words)
            reasons.push_back("content: " + std::to_string(words) + " words, below floor of " +
                              std::to_string(ctx.config.min_assistant_words));
        if (task)
            for (const auto& sec : task->required_sections)
                if (!has_heading(r.assistant, sec)) reasons.push_back("content: missing section '" + sec + "'");
    }

    // Label
    if (ctx.labels) {
        if (auto label = ctx.labels(r.sample_id)) {
            if (!text::iequals(label->family, r.family))
                reasons.push_back("label: family '" + r.family + "' contradicts '" + label->family + "'");
            if (!text::iequals(label->category, r.category))
                reasons.push_back("label: category '" + r.category + "' contradicts '" + label->category + "'");
        }
    }

    // Quality
    if (ctx.knowledge && task && !text::trim(r.assistant).empty()) {
        auto found = ioc::extract_indicators(r.assistant);
        auto batch = ioc::validate_all(found, *ctx.knowledge, nullptr);
        auto dims = gate::score_dimensions(r.assistant, batch.indicators, task->required_sections);
        double sigma = gate::weighted_quality(dims);
        if (sigma < ctx.config.thresholds.retry) {
            std::ostringstream os;
            os.precision(3);
            os << "quality: sigma " << sigma << " below " << ctx.config.thresholds.retry;
            reasons.push_back(os.str());
        }
        if (r.augmentation == Augmentation::CoVe) {
            auto pos = r.assistant.find("## Verification");
            if (pos == std::string::npos) {
                reasons.push_back("content: CoVe record lacks a verification section");
            } else {
                for (const auto& v : batch.indicators)
                    if (v.indicator.span.start >= pos && v.label == ioc::ProvenanceLabel::Invalid)
                        reasons.push_back("quality: invalid indicator '" + v.indicator.raw + "' in verification");
            }
        }
    }
    return reasons;
}

QaReport qa_validate(std::vector<InstructionRecord>& records, const std::map<std::string, double>& targets,
                     const QaContext& ctx) {
    QaReport rep;
    rep.total = records.size();
    std::map<std::string, std::size_t> counts;
    for (auto& r : records) {
        auto reasons = check_record(r, ctx);
        r.qa_status = {reasons.empty(), reasons};
        if (reasons.empty())
            ++rep.passed;
        else
            rep.failures[r.record_id()] = std::move(reasons);
        ++counts[r.task_type];
    }

    std::map<std::string, double> goal = targets;
    if (goal.empty())
        for (const auto& [name, _] : counts) goal[name] = 1.0 / static_cast<double>(counts.size());
    double total_target = 0.0;
    for (const auto& [_, v] : goal) total_target += v;
    for (const auto& [name, target_raw] : goal) {
        BalanceRow row;
        row.task_type = name;
        row.count = counts.count(name) ? counts[name] : 0;
        row.share = rep.total ? static_cast<double>(row.count) / static_cast<double>(rep.total) : 0.0;
        row.target = total_target > 0 ? target_raw / total_target : 0.0;
        row.ok = row.target > 0 ? std::abs(row.share - row.target) / row.target <= ctx.config.balance_tolerance + 1e-12
                                : row.count == 0;
        rep.balance_ok = rep.balance_ok && row.ok;
        rep.balance.push_back(row);
    }
    for (const auto& [name, c] : counts)
        if (!goal.count(name)) {
            rep.balance.push_back({name, c, static_cast<double>(c) / static_cast<double>(rep.total), 0.0, false});
            rep.balance_ok = false;
        }
    return rep;
}

json to_json(const QaReport& r) {
    json bal = json::array();
    for (const auto& b : r.balance)
        bal.push_back({{"task_type", b.task_type}, {"count", b.count}, {"share", b.share}, {"target", b.target},
                       {"ok", b.ok}});
    return {{"total", r.total}, {"passed", r.passed}, {"failures", r.failures}, {"balance", bal},
            {"balance_ok", r.balance_ok}};
}

BackfillResult backfill(std::vector<InstructionRecord> records, const Regenerator& regenerate, const QaContext& ctx,
                        std::size_t retry_budget) {
    BackfillResult out;
    for (auto& r : records) {
        auto reasons = check_record(r, ctx);
        if (reasons.empty() && r.qa_status.passed) {
            out.records.push_back(std::move(r));
            continue;
        }
        bool fixed = false;
        for (std::size_t i = 0; i < retry_budget && regenerate && !fixed; ++i) {
            auto again = regenerate(r);
            if (!again) continue;
            if (!again->qa_status.passed && !again->qa_status.reasons.empty()) continue;
            auto again_reasons = check_record(*again, ctx);
            if (again_reasons.empty()) {
                again->qa_status = {true, {}};
                out.records.push_back(std::move(*again));
                fixed = true;
            }
        }
        if (fixed)
            ++out.repaired;
        else
            out.excluded.push_back(r.record_id());
    }
    return out;
}

std::string export_jsonl(const std::vector<InstructionRecord>& records) {
    std::vector<const InstructionRecord*> keep;
    for (const auto& r : records)
        if (r.qa_status.passed && !text::trim(r.system).empty() && !text::trim(r.user).empty() &&
            !text::trim(r.assistant).empty() && !gate::detect_refusal(r.assistant))
            keep.push_back(&r);
    std::stable_sort(keep.begin(), keep.end(), [](const auto* a, const auto* b) {
        return static_cast<int>(a->difficulty_tier) < static_cast<int>(b->difficulty_tier);
    });
    std::string out;
    for (const auto* r : keep) out += to_json(*r).dump() + "\n";
    return out;
}

std::vector<InstructionRecord> load_jsonl(std::string_view body) {
    std::vector<InstructionRecord> out;
    std::size_t lineno = 0;
    for (const auto& line : text::split(body, '\n')) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidRequest, "line " + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(record_from_json(j));
    }
    return out;
}

}  // namespace triage::corpus
