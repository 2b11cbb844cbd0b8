#include "triage/engine.hpp"

#include "triage/digest.hpp"
#include "triage/error.hpp"
#include "triage/text.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <set>

namespace triage::engine {
namespace {

using nlohmann::json;

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string ref_of(const retrieve::EvidenceItem& e) {
    return e.source == retrieve::EvidenceSource::Knowledge ? "kb:" + e.ref : e.ref;
}

std::string framed(char tag, std::string_view part) {
    return std::string(1, tag) + std::to_string(part.size()) + ":" + std::string(part);
}

json opt(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

attrib::FamilyLabel label_from_json(const json& j) {
    attrib::FamilyLabel l;
    l.family = j.at("family").get<std::string>();
    l.category = j.at("category").get<std::string>();
    auto src = j.at("source").get<std::string>();
    for (auto s : {attrib::LabelSource::LocalGroundTruth, attrib::LabelSource::CtiReport,
                   attrib::LabelSource::ImphashMatch, attrib::LabelSource::Unknown}) {
        if (attrib::to_string(s) == src) l.source = s;
    }
    l.vendor_labels = j.at("vendor_labels").get<std::vector<std::string>>();
    if (!j.at("confidence").is_null()) l.confidence = j.at("confidence").get<std::string>();
    l.cti_degraded = j.at("cti_degraded").get<bool>();
    return l;
}

gate::Decision parse_decision(const std::string& s) {
    for (auto d : {gate::Decision::Accept, gate::Decision::RetryWithFeedback, gate::Decision::TemplateFallback}) {
        if (gate::to_string(d) == s) return d;
    }
    throw Error(ErrorCode::SchemaViolation, "unknown gate decision: " + s);
}

// Lines carrying an Invalid indicator are not allowed in a fallback answer.
std::string drop_invalid_lines(const std::string& answer, const kb::KnowledgeStore& knowledge,
                               const Transcript* t) {
    std::string out;
    for (const auto& line : text::split(answer, '\n')) {
        bool bad = false;
        for (const auto& ind : ioc::extract_indicators(line)) {
            if (ioc::validate_indicator(ind, knowledge, t).label == ioc::ProvenanceLabel::Invalid) {
                bad = true;
                break;
            }
        }
        if (!bad) out += line + "\n";
    }
    while (out.size() > 1 && out[out.size() - 1] == '\n' && out[out.size() - 2] == '\n') out.pop_back();
    return out;
}

std::string sample_query(const Transcript& t) {
    std::vector<std::string> terms;
    for (const auto& c : t.capability_matches) {
        terms.push_back(c.technique);
        terms.push_back(c.name);
    }
    for (const auto& a : t.suspicious_apis) terms.push_back(a.name);
    if (terms.empty()) terms.push_back("malware static analysis");
    return text::join(terms, " ");
}

}  // namespace

// ---- query, key, prompt --------------------------------------------------

NormalizedQuery normalize_query(std::string_view query) {
    NormalizedQuery q;
    q.display = text::collapse_whitespace(text::trim(query));
    std::size_t pos = 0;
    for (const auto& ind : ioc::extract_indicators(q.display)) {
        q.key += text::lower(std::string_view(q.display).substr(pos, ind.span.start - pos));
        q.key += ind.raw;
        pos = ind.span.end;
    }
    q.key += text::lower(std::string_view(q.display).substr(pos));
    return q;
}

std::string cache_key(std::string_view query_key, const std::optional<std::string>& sample_digest,
                      std::string_view model_id) {
    std::string buf = framed('q', query_key);
    buf += sample_digest ? framed('s', *sample_digest) : std::string("n");
    buf += framed('m', model_id);
    return digest::sha256_hex(std::string_view(buf));
}

std::string transcript_digest(const Transcript& t) {
    std::string out = "sha256: " + t.sha256 + "\n";
    if (t.pe) {
        const auto& pe = *t.pe;
        std::size_t functions = 0;
        for (const auto& imp : pe.imports) functions += imp.functions.size();
        out += "pe: " + std::string(binscan::to_string(pe.architecture)) + ", " + std::to_string(pe.size_bytes) +
               " bytes (" + std::string(binscan::to_string(binscan::size_class(pe.size_bytes))) + "), " +
               std::to_string(pe.sections.size()) + " sections, " + std::to_string(functions) + " imports from " +
               std::to_string(pe.imports.size()) + " modules, entropy " + fmt2(pe.overall_entropy);
        if (pe.imphash) out += ", imphash " + *pe.imphash;
        out += "\n";
    }
    std::vector<std::string> failed;
    for (const auto& [tool, ok] : t.tool_status) {
        if (!ok) failed.push_back(tool);
    }
    if (!failed.empty()) out += "failed tools: " + text::join(failed, ", ") + "\n";
    if (t.cfg_summary) {
        out += "cfg: " + std::to_string(t.cfg_summary->nodes) + " blocks, " + std::to_string(t.cfg_summary->edges) +
               " edges\n";
    }
    if (t.fcg_summary) {
        out += "fcg: " + std::to_string(t.fcg_summary->nodes) + " functions, " +
               std::to_string(t.fcg_summary->edges) + " calls";
        if (!t.fcg_summary->hotspots.empty()) out += "; hotspots " + text::join(t.fcg_summary->hotspots, ", ");
        out += "\n";
    }
    if (!t.suspicious_apis.empty()) {
        std::vector<std::string> apis;
        for (const auto& a : t.suspicious_apis) apis.push_back(a.name + " (" + std::string(to_string(a.risk)) + ")");
        out += "suspicious apis: " + text::join(apis, ", ") + "\n";
    }
    if (!t.capability_matches.empty()) {
        std::vector<std::string> caps;
        for (const auto& c : t.capability_matches) {
            caps.push_back(c.name + " -> " + c.technique + " (" + std::string(to_string(c.risk)) + ")");
        }
        out += "capabilities: " + text::join(caps, "; ") + "\n";
    }
    return out;
}

Prompt format_prompt(const NormalizedQuery& query, const retrieve::ContextBundle& bundle, const Transcript* transcript,
                     const PromptConfig& cfg) {
    const std::string preamble =
        cfg.system_preamble.empty() ? tasks::TaskCatalog::builtin().system_variants().front() : cfg.system_preamble;
    const std::string digest = transcript ? transcript_digest(*transcript) : std::string();

    std::vector<std::string> lines(bundle.evidence.size());
    for (std::size_t i = 0; i < bundle.evidence.size(); ++i) {
        const auto& e = bundle.evidence[i];
        lines[i] = "[E" + std::to_string(i + 1) + "] (" + ref_of(e) + ", confidence " + fmt2(e.confidence) + ") " +
                   text::collapse_whitespace(e.text);
    }

    std::size_t fixed = text::word_count(preamble) + text::word_count(digest) + text::word_count(query.display) + 8;
    std::size_t total = fixed;
    for (const auto& l : lines) total += text::word_count(l);

    // Drop order: lowest confidence first, later items first on ties.
    std::vector<std::size_t> order(lines.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (bundle.evidence[a].confidence != bundle.evidence[b].confidence) {
            return bundle.evidence[a].confidence < bundle.evidence[b].confidence;
        }
        return a > b;
    });
    std::vector<bool> keep(lines.size(), true);
    Prompt p;
    for (std::size_t idx : order) {
        if (total <= cfg.token_budget) break;
        keep[idx] = false;
        total -= text::word_count(lines[idx]);
        ++p.dropped_evidence;
    }

    p.text = "## System\n" + preamble + "\n\n";
    std::string evidence;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!keep[i]) continue;
        evidence += lines[i] + "\n";
        p.cited_refs.push_back(ref_of(bundle.evidence[i]));
    }
    if (!evidence.empty()) p.text += "## Evidence\n" + evidence + "\n";
    if (!digest.empty()) p.text += "## Transcript\n" + digest + "\n";
    p.text += std::string(kUserQueryHeading) + "\n" + query.display + "\n";
    return p;
}

const tasks::TaskType* match_specialist(std::string_view prompt, const tasks::TaskCatalog& catalog) {
    auto pos = prompt.rfind(kUserQueryHeading);
    std::string_view section = pos == std::string_view::npos ? prompt : prompt.substr(pos + kUserQueryHeading.size());
    return catalog.route(section);
}

// ---- serialization -------------------------------------------------------

json to_json(const AnalysisResponse& r) {
    json indicators = json::array();
    for (const auto& v : r.validated_indicators) indicators.push_back(ioc::to_json(v));
    return {{"response_id", r.response_id},
            {"answer", r.answer},
            {"validated_indicators", indicators},
            {"bundle_refs", r.bundle_refs},
            {"verdict", gate::to_json(r.verdict)},
            {"route", r.route},
            {"report", r.report ? to_json(*r.report) : json(nullptr)},
            {"specialist", opt(r.specialist)},
            {"label", r.label ? attrib::to_json(*r.label) : json(nullptr)},
            {"sample_sha256", opt(r.sample_sha256)},
            {"tool_status", r.tool_status},
            {"warnings", r.warnings},
            {"from_cache", r.from_cache}};
}

AnalysisResponse response_from_json(const json& j) {
    AnalysisResponse r;
    r.response_id = j.at("response_id").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    for (const auto& v : j.at("validated_indicators")) {
        ioc::ValidatedIndicator vi;
        auto kind = ioc::parse_kind(v.at("kind").get<std::string>());
        if (!kind) throw Error(ErrorCode::SchemaViolation, "unknown indicator kind");
        vi.indicator = {*kind, v.at("raw").get<std::string>(), v.at("normalized").get<std::string>(),
                        {v.at("span").at(0).get<std::size_t>(), v.at("span").at(1).get<std::size_t>()}};
        auto label = v.at("label").get<std::string>();
        for (auto l : {ioc::ProvenanceLabel::Verified, ioc::ProvenanceLabel::ValidUnverified,
                       ioc::ProvenanceLabel::Invalid}) {
            if (ioc::to_string(l) == label) vi.label = l;
        }
        if (!v.at("evidence_ref").is_null()) vi.evidence_ref = v.at("evidence_ref").get<std::string>();
        if (!v.at("reason").is_null()) vi.reason = v.at("reason").get<std::string>();
        r.validated_indicators.push_back(std::move(vi));
    }
    r.bundle_refs = j.at("bundle_refs").get<std::vector<std::string>>();
    const auto& v = j.at("verdict");
    r.verdict.sigma = v.at("sigma").get<double>();
    r.verdict.decision = parse_decision(v.at("decision").get<std::string>());
    r.verdict.feedback = v.at("feedback").get<std::vector<std::string>>();
    r.route = j.at("route").get<std::vector<std::string>>();
    if (!j.at("report").is_null()) r.report = report_from_json(j.at("report"));
    if (!j.at("specialist").is_null()) r.specialist = j.at("specialist").get<std::string>();
    if (!j.at("label").is_null()) r.label = label_from_json(j.at("label"));
    if (!j.at("sample_sha256").is_null()) r.sample_sha256 = j.at("sample_sha256").get<std::string>();
    r.tool_status = j.at("tool_status").get<std::map<std::string, bool>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.from_cache = j.at("from_cache").get<bool>();
    return r;
}

// ---- config --------------------------------------------------------------

EngineConfig EngineConfig::from_json(const json& j) {
    EngineConfig c;
    c.model_id = j.value("model_id", c.model_id);
    if (j.contains("thresholds")) {
        c.thresholds.accept = j["thresholds"].value("accept", c.thresholds.accept);
        c.thresholds.retry = j["thresholds"].value("retry", c.thresholds.retry);
    }
    if (j.contains("weights")) {
        auto w = j["weights"].get<std::vector<double>>();
        if (w.size() != 5) throw Error(ErrorCode::SchemaViolation, "weights needs five entries");
        std::copy(w.begin(), w.end(), c.weights.begin());
        gate::weighted_quality({}, c.weights);  // validates the sum
    }
    gate::gate(0.0, c.thresholds);  // validates the order
    c.retry_budget = j.value("retry_budget", c.retry_budget);
    c.cache_capacity = j.value("cache_capacity", c.cache_capacity);
    if (j.contains("cache_dir") && !j["cache_dir"].is_null()) c.cache_dir = j["cache_dir"].get<std::string>();
    c.prompt.token_budget = j.value("token_budget", c.prompt.token_budget);
    c.prompt.system_preamble = j.value("system_preamble", c.prompt.system_preamble);
    if (j.contains("retrieval")) {
        const auto& r = j["retrieval"];
        c.retrieval.k_const = r.value("rrf_k", c.retrieval.k_const);
        c.retrieval.top_k = r.value("top_k", c.retrieval.top_k);
        c.retrieval.candidate_k = r.value("candidate_k", c.retrieval.candidate_k);
        c.retrieval.bm25.k1 = r.value("bm25_k1", c.retrieval.bm25.k1);
        c.retrieval.bm25.b = r.value("bm25_b", c.retrieval.bm25.b);
        c.retrieval.near_duplicate_cosine = r.value("near_duplicate_cosine", c.retrieval.near_duplicate_cosine);
        c.retrieval.confidence_floor = r.value("confidence_floor", c.retrieval.confidence_floor);
    }
    c.tool_timeout = std::chrono::milliseconds(j.value("tool_timeout_ms", c.tool_timeout.count()));
    if (j.contains("tool_fixture_dir") && !j["tool_fixture_dir"].is_null()) {
        c.tool_fixture_dir = j["tool_fixture_dir"].get<std::string>();
    }
    c.decompiler_command = j.value("decompiler_command", c.decompiler_command);
    c.disassembler_command = j.value("disassembler_command", c.disassembler_command);
    if (j.contains("generator_endpoint") && !j["generator_endpoint"].is_null()) {
        c.generator_endpoint = j["generator_endpoint"].get<std::string>();
    }
    c.generator_api_key_env = j.value("generator_api_key_env", c.generator_api_key_env);
    c.max_sample_bytes = j.value("max_sample_bytes", c.max_sample_bytes);
    return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& path) {
    try {
        return from_json(json::parse(text::read_file(path.string())));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, "config " + path.string() + ": " + e.what());
    }
}

json to_json(const EngineConfig& c) {
    return {{"model_id", c.model_id},
            {"thresholds", {{"accept", c.thresholds.accept}, {"retry", c.thresholds.retry}}},
            {"weights", c.weights},
            {"retry_budget", c.retry_budget},
            {"cache_capacity", c.cache_capacity},
            {"cache_dir", c.cache_dir ? json(c.cache_dir->string()) : json(nullptr)},
            {"token_budget", c.prompt.token_budget},
            {"system_preamble", c.prompt.system_preamble},
            {"retrieval",
             {{"rrf_k", c.retrieval.k_const},
              {"top_k", c.retrieval.top_k},
              {"candidate_k", c.retrieval.candidate_k},
              {"bm25_k1", c.retrieval.bm25.k1},
              {"bm25_b", c.retrieval.bm25.b},
              {"near_duplicate_cosine", c.retrieval.near_duplicate_cosine},
              {"confidence_floor", c.retrieval.confidence_floor}}},
            {"tool_timeout_ms", c.tool_timeout.count()},
            {"tool_fixture_dir", c.tool_fixture_dir ? json(c.tool_fixture_dir->string()) : json(nullptr)},
            {"decompiler_command", c.decompiler_command},
            {"disassembler_command", c.disassembler_command},
            {"generator_endpoint", opt(c.generator_endpoint)},
            {"generator_api_key_env", c.generator_api_key_env},
            {"max_sample_bytes", c.max_sample_bytes}};
}

// ---- cache ---------------------------------------------------------------

ResponseCache::ResponseCache(std::size_t capacity, std::optional<std::filesystem::path> dir)
    : capacity_(std::max<std::size_t>(capacity, 1)), dir_(std::move(dir)) {
    if (dir_) std::filesystem::create_directories(*dir_);
}

std::optional<json> ResponseCache::get(const std::string& key) {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(key); it != index_.end()) {
        order_.splice(order_.begin(), order_, it->second);
        return it->second->second;
    }
    if (!dir_) return std::nullopt;
    auto path = *dir_ / (key + ".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        auto j = json::parse(text::read_file(path.string()));
        order_.emplace_front(key, j);
        index_[key] = order_.begin();
        while (order_.size() > capacity_) {
            index_.erase(order_.back().first);
            order_.pop_back();
        }
        return j;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void ResponseCache::put(const std::string& key, const json& value) {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(key); it != index_.end()) {
        it->second->second = value;
        order_.splice(order_.begin(), order_, it->second);
    } else {
        order_.emplace_front(key, value);
        index_[key] = order_.begin();
        while (order_.size() > capacity_) {
            index_.erase(order_.back().first);
            order_.pop_back();
        }
    }
    if (dir_) text::write_file_atomic((*dir_ / (key + ".json")).string(), value.dump());
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mu_);
    return order_.size();
}

// ---- engine --------------------------------------------------------------

Engine::Engine(EngineConfig config, EngineDeps deps)
    : config_(std::move(config)),
      deps_(std::move(deps)),
      catalog_(deps_.catalog ? *deps_.catalog : tasks::TaskCatalog::builtin()),
      cache_(config_.cache_capacity, config_.cache_dir) {
    if (!deps_.knowledge) throw Error(ErrorCode::Precondition, "engine needs a knowledge store");
    retriever_ = std::make_unique<retrieve::Retriever>(*deps_.knowledge, deps_.embedder, config_.retrieval);
    if (deps_.knowledge->is_open()) retriever_->build_all();
    deps_.adapters.timeout = config_.tool_timeout;
}

void Engine::rebuild_indexes() { retriever_->build_all(); }

std::optional<AnalysisResponse> Engine::find_response(const std::string& response_id) {
    auto j = cache_.get(response_id);
    if (!j) return std::nullopt;
    return response_from_json(*j);
}

AnalysisResponse Engine::analyze(const AnalysisRequest& request, const StageObserver& observer) {
    auto query = normalize_query(request.query);
    if (query.display.empty() && !request.sample) {
        throw Error(ErrorCode::InvalidRequest, "a query or a sample is required");
    }
    if (request.sample && request.sample->size() > config_.max_sample_bytes) {
        throw Error(ErrorCode::InvalidRequest, "sample exceeds the " + std::to_string(config_.max_sample_bytes) +
                                                   "-byte cap");
    }
    std::optional<std::string> digest;
    if (request.sample) digest = digest::sha256_hex(binscan::Bytes(*request.sample));
    std::string model = request.model_id.empty() ? config_.model_id : request.model_id;
    if (!request.include_report) model += "#no-report";
    const std::string key = cache_key(query.key, digest, model);

    auto from_cache = [&](const json& j) {
        auto r = response_from_json(j);
        r.from_cache = true;
        if (observer) observer("cache", {{"response_id", r.response_id}});
        return r;
    };

    {
        std::unique_lock lock(flight_mu_);
        while (true) {
            if (auto hit = cache_.get(key)) return from_cache(*hit);
            if (!in_flight_.contains(key)) break;
            flight_cv_.wait(lock);
        }
        in_flight_[key] = 1;
    }
    auto release = [&] {
        std::lock_guard lock(flight_mu_);
        in_flight_.erase(key);
        flight_cv_.notify_all();
    };
    try {
        auto response = compute(request, query, key, digest, observer);
        cache_.put(key, to_json(response));
        release();
        return response;
    } catch (...) {
        release();
        throw;
    }
}

std::string Engine::fallback_answer(const GenerationRequest& request) {
    GenerationRequest plain = request;
    plain.feedback.reset();
    return drop_invalid_lines(template_.generate(plain), *deps_.knowledge, request.transcript);
}

AnalysisResponse Engine::compute(const AnalysisRequest& request, const NormalizedQuery& query, const std::string& key,
                                 const std::optional<std::string>& digest, const StageObserver& observer) {
    ++computations_;
    auto emit = [&](std::string_view stage, const json& detail) {
        if (observer) observer(stage, detail);
    };
    AnalysisResponse response;
    response.response_id = key;
    response.sample_sha256 = digest;

    std::optional<Transcript> transcript;
    if (request.sample) {
        binscan::Bytes bytes(*request.sample);
        ChainOptions options{deps_.knowledge, deps_.rules};
        try {
            transcript = run_static_chain(bytes, binscan::detect_file_type(bytes), deps_.adapters, options);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::AllToolsFailed) throw;
            response.warnings.push_back("every static-analysis tool failed; answering from the query only");
        }
        if (transcript) {
            std::optional<std::string> imphash = transcript->pe ? transcript->pe->imphash : std::nullopt;
            response.label = attrib::label_sample(transcript->sha256, imphash, deps_.labeling);
            if (response.label->cti_degraded) response.warnings.push_back("CTI lookup unavailable");
            response.tool_status = transcript->tool_status;
        }
        emit("static_chain", {{"tool_status", response.tool_status}});
    }
    const Transcript* t = transcript ? &*transcript : nullptr;

    std::string retrieval_query = query.display;
    if (retrieval_query.empty() && t) retrieval_query = sample_query(*t);
    auto bundle = retriever_->hybrid_retrieve(retrieval_query, t);
    for (const auto& [collection, status] : bundle.status) {
        if (status != "ok") response.warnings.push_back(collection + ": " + status);
    }
    for (const auto& e : bundle.evidence) response.bundle_refs.push_back(ref_of(e));
    emit("retrieval", {{"evidence", bundle.evidence.size()}, {"status", bundle.status}});

    auto prompt = format_prompt(query, bundle, t, config_.prompt);
    const tasks::TaskType* specialist = query.display.empty() ? nullptr : match_specialist(prompt.text, catalog_);
    if (specialist) response.specialist = specialist->name;

    GenerationRequest gen_request;
    gen_request.prompt = prompt.text;
    gen_request.query = query.display;
    gen_request.specialist = specialist;
    gen_request.bundle = &bundle;
    gen_request.transcript = t;
    gen_request.label = response.label ? &*response.label : nullptr;
    gen_request.required_sections = specialist ? specialist->required_sections
                                    : t        ? catalog_.default_sections()
                                               : catalog_.query_only_sections();

    auto score = [&](const std::string& answer) {
        auto found = ioc::extract_indicators(answer);
        auto batch = ioc::validate_all(found, *deps_.knowledge, t);
        auto dims = gate::score_dimensions(answer, batch.indicators, gen_request.required_sections,
                                           config_.dimensions);
        return gate::gate(gate::weighted_quality(dims, config_.weights), config_.thresholds, dims);
    };
    auto attempt = [&](const std::optional<std::string>& feedback) -> std::string {
        GenerationRequest r = gen_request;
        r.feedback = feedback;
        try {
            return deps_.generator->generate(r);
        } catch (const std::exception&) {
            return {};
        }
    };

    std::string answer;
    bool use_fallback = false;
    std::size_t attempts = 0;
    if (!deps_.generator) {
        if (bundle.evidence.empty() && !t) {
            throw Error(ErrorCode::GeneratorUnavailable, "no generator configured and no evidence to fall back on");
        }
        use_fallback = true;
    } else {
        answer = attempt(std::nullopt);
        ++attempts;
        if (refusal_(answer)) {
            response.route.push_back("refusal_retry");
            answer = attempt(std::string("The previous output was empty or a refusal. Answer from the evidence."));
            ++attempts;
            use_fallback = refusal_(answer);
        }
        if (!use_fallback) {
            auto verdict = score(answer);
            response.route.push_back(std::string(gate::to_string(verdict.decision)));
            std::size_t retries = 0;
            while (verdict.decision == gate::Decision::RetryWithFeedback && retries < config_.retry_budget) {
                ++retries;
                auto again = attempt("Improve these quality dimensions: " + text::join(verdict.feedback, ", ") + ".");
                ++attempts;
                if (refusal_(again)) {
                    verdict.decision = gate::Decision::TemplateFallback;
                    break;
                }
                answer = std::move(again);
                verdict = score(answer);
                response.route.push_back(std::string(gate::to_string(verdict.decision)));
            }
            // After the retry budget, anything at or above the retry threshold stands.
            use_fallback = verdict.decision == gate::Decision::TemplateFallback;
        }
    }
    emit("generation", {{"generator", deps_.generator ? deps_.generator->name() : std::string("none")},
                        {"attempts", attempts}});

    if (use_fallback) {
        if (bundle.evidence.empty() && !t) {
            throw Error(ErrorCode::GeneratorUnavailable, "generation failed and no evidence is available");
        }
        answer = fallback_answer(gen_request);
        response.route.push_back("template_fallback");
    }
    response.verdict = score(answer);

    // Evidence attachment.
    if (!prompt.cited_refs.empty()) {
        if (!answer.empty() && answer.back() != '\n') answer += "\n";
        answer += "\n## Sources\n";
        for (std::size_t i = 0; i < bundle.evidence.size(); ++i) {
            auto ref = ref_of(bundle.evidence[i]);
            if (std::find(prompt.cited_refs.begin(), prompt.cited_refs.end(), ref) == prompt.cited_refs.end()) continue;
            answer += "- [E" + std::to_string(i + 1) + "] " + ref + "\n";
        }
    }
    auto found = ioc::extract_indicators(answer);
    auto batch = ioc::validate_all(found, *deps_.knowledge, t);
    if (batch.knowledge_degraded) response.warnings.push_back("knowledge store unavailable during validation");
    response.answer = ioc::annotate_response(answer, batch.indicators);
    response.validated_indicators = std::move(batch.indicators);
    emit("verification", {{"sigma", response.verdict.sigma},
                          {"decision", gate::to_string(response.verdict.decision)},
                          {"route", response.route},
                          {"indicators", response.validated_indicators.size()}});

    if (t && request.include_report) {
        response.report = assemble_report(t, response, *deps_.knowledge);
        emit("report", {{"threat_level", to_string(response.report->step4_assessment.threat_level)},
                        {"verdict_flag", to_string(response.report->step4_assessment.verdict_flag)}});
    }
    return response;
}

// ---- fixture wiring ------------------------------------------------------

std::unique_ptr<FixtureWorld> FixtureWorld::load(const std::filesystem::path& data_dir,
                                                 const std::filesystem::path& fixture_dir) {
    auto w = std::make_unique<FixtureWorld>();
    w->knowledge = std::make_unique<kb::KnowledgeStore>();
    for (auto kind : kb::kAllCollections) {
        w->knowledge->ingest_collection(data_dir / "kb" / (std::string(kb::to_string(kind)) + ".jsonl"), kind);
    }
    auto truth = fixture_dir / "ground_truth.json";
    if (std::filesystem::exists(truth)) w->ground_truth = attrib::load_ground_truth(truth);
    w->cti = std::make_unique<attrib::FixtureCtiClient>(fixture_dir / "cti");
    w->imphash_table = attrib::ImphashTable::from_ground_truth(w->ground_truth);
    return w;
}

EngineDeps FixtureWorld::deps(const std::filesystem::path& fixture_dir) {
    EngineDeps d;
    d.knowledge = knowledge.get();
    d.generator = std::make_shared<TemplateGenerator>();
    d.adapters = AdapterSet::fixtures(fixture_dir / "tools");
    d.labeling = {&ground_truth, cti.get(), &imphash_table, nullptr};
    return d;
}

}  // namespace triage::engine
