#include "triage/corpus.hpp"
#include "triage/error.hpp"
#include "triage/facade.hpp"
#include "triage/metrics.hpp"
#include "triage/text.hpp"

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

namespace triage::facade {

using nlohmann::json;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::string data_dir = TRIAGE_DATA_DIR;
    std::string fixture_dir = TRIAGE_FIXTURE_DIR;
    std::string cache_dir;
    bool json_out = false;
};

json load_config(const GlobalOptions& g) {
    json cfg = json::object();
    if (!g.config_path.empty()) {
        try {
            cfg = json::parse(text::read_file(g.config_path));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaViolation, "config " + g.config_path + ": " + e.what());
        }
    }
    if (!cfg.contains("engine")) cfg["engine"] = json::object();
    if (!g.cache_dir.empty()) {
        cfg["engine"]["cache_dir"] = g.cache_dir;
    } else if (!cfg["engine"].contains("cache_dir")) {
        // `report <id>` in a later process needs the responses on disk.
        cfg["engine"]["cache_dir"] = (std::filesystem::temp_directory_path() / "triage-cache").string();
    }
    return cfg;
}

std::unique_ptr<Application> make_app(const GlobalOptions& g) {
    return Application::create(load_config(g), g.data_dir, g.fixture_dir);
}

void write_output(const std::string& path, const std::string& body) {
    if (path.empty() || path == "-")
        std::cout << body;
    else
        text::write_file_atomic(path, body);
}

std::string read_input(const std::string& path) {
    if (path == "-") {
        std::stringstream ss;
        ss << std::cin.rdbuf();
        return ss.str();
    }
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::IoFailure, "no such file: " + path);
    return text::read_file(path);
}

kb::CollectionKind kind_arg(const std::string& s) {
    auto k = kb::parse_collection(s);
    if (!k) throw Error(ErrorCode::InvalidRequest, "unknown collection '" + s + "'");
    return *k;
}

std::vector<std::string> manifest_samples(const std::string& fixture_dir) {
    auto manifest = json::parse(text::read_file((std::filesystem::path(fixture_dir) / "manifest.json").string()));
    std::vector<std::string> out;
    for (const auto& e : manifest) out.push_back((std::filesystem::path(fixture_dir) / e.at("file").get<std::string>()).string());
    return out;
}

// Balance rows from either an array of {family, category} objects or a
// sha256 -> {family, category} map.
std::vector<metrics::LabelPair> read_labels(const std::string& path) {
    json j;
    try {
        j = json::parse(read_input(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, path + ": " + e.what());
    }
    std::vector<metrics::LabelPair> out;
    auto take = [&](const json& e) {
        if (!e.is_object() || !e.contains("family") || !e.contains("category"))
            throw Error(ErrorCode::SchemaViolation, path + ": each label needs family and category");
        out.emplace_back(e["category"].get<std::string>(), e["family"].get<std::string>());
    };
    if (j.is_array())
        for (const auto& e : j) take(e);
    else if (j.is_object() && j.contains("labels"))
        for (const auto& e : j["labels"]) take(e);
    else if (j.is_object())
        for (const auto& [_, e] : j.items()) take(e);
    else
        throw Error(ErrorCode::SchemaViolation, path + ": expected an array or object of labels");
    return out;
}

std::string fmt(double v, int prec) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

corpus::QaContext qa_context(Application& app, double tolerance) {
    corpus::QaContext q;
    q.knowledge = app.world->knowledge.get();
    q.config.balance_tolerance = tolerance;
    q.config.thresholds = app.engine->config().thresholds;
    auto* world = app.world.get();
    q.labels = [world](const std::string& sha) -> std::optional<attrib::FamilyLabel> {
        attrib::LabelingContext ctx{&world->ground_truth, world->cti.get(), &world->imphash_table, nullptr};
        auto l = attrib::label_sample(sha, std::nullopt, ctx);
        if (l.source == attrib::LabelSource::Unknown) return std::nullopt;
        return l;
    };
    return q;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Static malware triage: analysis, knowledge base, corpus tooling and HTTP service"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config_path, "JSON config file (see docs/config.md)");
    app.add_option("--data-dir", g.data_dir, "knowledge and task data directory");
    app.add_option("--fixtures", g.fixture_dir, "fixture directory (tool transcripts, CTI reports, samples)");
    app.add_option("--cache-dir", g.cache_dir, "response cache directory");
    app.add_flag("--json", g.json_out, "machine-readable output");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "analyze a sample file");
    std::string a_file, a_query;
    bool a_no_report = false;
    analyze->add_option("file", a_file, "sample path")->required();
    analyze->add_option("-q,--query", a_query, "question about the sample");
    analyze->add_flag("--no-report", a_no_report, "skip the structured report");
    analyze->fallthrough();

    // query
    auto* query = app.add_subcommand("query", "ask a question without a sample");
    std::string q_text;
    query->add_option("text", q_text, "question")->required();
    query->fallthrough();

    // report
    auto* report = app.add_subcommand("report", "print a cached report by response id");
    std::string r_id, r_format = "md";
    report->add_option("id", r_id, "response id")->required();
    report->add_option("--format", r_format, "json or md")->check(CLI::IsMember({"json", "md"}));
    report->fallthrough();

    // kb
    auto* kbc = app.add_subcommand("kb", "knowledge base");
    kbc->require_subcommand(1);
    auto* kb_ingest = kbc->add_subcommand("ingest", "ingest a JSONL collection into a persisted store");
    std::string ki_file, ki_kind, ki_store;
    kb_ingest->add_option("file", ki_file, "JSONL file")->required();
    kb_ingest->add_option("--kind", ki_kind, "attack_techniques|cwe_weaknesses|winapi_behavior|family_intel")->required();
    kb_ingest->add_option("--store", ki_store, "store directory")->required();
    kb_ingest->fallthrough();
    auto* kb_get = kbc->add_subcommand("get", "look up a document by key");
    std::string kg_kind, kg_key, kg_store;
    kb_get->add_option("kind", kg_kind, "collection")->required();
    kb_get->add_option("key", kg_key, "document key")->required();
    kb_get->add_option("--store", kg_store, "store directory (shipped data when omitted)");
    kb_get->fallthrough();
    kbc->fallthrough();

    // retrieve
    auto* ret = app.add_subcommand("retrieve", "retrieval indexes");
    ret->require_subcommand(1);
    auto* ret_build = ret->add_subcommand("build", "build every collection index and report its state");
    ret_build->fallthrough();
    auto* ret_search = ret->add_subcommand("search", "hybrid retrieval for a query");
    std::string rs_query;
    ret_search->add_option("query", rs_query, "query text")->required();
    ret_search->fallthrough();
    ret->fallthrough();

    // corpus
    auto* cor = app.add_subcommand("corpus", "instruction corpus tooling");
    cor->require_subcommand(1);
    auto* cg = cor->add_subcommand("generate", "generate records for samples x task types");
    std::vector<std::string> cg_samples;
    std::size_t cg_count = 3;
    std::string cg_tasks = "all", cg_modes = "base,cot,cove", cg_pipeline = "aaj", cg_out = "-";
    cg->add_option("--sample", cg_samples, "sample path (repeatable); first --count manifest samples otherwise");
    cg->add_option("--count", cg_count, "manifest samples to use");
    cg->add_option("--tasks", cg_tasks, "comma-separated task ids or 'all'");
    cg->add_option("--modes", cg_modes, "comma-separated subset of base,cot,cove");
    cg->add_option("--pipeline", cg_pipeline, "aaj or template");
    cg->add_option("-o,--out", cg_out, "output JSONL");
    cg->fallthrough();
    auto* cq = cor->add_subcommand("qa", "QA-validate a JSONL corpus");
    std::string cq_file, cq_out;
    double cq_tol = 0.20;
    cq->add_option("file", cq_file, "input JSONL")->required();
    cq->add_option("--tolerance", cq_tol, "relative balance tolerance");
    cq->add_option("-o,--out", cq_out, "write records with updated qa_status");
    cq->fallthrough();
    auto* cb = cor->add_subcommand("backfill", "regenerate failing records");
    std::string cb_file, cb_out = "-";
    std::size_t cb_budget = 2;
    cb->add_option("file", cb_file, "input JSONL")->required();
    cb->add_option("--budget", cb_budget, "regeneration attempts per record");
    cb->add_option("-o,--out", cb_out, "output JSONL");
    cb->fallthrough();
    auto* ce = cor->add_subcommand("export", "difficulty-sorted export of passed records");
    std::string ce_file, ce_out = "-";
    ce->add_option("file", ce_file, "input JSONL")->required();
    ce->add_option("-o,--out", ce_out, "output JSONL");
    ce->fallthrough();
    cor->fallthrough();

    // stats
    auto* stats = app.add_subcommand("stats", "dataset statistics");
    stats->require_subcommand(1);
    auto* sb = stats->add_subcommand("balance", "per-category entropy and evenness");
    std::string sb_file;
    sb->add_option("labels", sb_file, "labels JSON")->required();
    sb->fallthrough();
    stats->fallthrough();

    // serve
    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    std::string sv_host;
    int sv_port = -1;
    std::size_t sv_workers = 0;
    serve->add_option("--host", sv_host, "bind address");
    serve->add_option("--port", sv_port, "port (0 picks one)");
    serve->add_option("--workers", sv_workers, "worker threads");
    serve->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        if (*analyze) {
            auto a = make_app(g);
            engine::AnalysisRequest req;
            req.sample = binscan::read_sample(a_file);
            req.query = a_query;
            req.include_report = !a_no_report;
            auto resp = a->engine->analyze(req);
            if (g.json_out) {
                std::cout << analysis_body(resp, std::nullopt, std::nullopt).dump(2) << "\n";
            } else {
                if (!a_query.empty() || !resp.report) std::cout << resp.answer << "\n\n";
                if (resp.report) std::cout << engine::render_markdown(*resp.report);
                std::cerr << "response id: " << resp.response_id << "\n";
            }
        } else if (*query) {
            auto a = make_app(g);
            engine::AnalysisRequest req;
            req.query = q_text;
            auto resp = a->engine->analyze(req);
            if (g.json_out)
                std::cout << analysis_body(resp, std::nullopt, std::nullopt).dump(2) << "\n";
            else
                std::cout << resp.answer << "\n";
        } else if (*report) {
            auto a = make_app(g);
            auto resp = a->engine->find_response(r_id);
            if (!resp) throw Error(ErrorCode::NotFound, "no cached response " + r_id);
            if (!resp->report) throw Error(ErrorCode::NotFound, "response " + r_id + " carries no report");
            if (r_format == "json" || g.json_out)
                std::cout << engine::to_json(*resp->report).dump(2) << "\n";
            else
                std::cout << engine::render_markdown(*resp->report);
        } else if (*kb_ingest) {
            kb::KnowledgeStore store(ki_store);
            auto r = store.ingest_collection(ki_file, kind_arg(ki_kind));
            json out = {{"collection", ki_kind}, {"ingested", r.count}, {"duplicates_replaced", r.duplicates_replaced},
                        {"size", store.size(kind_arg(ki_kind))}};
            if (g.json_out)
                std::cout << out.dump(2) << "\n";
            else
                std::cout << "ingested " << r.count << " documents into " << ki_kind << " (" << r.duplicates_replaced
                          << " replaced, " << out["size"] << " total)\n";
        } else if (*kb_get) {
            std::unique_ptr<kb::KnowledgeStore> own;
            std::unique_ptr<engine::FixtureWorld> world;
            const kb::KnowledgeStore* store = nullptr;
            if (!kg_store.empty()) {
                own = std::make_unique<kb::KnowledgeStore>(kg_store);
                store = own.get();
            } else {
                world = engine::FixtureWorld::load(g.data_dir, g.fixture_dir);
                store = world->knowledge.get();
            }
            auto doc = store->lookup(kind_arg(kg_kind), kg_key);
            if (!doc) throw Error(ErrorCode::NotFound, "no " + kg_kind + " document for '" + kg_key + "'");
            std::cout << kb::to_json(*doc).dump(2) << "\n";
        } else if (*ret_build) {
            auto a = make_app(g);
            a->engine->rebuild_indexes();
            json out = json::object();
            for (auto kind : kb::kAllCollections) {
                auto idx = a->engine->retriever().index(kind);
                out[std::string(kb::to_string(kind))] = {
                    {"documents", a->world->knowledge->size(kind)},
                    {"built", idx != nullptr},
                    {"fingerprint", idx ? json(idx->fingerprint) : json(nullptr)},
                    {"embedder", idx ? json(idx->embedder) : json(nullptr)}};
            }
            if (g.json_out) {
                std::cout << out.dump(2) << "\n";
            } else {
                for (const auto& [name, v] : out.items())
                    std::cout << name << ": " << v["documents"] << " documents, "
                              << (v["built"].get<bool>() ? "built" : "not built") << "\n";
            }
        } else if (*ret_search) {
            auto a = make_app(g);
            auto bundle = a->engine->retriever().hybrid_retrieve(rs_query);
            if (g.json_out) {
                std::cout << retrieve::to_json(bundle).dump(2) << "\n";
            } else {
                for (const auto& e : bundle.evidence)
                    std::cout << fmt(e.confidence, 3) << "  " << e.ref << "  " << e.text.substr(0, 100) << "\n";
            }
        } else if (*cg) {
            auto a = make_app(g);
            auto deps = a->world->deps(g.fixture_dir);
            std::vector<std::string> paths = cg_samples;
            if (paths.empty()) {
                auto all = manifest_samples(g.fixture_dir);
                paths.assign(all.begin(), all.begin() + static_cast<long>(std::min(cg_count, all.size())));
            }
            std::vector<corpus::CorpusSample> samples;
            for (const auto& p : paths) samples.push_back(corpus::prepare_sample(binscan::read_sample(p), deps));
            const auto& catalog = tasks::TaskCatalog::builtin();
            std::vector<const tasks::TaskType*> task_list;
            if (cg_tasks == "all") {
                for (const auto& t : catalog.tasks()) task_list.push_back(&t);
            } else {
                for (const auto& id : text::split(cg_tasks, ',')) {
                    auto* t = catalog.find(text::trim(id));
                    if (!t) throw Error(ErrorCode::InvalidRequest, "unknown task '" + id + "'");
                    task_list.push_back(t);
                }
            }
            std::vector<corpus::Augmentation> modes;
            for (const auto& m : text::split(cg_modes, ',')) {
                auto mode = corpus::parse_augmentation(text::trim(m));
                if (!mode) throw Error(ErrorCode::InvalidRequest, "unknown mode '" + m + "'");
                modes.push_back(*mode);
            }
            auto pipeline = corpus::parse_pipeline(cg_pipeline);
            if (!pipeline) throw Error(ErrorCode::InvalidRequest, "unknown pipeline '" + cg_pipeline + "'");
            corpus::GenerationContext ctx;
            ctx.generator = deps.generator.get();
            ctx.knowledge = a->world->knowledge.get();
            ctx.retriever = &a->engine->retriever();
            auto records = corpus::generate_corpus(samples, task_list, modes, *pipeline, ctx);
            std::string body;
            for (const auto& r : records) body += corpus::to_json(r).dump() + "\n";
            write_output(cg_out, body);
        } else if (*cq) {
            auto a = make_app(g);
            auto records = corpus::load_jsonl(read_input(cq_file));
            auto rep = corpus::qa_validate(records, {}, qa_context(*a, cq_tol));
            if (!cq_out.empty()) {
                std::string body;
                for (const auto& r : records) body += corpus::to_json(r).dump() + "\n";
                write_output(cq_out, body);
            }
            // The report goes to stderr when stdout carries the records.
            auto& os = cq_out == "-" ? std::cerr : std::cout;
            if (g.json_out) {
                os << corpus::to_json(rep).dump(2) << "\n";
            } else {
                os << rep.passed << "/" << rep.total << " records passed; balance "
                   << (rep.balance_ok ? "ok" : "out of tolerance") << "\n";
                for (const auto& [id, reasons] : rep.failures)
                    os << "  " << id << ": " << text::join(reasons, "; ") << "\n";
            }
        } else if (*cb) {
            auto a = make_app(g);
            auto deps = a->world->deps(g.fixture_dir);
            auto records = corpus::load_jsonl(read_input(cb_file));
            std::map<std::string, corpus::CorpusSample> by_sha;
            for (const auto& p : manifest_samples(g.fixture_dir)) {
                auto s = corpus::prepare_sample(binscan::read_sample(p), deps);
                by_sha.emplace(s.transcript.sha256, std::move(s));
            }
            corpus::GenerationContext ctx;
            ctx.generator = deps.generator.get();
            ctx.knowledge = a->world->knowledge.get();
            ctx.retriever = &a->engine->retriever();
            auto regen = [&](const corpus::InstructionRecord& r) -> std::optional<corpus::InstructionRecord> {
                auto it = by_sha.find(r.sample_id);
                const auto* task = tasks::TaskCatalog::builtin().find(r.task_type);
                if (it == by_sha.end() || !task) return std::nullopt;
                return corpus::generate_record(it->second, *task, r.augmentation, r.pipeline, ctx);
            };
            auto result = corpus::backfill(std::move(records), regen, qa_context(*a, 0.2), cb_budget);
            std::string body;
            for (const auto& r : result.records) body += corpus::to_json(r).dump() + "\n";
            write_output(cb_out, body);
            std::cerr << "repaired " << result.repaired << ", excluded " << result.excluded.size() << "\n";
            for (const auto& id : result.excluded) std::cerr << "  excluded " << id << "\n";
        } else if (*ce) {
            auto records = corpus::load_jsonl(read_input(ce_file));
            write_output(ce_out, corpus::export_jsonl(records));
        } else if (*sb) {
            auto labels = read_labels(sb_file);
            auto rows = metrics::balance_report(labels);
            if (g.json_out) {
                json out = json::array();
                for (const auto& r : rows) out.push_back(metrics::to_json(r));
                std::cout << out.dump(2) << "\n";
            } else {
                std::cout << "category\tsamples\tfamilies\tH\tJ'\ttop_family\n";
                for (const auto& r : rows)
                    std::cout << r.category << "\t" << r.total_samples << "\t" << r.family_count << "\t"
                              << fmt(r.entropy, 3) << "\t" << (r.evenness ? fmt(*r.evenness, 3) : "N/A") << "\t"
                              << r.top_family << " (" << fmt(100.0 * r.top_family_share, 1) << "%)\n";
            }
        } else if (*serve) {
            auto a = make_app(g);
            if (!sv_host.empty()) a->server.host = sv_host;
            if (sv_port >= 0) a->server.port = sv_port;
            if (sv_workers > 0) a->server.workers = sv_workers;
            Service service(*a->engine, *a->world->knowledge);
            HttpServer server(service, a->server);
            int port = server.bind();
            std::cerr << "listening on " << a->server.host << ":" << port << "\n";
            server.listen();
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace triage::facade
