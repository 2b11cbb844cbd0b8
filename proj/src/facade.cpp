#include "triage/facade.hpp"

#include "triage/error.hpp"
#include "triage/text.hpp"

#include <cstdlib>
#include <ctime>
#include <random>

#include <httplib.h>

namespace triage::facade {

using nlohmann::json;

namespace {

std::string random_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    static constexpr char hex[] = "0123456789abcdef";
    std::string out(32, '0');
    for (auto& c : out) c = hex[rng() & 15];
    return out;
}

std::string utc_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json with_schema(json body) {
    if (body.is_object()) body["schema_version"] = kSchemaVersion;
    return body;
}

}  // namespace

// ---- sessions --------------------------------------------------------------

json to_json(const SessionRecord& s) {
    json turns = json::array();
    for (const auto& t : s.turns) turns.push_back({{"request", t.request}, {"response", engine::to_json(t.response)}});
    return {{"session_id", s.session_id}, {"created_at", s.created_at}, {"turns", turns}};
}

std::string SessionStore::open(const std::optional<std::string>& id) {
    std::lock_guard lock(mu_);
    if (id && sessions_.count(*id)) return *id;
    std::string sid = random_id();
    sessions_[sid] = SessionRecord{sid, {}, utc_now()};
    order_.push_back(sid);
    while (order_.size() > capacity_) {
        sessions_.erase(order_.front());
        order_.pop_front();
    }
    return sid;
}

void SessionStore::append(const std::string& id, Turn turn) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "no session " + id);
    it->second.turns.push_back(std::move(turn));
}

std::optional<SessionRecord> SessionStore::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return std::nullopt;
    return it->second;
}

std::size_t SessionStore::size() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

// ---- events ----------------------------------------------------------------

EventHub::Channel& EventHub::channel(const std::string& id) { return channels_[id]; }

void EventHub::publish(const std::string& request_id, StageEvent ev) {
    {
        std::lock_guard lock(mu_);
        auto& ch = channel(request_id);
        if (ch.finished) return;
        ch.events.push_back(std::move(ev));
    }
    cv_.notify_all();
}

void EventHub::finish(const std::string& request_id, StageEvent terminal) {
    {
        std::lock_guard lock(mu_);
        auto& ch = channel(request_id);
        if (ch.finished) return;
        ch.events.push_back(std::move(terminal));
        ch.finished = true;
        done_order_.push_back(request_id);
        while (done_order_.size() > retained_) {
            channels_.erase(done_order_.front());
            done_order_.pop_front();
        }
    }
    cv_.notify_all();
}

std::vector<StageEvent> EventHub::read(const std::string& request_id, std::size_t from,
                                       std::chrono::milliseconds wait, bool& finished) {
    std::unique_lock lock(mu_);
    auto ready = [&] {
        auto it = channels_.find(request_id);
        return it != channels_.end() && (it->second.events.size() > from || it->second.finished);
    };
    cv_.wait_for(lock, wait, ready);
    finished = false;
    auto it = channels_.find(request_id);
    if (it == channels_.end()) return {};
    std::vector<StageEvent> out;
    for (std::size_t i = from; i < it->second.events.size(); ++i) out.push_back(it->second.events[i]);
    finished = it->second.finished;
    return out;
}

// ---- service ---------------------------------------------------------------

json analysis_body(const engine::AnalysisResponse& r, const std::optional<std::string>& session_id,
                   const std::optional<std::string>& request_id) {
    json body = engine::to_json(r);
    body["session_id"] = session_id ? json(*session_id) : json(nullptr);
    body["request_id"] = request_id ? json(*request_id) : json(nullptr);
    body["schema_version"] = kSchemaVersion;
    return body;
}

int status_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidRequest:
        case ErrorCode::SchemaViolation:
        case ErrorCode::Precondition:
        case ErrorCode::TooFewRecords: return 400;
        case ErrorCode::NotFound: return 404;
        case ErrorCode::UnsupportedFileType:
        case ErrorCode::MalformedHeader:
        case ErrorCode::EmptyInput:
        case ErrorCode::EmptyImports: return 422;
        case ErrorCode::KnowledgeUnavailable:
        case ErrorCode::IndexNotBuilt:
        case ErrorCode::GeneratorUnavailable:
        case ErrorCode::CtiUnavailable: return 503;
        default: return 500;
    }
}

Service::Service(engine::Engine& engine, kb::KnowledgeStore& knowledge) : engine_(engine), knowledge_(knowledge) {}

std::uint64_t Service::max_sample_bytes() const noexcept { return engine_.config().max_sample_bytes; }

HttpResult Service::error(int status, std::string_view code, const std::string& message) const {
    return {status, with_schema({{"error", {{"code", code}, {"message", message}}}}), "application/json", {}};
}

HttpResult Service::analyze(const AnalyzeInput& in) {
    if (in.sample && in.sample->size() > max_sample_bytes())
        return error(413, "PayloadTooLarge",
                     "sample is " + std::to_string(in.sample->size()) + " bytes; the cap is " +
                         std::to_string(max_sample_bytes()));

    std::string sid = sessions_.open(in.session_id);
    std::string rid = in.request_id.value_or(random_id());

    engine::AnalysisRequest req;
    req.query = in.query;
    req.sample = in.sample;
    req.model_id = in.model_id;
    req.include_report = in.include_report;

    auto observer = [this, &rid](std::string_view stage, const json& detail) {
        events_.publish(rid, {std::string(stage), with_schema(detail)});
    };
    try {
        auto resp = engine_.analyze(req, observer);
        json turn_req = {{"query", in.query},
                         {"sample_sha256", resp.sample_sha256 ? json(*resp.sample_sha256) : json(nullptr)},
                         {"model_id", in.model_id},
                         {"include_report", in.include_report},
                         {"request_id", rid}};
        sessions_.append(sid, {turn_req, resp});
        events_.finish(rid, {"done", with_schema({{"response_id", resp.response_id}, {"session_id", sid}})});
        return {200, analysis_body(resp, sid, rid), "application/json", {}};
    } catch (const Error& e) {
        events_.finish(rid, {"error", with_schema({{"code", to_string(e.code())}, {"message", e.what()}})});
        auto res = error(status_for(e.code()), to_string(e.code()), e.what());
        res.body["request_id"] = rid;
        return res;
    }
}

HttpResult Service::query(const json& body) {
    if (!body.is_object() || !body.contains("query") || !body["query"].is_string())
        return error(400, "InvalidRequest", "body must be a JSON object with a string 'query'");
    AnalyzeInput in;
    in.query = body["query"].get<std::string>();
    if (body.contains("session_id") && body["session_id"].is_string()) in.session_id = body["session_id"];
    if (body.contains("request_id") && body["request_id"].is_string()) in.request_id = body["request_id"];
    if (body.contains("model_id") && body["model_id"].is_string()) in.model_id = body["model_id"];
    if (body.contains("include_report") && body["include_report"].is_boolean())
        in.include_report = body["include_report"].get<bool>();
    return analyze(in);
}

HttpResult Service::report(const std::string& id, bool markdown) {
    auto resp = engine_.find_response(id);
    if (!resp) return error(404, "NotFound", "no response " + id);
    if (!resp->report) return error(404, "NotFound", "response " + id + " carries no report");
    if (markdown) return {200, {}, "text/markdown; charset=utf-8", engine::render_markdown(*resp->report)};
    return {200, with_schema({{"response_id", id}, {"report", engine::to_json(*resp->report)}}), "application/json",
            {}};
}

HttpResult Service::session(const std::string& id) const {
    auto s = sessions_.get(id);
    if (!s) return error(404, "NotFound", "no session " + id);
    return {200, with_schema(to_json(*s)), "application/json", {}};
}

HttpResult Service::health() {
    json stores = json::object();
    std::vector<std::string> missing;
    bool open = knowledge_.is_open();
    for (auto kind : kb::kAllCollections) {
        std::string name(kb::to_string(kind));
        std::size_t docs = open ? knowledge_.size(kind) : 0;
        bool indexed = engine_.retriever().index(kind) != nullptr;
        stores[name] = {{"documents", docs}, {"index", indexed ? "built" : "index_not_built"}};
        if (!open || docs == 0) missing.push_back(name);
    }
    json body = {{"status", missing.empty() ? "ok" : "unavailable"},
                 {"knowledge_open", open},
                 {"stores", stores},
                 {"missing", missing},
                 {"cache_model", engine_.config().model_id}};
    return {missing.empty() ? 200 : 503, with_schema(body), "application/json", {}};
}

// ---- HTTP ------------------------------------------------------------------

ServerConfig server_config_from_json(const json& j) {
    ServerConfig c;
    if (!j.is_object()) return c;
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.workers = j.value("workers", c.workers);
    c.stream_wait = std::chrono::seconds(j.value("stream_wait_s", static_cast<long>(c.stream_wait.count())));
    if (j.contains("static_dir") && j["static_dir"].is_string()) c.static_dir = j["static_dir"].get<std::string>();
    if (c.workers == 0) throw Error(ErrorCode::SchemaViolation, "server.workers must be at least 1");
    return c;
}

struct HttpServer::Impl {
    Impl(Service& s, ServerConfig c) : service(s), cfg(std::move(c)) {}
    Service& service;
    ServerConfig cfg;
    httplib::Server server;
    int port = -1;
};

namespace {

void send(httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_header("X-Schema-Version", std::string(kSchemaVersion));
    if (!r.raw.empty())
        res.set_content(r.raw, r.content_type);
    else
        res.set_content(with_schema(r.body).dump(), r.content_type);
}

HttpResult bad_request(const std::string& message) {
    return {400, {{"error", {{"code", "InvalidRequest"}, {"message", message}}}}, "application/json", {}};
}

bool truthy(const std::string& v) { return !(text::iequals(v, "false") || v == "0" || text::iequals(v, "no")); }

}  // namespace

HttpServer::HttpServer(Service& service, ServerConfig cfg) : impl_(std::make_unique<Impl>(service, cfg)) {
    auto& srv = impl_->server;
    auto* svc = &impl_->service;
    const std::size_t workers = cfg.workers;
    srv.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
    srv.set_payload_max_length(static_cast<std::size_t>(svc->max_sample_bytes()) * 2 + (1u << 20));

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string msg = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            msg = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(with_schema({{"error", {{"code", "Internal"}, {"message", msg}}}}).dump(),
                        "application/json");
    });

    srv.Post("/api/analyze", [svc](const httplib::Request& req, httplib::Response& res) {
        AnalyzeInput in;
        if (req.is_multipart_form_data()) {
            for (const char* key : {"file", "sample"})
                if (req.has_file(key)) {
                    const auto& f = req.get_file_value(key);
                    if (f.filename.empty() && f.content.empty()) continue;
                    in.sample = std::vector<std::uint8_t>(f.content.begin(), f.content.end());
                    break;
                }
            auto field = [&](const char* key) -> std::optional<std::string> {
                if (!req.has_file(key)) return std::nullopt;
                return req.get_file_value(key).content;
            };
            in.query = field("query").value_or("");
            in.session_id = field("session_id");
            in.request_id = field("request_id");
            in.model_id = field("model_id").value_or("");
            if (auto v = field("include_report")) in.include_report = truthy(*v);
        } else {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception&) {
                send(res, bad_request("expected multipart form data or a JSON body"));
                return;
            }
            send(res, svc->query(body));
            return;
        }
        send(res, svc->analyze(in));
    });

    srv.Post("/api/query", [svc](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            send(res, bad_request(std::string("malformed JSON: ") + e.what()));
            return;
        }
        send(res, svc->query(body));
    });

    srv.Get(R"(/api/report/([A-Za-z0-9_\-]+))", [svc](const httplib::Request& req, httplib::Response& res) {
        auto accept = req.get_header_value("Accept");
        bool md = text::icontains(accept, "text/markdown") || req.get_param_value("format") == "md";
        send(res, svc->report(req.matches[1], md));
    });

    srv.Get(R"(/api/session/([A-Za-z0-9_\-]+))", [svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc->session(req.matches[1]));
    });

    srv.Get("/api/health", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->health()); });

    const auto idle = std::chrono::duration_cast<std::chrono::milliseconds>(cfg.stream_wait);
    srv.Get(R"(/api/stream/([A-Za-z0-9_\-]+))", [svc, idle](const httplib::Request& req, httplib::Response& res) {
        std::string rid = req.matches[1];
        auto next = std::make_shared<std::size_t>(0);
        auto waited = std::make_shared<std::chrono::milliseconds>(0);
        res.set_header("Cache-Control", "no-cache");
        res.set_header("X-Schema-Version", std::string(kSchemaVersion));
        res.set_chunked_content_provider(
            "text/event-stream", [svc, rid, next, waited, idle](std::size_t, httplib::DataSink& sink) {
                constexpr std::chrono::milliseconds step{250};
                bool finished = false;
                auto events = svc->events().read(rid, *next, step, finished);
                for (const auto& ev : events) {
                    std::string frame = "event: " + ev.event + "\ndata: " + ev.data.dump() + "\n\n";
                    if (!sink.write(frame.data(), frame.size())) return false;
                }
                *next += events.size();
                if (finished) {
                    sink.done();
                    return true;
                }
                *waited = events.empty() ? *waited + step : std::chrono::milliseconds(0);
                if (*waited >= idle) {
                    std::string frame = "event: error\ndata: " +
                                        with_schema({{"code", "Timeout"}, {"message", "no events for " + rid}}).dump() +
                                        "\n\n";
                    sink.write(frame.data(), frame.size());
                    sink.done();
                }
                return true;
            });
    });

    if (cfg.static_dir) srv.set_mount_point("/", cfg.static_dir->string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
    auto& i = *impl_;
    if (i.cfg.port == 0) {
        i.port = i.server.bind_to_any_port(i.cfg.host);
    } else {
        i.port = i.server.bind_to_port(i.cfg.host, i.cfg.port) ? i.cfg.port : -1;
    }
    if (i.port < 0) throw Error(ErrorCode::IoFailure, "cannot bind " + i.cfg.host + ":" + std::to_string(i.cfg.port));
    return i.port;
}

void HttpServer::listen() {
    if (impl_->port < 0) bind();
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

// ---- wiring ----------------------------------------------------------------

std::unique_ptr<Application> Application::create(const json& config, const std::filesystem::path& data_dir_in,
                                                 const std::filesystem::path& fixture_dir_in) {
    std::filesystem::path data_dir = config.value("data_dir", data_dir_in.string());
    std::filesystem::path fixture_dir = config.value("fixture_dir", fixture_dir_in.string());

    auto app = std::make_unique<Application>();
    app->world = engine::FixtureWorld::load(data_dir, fixture_dir);
    if (config.contains("knowledge_dir") && config["knowledge_dir"].is_string()) {
        // Persisted store; empty collections are seeded from the shipped data.
        auto store = std::make_unique<kb::KnowledgeStore>(config["knowledge_dir"].get<std::string>());
        for (auto kind : kb::kAllCollections)
            if (store->size(kind) == 0)
                store->ingest_collection(data_dir / "kb" / (std::string(kb::to_string(kind)) + ".jsonl"), kind);
        app->world->knowledge = std::move(store);
    }

    auto ecfg = engine::EngineConfig::from_json(config.value("engine", json::object()));
    auto deps = app->world->deps(ecfg.tool_fixture_dir.value_or(fixture_dir));
    if (!ecfg.decompiler_command.empty())
        deps.adapters.decompiler = std::make_shared<engine::SubprocessToolAdapter>("decompiler", ecfg.decompiler_command);
    if (!ecfg.disassembler_command.empty())
        deps.adapters.disassembler =
            std::make_shared<engine::SubprocessToolAdapter>("disassembler", ecfg.disassembler_command);
    if (ecfg.generator_endpoint) {
        std::string key;
        if (!ecfg.generator_api_key_env.empty())
            if (const char* v = std::getenv(ecfg.generator_api_key_env.c_str())) key = v;
        deps.generator = std::make_shared<engine::HttpChatGenerator>(*ecfg.generator_endpoint, ecfg.model_id, key);
    }
    app->server = server_config_from_json(config.value("server", json::object()));
    app->engine = std::make_unique<engine::Engine>(std::move(ecfg), std::move(deps));
    return app;
}

}  // namespace triage::facade
