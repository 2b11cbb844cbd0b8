#pragma once

// CLI and HTTP surface over the engine. Service holds the transport-free
// request handling; HttpServer binds it to an HTTP listener.

#include "triage/engine.hpp"
#include "triage/error.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace triage::facade {

inline constexpr std::string_view kSchemaVersion = "1.0";

struct Turn {
    nlohmann::json request;  // query, sample_sha256, model_id, include_report
    engine::AnalysisResponse response;
};

struct SessionRecord {
    std::string session_id;
    std::vector<Turn> turns;  // append-only
    std::string created_at;   // ISO-8601 UTC
};

nlohmann::json to_json(const SessionRecord& s);

class SessionStore {
public:
    explicit SessionStore(std::size_t capacity = 1024) : capacity_(capacity) {}

    /// Returns `id` if it names a live session, otherwise a fresh session id.
    std::string open(const std::optional<std::string>& id);
    void append(const std::string& id, Turn turn);
    std::optional<SessionRecord> get(const std::string& id) const;
    std::size_t size() const;

private:
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::map<std::string, SessionRecord> sessions_;
    std::deque<std::string> order_;
};

struct StageEvent {
    std::string event;  // stage name, then "done" or "error"
    nlohmann::json data;
};

/// Per-request event buffers for the stream endpoint. Late subscribers see
/// the buffered history first.
class EventHub {
public:
    explicit EventHub(std::size_t retained = 256) : retained_(retained) {}

    void publish(const std::string& request_id, StageEvent ev);
    /// Publishes a terminal event; later publishes for the id are dropped.
    void finish(const std::string& request_id, StageEvent terminal);

    /// Events from index `from`, waiting up to `wait` for something new.
    /// `finished` is set once the terminal event is included.
    std::vector<StageEvent> read(const std::string& request_id, std::size_t from, std::chrono::milliseconds wait,
                                 bool& finished);

private:
    struct Channel {
        std::vector<StageEvent> events;
        bool finished = false;
    };
    Channel& channel(const std::string& id);

    std::size_t retained_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::string, Channel> channels_;
    std::deque<std::string> done_order_;
};

struct HttpResult {
    int status = 200;
    nlohmann::json body;  // schema_version is added by the service
    std::string content_type = "application/json";
    std::string raw;  // used instead of body when non-empty
};

/// Body shared by `analyze --json` and POST /api/analyze.
nlohmann::json analysis_body(const engine::AnalysisResponse& r, const std::optional<std::string>& session_id,
                             const std::optional<std::string>& request_id);

/// HTTP status for a domain error.
int status_for(ErrorCode code) noexcept;

struct AnalyzeInput {
    std::string query;
    std::optional<std::vector<std::uint8_t>> sample;
    std::optional<std::string> session_id;
    std::optional<std::string> request_id;
    std::string model_id;
    bool include_report = true;
};

class Service {
public:
    Service(engine::Engine& engine, kb::KnowledgeStore& knowledge);

    HttpResult analyze(const AnalyzeInput& in);
    HttpResult query(const nlohmann::json& body);
    HttpResult report(const std::string& id, bool markdown);
    HttpResult session(const std::string& id) const;
    HttpResult health();

    EventHub& events() noexcept { return events_; }
    SessionStore& sessions() noexcept { return sessions_; }
    std::uint64_t max_sample_bytes() const noexcept;

private:
    HttpResult error(int status, std::string_view code, const std::string& message) const;

    engine::Engine& engine_;
    kb::KnowledgeStore& knowledge_;
    SessionStore sessions_;
    EventHub events_;
};

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t workers = 4;
    std::chrono::seconds stream_wait{30};  // idle limit on the stream endpoint
    std::optional<std::filesystem::path> static_dir;  // console assets
};

ServerConfig server_config_from_json(const nlohmann::json& j);

class HttpServer {
public:
    HttpServer(Service& service, ServerConfig cfg);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds; returns the bound port (useful with port 0).
    int bind();
    /// Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Engine + knowledge wiring from a config document (see docs/config.md).
struct Application {
    std::unique_ptr<engine::FixtureWorld> world;
    std::unique_ptr<engine::Engine> engine;
    ServerConfig server;

    static std::unique_ptr<Application> create(const nlohmann::json& config, const std::filesystem::path& data_dir,
                                               const std::filesystem::path& fixture_dir);
};

/// CLI entry point. Exit codes: 0 success, 1 domain error, 2 usage error.
int cli_main(int argc, char** argv);

}  // namespace triage::facade
