#include "triage/static_chain.hpp"

#include "triage/digest.hpp"
#include "triage/error.hpp"
#include "triage/text.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

namespace triage::engine {
namespace {

std::vector<std::string> lines_of(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(std::move(line));
    }
    return out;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return text::is_alnum(c) || c == '_'; }
bool is_label_char(char c) { return is_ident(c) || c == '.' || c == '$' || c == '@' || c == '?'; }

std::string strip_asm_comment(const std::string& line) {
    auto pos = line.find(';');
    return text::trim(pos == std::string::npos ? line : line.substr(0, pos));
}

std::optional<std::string> asm_label(const std::string& line) {
    if (line.size() < 2 || line.back() != ':') return std::nullopt;
    std::string name = line.substr(0, line.size() - 1);
    if (!std::all_of(name.begin(), name.end(), is_label_char)) return std::nullopt;
    return name;
}

// Last operand token with size qualifiers and brackets removed.
std::string branch_target(const std::string& operands) {
    auto tokens = text::split(operands, ' ');
    std::string last;
    for (auto& t : tokens) {
        if (!t.empty()) last = t;
    }
    std::string out;
    for (char c : last) {
        if (c != '[' && c != ']') out.push_back(c);
    }
    return out;
}

std::vector<std::string> top_fanout(const std::map<std::string, std::set<std::string>>& calls) {
    std::vector<std::pair<std::string, std::size_t>> v;
    for (const auto& [fn, callees] : calls) {
        if (!callees.empty()) v.emplace_back(fn, callees.size());
    }
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size() && i < 3; ++i) out.push_back(v[i].first);
    return out;
}

std::atomic<unsigned> g_temp_counter{0};

}  // namespace

// ---- adapters ----------------------------------------------------------

FixtureToolAdapter::FixtureToolAdapter(std::string name, std::filesystem::path dir, std::string file)
    : name_(std::move(name)), dir_(std::move(dir)), file_(std::move(file)) {}

std::string FixtureToolAdapter::run(const std::string& sha256, binscan::Bytes, std::chrono::milliseconds) {
    auto path = dir_ / text::lower(sha256) / file_;
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::IoFailure, name_ + ": no output for " + sha256);
    return text::read_file(path.string());
}

SubprocessToolAdapter::SubprocessToolAdapter(std::string name, std::vector<std::string> argv)
    : name_(std::move(name)), argv_(std::move(argv)) {
    if (argv_.empty()) throw Error(ErrorCode::Precondition, name_ + ": empty command");
}

std::string SubprocessToolAdapter::run(const std::string& sha256, binscan::Bytes sample,
                                       std::chrono::milliseconds timeout) {
    auto tmp = std::filesystem::temp_directory_path() /
               ("triage-" + sha256.substr(0, 16) + "-" + std::to_string(::getpid()) + "-" +
                std::to_string(g_temp_counter++) + ".bin");
    {
        std::ofstream out(tmp, std::ios::binary);
        out.write(reinterpret_cast<const char*>(sample.data()), static_cast<std::streamsize>(sample.size()));
        if (!out) throw Error(ErrorCode::IoFailure, name_ + ": cannot write temporary sample");
    }
    struct Cleanup {
        std::filesystem::path p;
        ~Cleanup() {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
    } cleanup{tmp};

    std::vector<std::string> args;
    for (const auto& a : argv_) args.push_back(a == "{sample}" ? tmp.string() : a);
    std::vector<char*> cargs;
    for (auto& a : args) cargs.push_back(a.data());
    cargs.push_back(nullptr);

    int pipefd[2];
    if (::pipe(pipefd) != 0) throw Error(ErrorCode::IoFailure, name_ + ": pipe failed");
    pid_t pid = ::fork();
    if (pid < 0) {
        ::close(pipefd[0]);
        ::close(pipefd[1]);
        throw Error(ErrorCode::IoFailure, name_ + ": fork failed");
    }
    if (pid == 0) {
        ::dup2(pipefd[1], STDOUT_FILENO);
        int devnull = ::open("/dev/null", O_WRONLY);
        if (devnull >= 0) ::dup2(devnull, STDERR_FILENO);
        ::close(pipefd[0]);
        ::close(pipefd[1]);
        ::execvp(cargs[0], cargs.data());
        ::_exit(127);
    }
    ::close(pipefd[1]);

    std::string output;
    auto deadline = std::chrono::steady_clock::now() + timeout;
    bool timed_out = false;
    char buf[4096];
    while (true) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            timed_out = true;
            break;
        }
        pollfd pfd{pipefd[0], POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) {
            timed_out = rc == 0;
            break;
        }
        ssize_t n = ::read(pipefd[0], buf, sizeof buf);
        if (n <= 0) break;
        output.append(buf, static_cast<std::size_t>(n));
    }
    ::close(pipefd[0]);
    if (timed_out) ::kill(pid, SIGKILL);
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (timed_out) throw Error(ErrorCode::IoFailure, name_ + ": timed out");
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw Error(ErrorCode::IoFailure, name_ + ": exited with failure status");
    }
    return output;
}

AdapterSet AdapterSet::fixtures(const std::filesystem::path& dir) {
    AdapterSet s;
    s.decompiler = std::make_shared<FixtureToolAdapter>("decompiler", dir, "decompiled.c");
    s.disassembler = std::make_shared<FixtureToolAdapter>("disassembler", dir, "disasm.s");
    return s;
}

// ---- graph summaries ---------------------------------------------------

GraphSummary summarize_cfg(std::string_view assembly) {
    enum class End { Fall, Jump, Cond, Ret };
    struct Block {
        std::optional<std::string> label;
        std::string function;
        End end = End::Fall;
        std::string target;
    };
    std::vector<Block> blocks;
    bool open = false;
    std::string function;
    for (const auto& raw : lines_of(assembly)) {
        auto line = strip_asm_comment(raw);
        if (line.empty()) continue;
        if (auto label = asm_label(line)) {
            if (label->front() != '.') function = *label;
            blocks.push_back({label, function, End::Fall, {}});
            open = true;
            continue;
        }
        if (!open) {
            blocks.push_back({std::nullopt, function, End::Fall, {}});
            open = true;
        }
        auto space = line.find_first_of(" \t");
        std::string mnemonic = text::lower(line.substr(0, space));
        std::string operands = space == std::string::npos ? "" : line.substr(space + 1);
        if (mnemonic == "ret" || mnemonic == "retn") {
            blocks.back().end = End::Ret;
            open = false;
        } else if (mnemonic == "jmp") {
            blocks.back().end = End::Jump;
            blocks.back().target = branch_target(operands);
            open = false;
        } else if (mnemonic.size() > 1 && mnemonic[0] == 'j') {
            blocks.back().end = End::Cond;
            blocks.back().target = branch_target(operands);
            open = false;
        }
    }
    std::unordered_set<std::string> labels;
    for (const auto& b : blocks) {
        if (b.label) labels.insert(*b.label);
    }
    GraphSummary g;
    g.nodes = blocks.size();
    std::map<std::string, std::size_t> per_function;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        bool has_next = i + 1 < blocks.size();
        switch (b.end) {
        case End::Fall: g.edges += has_next ? 1 : 0; break;
        case End::Jump: g.edges += labels.contains(b.target) ? 1 : 0; break;
        case End::Cond: g.edges += (labels.contains(b.target) ? 1 : 0) + (has_next ? 1 : 0); break;
        case End::Ret: break;
        }
        if (!b.function.empty()) ++per_function[b.function];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(per_function.begin(), per_function.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) g.hotspots.push_back(ranked[i].first);
    return g;
}

GraphSummary summarize_fcg_from_c(std::string_view c_source) {
    static const std::unordered_set<std::string> kKeywords = {"if",     "while", "for",  "switch", "return",
                                                              "sizeof", "do",    "else", "case",   "defined"};
    std::map<std::string, std::set<std::string>> calls;
    std::vector<std::string> order;
    std::string current;
    int depth = 0;
    auto scan = [&](const std::string& line, std::size_t from) {
        for (std::size_t i = from; i < line.size(); ++i) {
            char c = line[i];
            if (c == '{') ++depth;
            if (c == '}') --depth;
            if (!is_ident_start(c) || (i > 0 && is_ident(line[i - 1]))) continue;
            std::size_t j = i;
            while (j < line.size() && is_ident(line[j])) ++j;
            std::size_t k = j;
            while (k < line.size() && line[k] == ' ') ++k;
            std::string ident = line.substr(i, j - i);
            if (k < line.size() && line[k] == '(' && !kKeywords.contains(ident) && !current.empty()) {
                calls[current].insert(ident);
            }
            i = j - 1;
        }
        if (depth <= 0) {
            depth = 0;
            current.clear();
        }
    };
    for (const auto& line : lines_of(c_source)) {
        // A body may open on the line after its definition.
        bool opens_body = !current.empty() && text::trim(line).starts_with("{");
        if (depth == 0 && !opens_body) {
            if (line.empty() || !is_ident_start(line[0])) continue;
            auto paren = line.find('(');
            auto trimmed = text::trim(line);
            if (paren == std::string::npos || trimmed.back() == ';') continue;
            std::size_t end = paren;
            while (end > 0 && line[end - 1] == ' ') --end;
            std::size_t begin = end;
            while (begin > 0 && is_ident(line[begin - 1])) --begin;
            if (begin == end) continue;
            current = line.substr(begin, end - begin);
            if (!calls.contains(current)) order.push_back(current);
            calls[current];
            // Same-line body: scan from its opening brace.
            auto brace = line.find('{', paren);
            if (brace != std::string::npos) scan(line, brace);
            continue;
        }
        scan(line, 0);
    }
    std::set<std::string> nodes;
    GraphSummary g;
    for (const auto& [fn, callees] : calls) {
        nodes.insert(fn);
        nodes.insert(callees.begin(), callees.end());
        g.edges += callees.size();
    }
    g.nodes = nodes.size();
    g.hotspots = top_fanout(calls);
    return g;
}

GraphSummary summarize_fcg_from_asm(std::string_view assembly) {
    std::map<std::string, std::set<std::string>> calls;
    std::string current;
    for (const auto& raw : lines_of(assembly)) {
        auto line = strip_asm_comment(raw);
        if (line.empty()) continue;
        if (auto label = asm_label(line)) {
            if (label->front() != '.') {
                current = *label;
                calls[current];
            }
            continue;
        }
        auto space = line.find_first_of(" \t");
        if (text::lower(line.substr(0, space)) != "call" || space == std::string::npos || current.empty()) continue;
        auto target = branch_target(line.substr(space + 1));
        if (!target.empty()) calls[current].insert(target);
    }
    std::set<std::string> nodes;
    GraphSummary g;
    for (const auto& [fn, callees] : calls) {
        nodes.insert(fn);
        nodes.insert(callees.begin(), callees.end());
        g.edges += callees.size();
    }
    g.nodes = nodes.size();
    g.hotspots = top_fanout(calls);
    return g;
}

// ---- matchers ----------------------------------------------------------

std::vector<SuspiciousApi> match_suspicious_apis(const binscan::PeMetadata& pe, const kb::KnowledgeStore& store) {
    std::vector<SuspiciousApi> out;
    std::set<std::string> seen;
    for (const auto& imp : pe.imports) {
        for (const auto& fn : imp.functions) {
            if (seen.contains(fn)) continue;
            auto doc = store.lookup(kb::CollectionKind::WinApiBehavior, fn);
            if (!doc) continue;
            seen.insert(fn);
            SuspiciousApi api;
            api.name = doc->key;
            api.library = imp.library;
            api.note = doc->body;
            api.doc_id = doc->doc_id;
            for (const auto& tag : doc->tags) {
                if (tag.starts_with("risk:")) api.risk = parse_risk(tag.substr(5));
                if (tag.starts_with("behavior:")) api.behaviors.push_back(tag.substr(9));
            }
            out.push_back(std::move(api));
        }
    }
    return out;
}

std::vector<CapabilityRule> load_capability_rules(const std::filesystem::path& path) {
    auto j = nlohmann::json::parse(text::read_file(path.string()));
    std::vector<CapabilityRule> rules;
    for (const auto& r : j.at("rules")) {
        CapabilityRule rule;
        rule.name = r.at("name").get<std::string>();
        rule.technique = r.at("technique").get<std::string>();
        rule.risk = parse_risk(r.value("risk", "low"));
        rule.apis_all = r.value("apis_all", std::vector<std::string>{});
        rule.apis_any = r.value("apis_any", std::vector<std::string>{});
        rule.strings_any = r.value("strings_any", std::vector<std::string>{});
        rule.guidance = r.value("guidance", "");
        if (rule.apis_all.empty() && rule.apis_any.empty() && rule.strings_any.empty()) {
            throw Error(ErrorCode::SchemaViolation, "capability rule with no conditions: " + rule.name);
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

const std::vector<CapabilityRule>& builtin_capability_rules() {
    static const auto kRules = load_capability_rules(std::filesystem::path(TRIAGE_DATA_DIR) / "engine" /
                                                     "capabilities.json");
    return kRules;
}

std::vector<CapabilityMatch> match_capabilities(const binscan::PeMetadata& pe, std::span<const CapabilityRule> rules) {
    std::unordered_set<std::string> imported;
    std::map<std::string, std::string> display;
    for (const auto& imp : pe.imports) {
        for (const auto& fn : imp.functions) imported.insert(text::lower(fn));
    }
    std::vector<CapabilityMatch> out;
    for (const auto& rule : rules) {
        std::vector<std::string> evidence;
        bool ok = true;
        for (const auto& api : rule.apis_all) {
            if (!imported.contains(text::lower(api))) {
                ok = false;
                break;
            }
            evidence.push_back(api);
        }
        if (!ok) continue;
        if (!rule.apis_any.empty()) {
            std::size_t before = evidence.size();
            for (const auto& api : rule.apis_any) {
                if (imported.contains(text::lower(api))) evidence.push_back(api);
            }
            if (evidence.size() == before) continue;
        }
        if (!rule.strings_any.empty()) {
            std::optional<std::string> hit;
            for (const auto& needle : rule.strings_any) {
                for (const auto& s : pe.strings) {
                    if (text::icontains(s, needle)) {
                        hit = s.size() > 80 ? s.substr(0, 80) : s;
                        break;
                    }
                }
                if (hit) break;
            }
            if (!hit) continue;
            evidence.push_back(*hit);
        }
        out.push_back({rule.name, rule.technique, rule.risk, std::move(evidence), rule.guidance});
    }
    return out;
}

// ---- chain -------------------------------------------------------------

Transcript run_static_chain(binscan::Bytes sample, binscan::FileType type, const AdapterSet& adapters,
                            const ChainOptions& options) {
    if (type != binscan::FileType::PeExecutable) {
        throw Error(ErrorCode::UnsupportedFileType,
                    "static chain supports PE executables, got " + std::string(binscan::to_string(type)));
    }
    Transcript t;
    t.sha256 = digest::sha256_hex(sample);

    try {
        t.pe = binscan::parse_pe(sample);
        t.tool_status["binscan"] = true;
    } catch (const Error&) {
        t.tool_status["binscan"] = false;
    }

    auto launch = [&](const std::shared_ptr<ToolAdapter>& adapter) -> std::future<std::optional<std::string>> {
        if (!adapter) {
            std::promise<std::optional<std::string>> p;
            p.set_value(std::nullopt);
            return p.get_future();
        }
        return std::async(std::launch::async, [adapter, &t, sample, timeout = adapters.timeout] {
            try {
                auto out = adapter->run(t.sha256, sample, timeout);
                if (text::trim(out).empty()) return std::optional<std::string>{};
                return std::optional<std::string>(std::move(out));
            } catch (const std::exception&) {
                return std::optional<std::string>{};
            }
        });
    };
    auto decompiled = launch(adapters.decompiler);
    auto disassembled = launch(adapters.disassembler);
    t.decompiled_c = decompiled.get();
    t.assembly = disassembled.get();
    t.tool_status["decompiler"] = t.decompiled_c.has_value();
    t.tool_status["disassembler"] = t.assembly.has_value();

    if (t.assembly) t.cfg_summary = summarize_cfg(*t.assembly);
    if (t.decompiled_c) {
        t.fcg_summary = summarize_fcg_from_c(*t.decompiled_c);
    } else if (t.assembly) {
        t.fcg_summary = summarize_fcg_from_asm(*t.assembly);
    }
    t.tool_status["graph_summarizer"] = t.cfg_summary.has_value() || t.fcg_summary.has_value();

    bool api_ok = false;
    if (t.pe && options.knowledge) {
        try {
            t.suspicious_apis = match_suspicious_apis(*t.pe, *options.knowledge);
            api_ok = true;
        } catch (const Error&) {
        }
    }
    t.tool_status["api_matcher"] = api_ok;

    if (t.pe) {
        const auto& rules = options.rules ? *options.rules : builtin_capability_rules();
        t.capability_matches = match_capabilities(*t.pe, rules);
    }
    t.tool_status["capability_matcher"] = t.pe.has_value();

    if (t.failed_tools() == t.tool_status.size()) {
        throw Error(ErrorCode::AllToolsFailed, "every static-analysis stage failed");
    }
    return t;
}

}  // namespace triage::engine
