// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails or overruns its time limit.

#include "world.hpp"

#include "triage/binscan.hpp"
#include "triage/corpus.hpp"
#include "triage/error.hpp"
#include "triage/facade.hpp"
#include "triage/gate.hpp"
#include "triage/ioc.hpp"
#include "triage/metrics.hpp"
#include "triage/retrieve.hpp"
#include "triage/text.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>

using namespace triage;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 3) {
    std::ostringstream o;
    o << std::setprecision(prec) << v;
    return o.str();
}

std::string reference_text() {
    std::ifstream in(std::filesystem::path(TRIAGE_SOURCE_DIR) / "paper.md");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// (category, top family) pairs from the category distribution table.
std::map<std::string, std::string> reference_top_families() {
    std::map<std::string, std::string> out;
    std::regex row(R"(^\s*([A-Za-z]+) & [\d,]+ & \d+ & ([A-Za-z/]+) & )");
    std::istringstream in(reference_text());
    std::string line;
    std::smatch m;
    while (std::getline(in, line))
        if (std::regex_search(line, m, row)) out[text::lower(m[1].str())] = m[2].str();
    return out;
}

// ---- 1 --------------------------------------------------------------------

Outcome balance_metrics() {
    std::mt19937_64 rng(20260101);
    double worst_h = 0, worst_j = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<std::uint64_t> c(1 + rng() % 60);
        for (auto& x : c) x = 1 + rng() % 10000;
        worst_h = std::max(worst_h, std::abs(metrics::shannon_entropy(c) - oracle::entropy_bits(c)));
        auto j = metrics::pielou_evenness(c);
        auto o = oracle::evenness(c);
        if (j.has_value() != o.has_value()) return {false, "evenness definedness differs at vector " + std::to_string(i)};
        if (j) worst_j = std::max(worst_j, std::abs(*j - *o));
    }
    std::vector<std::uint64_t> benign = {982};
    bool single_ok = metrics::shannon_entropy(benign) == 0.0 && !metrics::pielou_evenness(benign);
    bool ref_na = reference_text().find("Benign & 982 & 1 & Benign & 100.0\\% & N/A") != std::string::npos;
    bool ok = worst_h <= 1e-9 && worst_j <= 1e-9 && single_ok && ref_na;
    return {ok, "max|dH|=" + fmt(worst_h) + " max|dJ'|=" + fmt(worst_j) + " single-family H=0,J' undefined: " +
                    (single_ok ? "yes" : "no") + " (table N/A found: " + (ref_na ? "yes" : "no") + ")"};
}

// ---- 2 --------------------------------------------------------------------

Outcome f1_identity() {
    // 19 predicted, 28 gold, 10 shared: P = 10/19, R = 10/28.
    std::set<std::string> pred, gold;
    for (int i = 0; i < 19; ++i) pred.insert("T" + std::to_string(1100 + i));
    for (int i = 0; i < 28; ++i) gold.insert("T" + std::to_string(1109 + i));
    auto m = metrics::prf_metrics(pred, gold);
    auto p = reference_text();
    bool quoted = p.find("Precision: 0.526") != std::string::npos && p.find("Recall: 0.357") != std::string::npos &&
                  p.find("F1: 0.426") != std::string::npos;
    bool ok = std::abs(m.precision - 0.526) < 5e-4 && std::abs(m.recall - 0.357) < 5e-4 &&
              std::abs(m.f1 - 0.426) <= 1e-3 && quoted;
    return {ok, "P=" + fmt(m.precision, 6) + " R=" + fmt(m.recall, 6) + " F1=" + fmt(m.f1, 6) +
                    " (table values found: " + (quoted ? "yes" : "no") + ")"};
}

// ---- 3 --------------------------------------------------------------------

Outcome retrieval_oracles() {
    static const std::vector<std::string> vocab = {
        "ransomware", "encrypts", "files",    "registry", "persistence", "beacon",   "http",      "socket",
        "injection",  "process",  "memory",   "keylogger", "captures",   "browser",  "passwords", "credential",
        "loader",     "payload",  "download", "mutex",    "service",     "driver",   "kernel",    "wiper",
        "disk",       "mbr",      "miner",    "cpu",      "shadow",      "copies",   "delete",    "token",
        "privilege",  "escalation", "the",    "of",       "and",         "with",     "to",        "a"};
    std::mt19937 rng(777);
    auto word = [&] { return vocab[rng() % vocab.size()]; };
    retrieve::HashedTrigramEmbedder embedder;
    const auto kind = kb::CollectionKind::FamilyIntel;
    std::size_t queries = 0, compared = 0;
    double worst = 0;

    for (int c = 0; c < 20; ++c) {
        std::size_t n_docs = c % 5 == 0 ? 10 : 1 + rng() % 10;
        kb::KnowledgeStore store;
        std::string lines;
        for (std::size_t d = 0; d < n_docs; ++d) {
            std::string body;
            std::size_t len = 3 + rng() % 40;
            for (std::size_t w = 0; w < len; ++w) body += word() + " ";
            json j = {{"doc_id", "c" + std::to_string(c) + "-d" + std::to_string(d)},
                      {"collection", "family_intel"},
                      {"key", "fam" + std::to_string(d)},
                      {"title", word()},
                      {"body", body},
                      {"tags", json::array()}};
            lines += j.dump() + "\n";
        }
        store.ingest_lines(lines, kind);
        retrieve::Retriever r(store, std::make_shared<retrieve::HashedTrigramEmbedder>());
        r.build(kind);

        auto snap = store.snapshot(kind);
        std::vector<std::string> ids;
        std::vector<std::vector<std::string>> doc_tokens;
        std::vector<std::vector<double>> doc_vecs;
        for (const auto& d : snap->docs) {
            ids.push_back(d.doc_id);
            auto text = retrieve::index_text(d);
            doc_tokens.push_back(retrieve::tokenize(text));
            doc_vecs.push_back(retrieve::embed_document(embedder, text).vector);
        }

        int per_corpus = c < 10 ? 3 : 2;
        for (int qi = 0; qi < per_corpus; ++qi, ++queries) {
            std::string qtext;
            std::size_t qlen = 2 + rng() % 4;
            for (std::size_t w = 0; w < qlen; ++w) qtext += word() + " ";
            if (qi == 2) qtext += "unseenterm";
            auto qtok = retrieve::tokenize(qtext);
            auto qvec = embedder.embed(qtext);

            // Lexical.
            std::map<std::string, double> bm;
            for (std::size_t d = 0; d < ids.size(); ++d) {
                double s = oracle::bm25(qtok, doc_tokens, d);
                if (s > 0) bm[ids[d]] = s;
            }
            auto bm_expected = oracle::ordered(bm);
            auto bm_got = r.bm25_search(qtok, kind, ids.size());
            // Dense.
            std::map<std::string, double> dn;
            for (std::size_t d = 0; d < ids.size(); ++d) dn[ids[d]] = oracle::cosine(qvec.vector, doc_vecs[d]);
            auto dn_expected = oracle::ordered(dn);
            auto dn_got = r.dense_search(qvec, kind, ids.size());
            // Fusion over the oracle ranks.
            std::map<std::string, double> fused;
            for (std::size_t i = 0; i < bm_expected.size(); ++i) fused[bm_expected[i].first] += 1.0 / (60.0 + i + 1);
            for (std::size_t i = 0; i < dn_expected.size(); ++i) fused[dn_expected[i].first] += 1.0 / (60.0 + i + 1);
            auto fu_expected = oracle::ordered(fused);
            auto fu_got = retrieve::rrf(bm_got, dn_got, 60.0);
            // Rerank: Jaccard over stopword-free sets, stable on the fused order.
            std::vector<std::pair<std::string, double>> rr_expected;
            for (const auto& [id, s] : fu_expected) {
                auto pos = std::find(ids.begin(), ids.end(), id) - ids.begin();
                rr_expected.push_back(
                    {id, oracle::jaccard(qtok, doc_tokens[pos], [](const std::string& t) { return !retrieve::is_stopword(t); })});
            }
            std::stable_sort(rr_expected.begin(), rr_expected.end(),
                             [](const auto& a, const auto& b) { return a.second > b.second; });
            auto rr_got = r.rerank(qtok, fu_got, kind);

            auto same = [&](const std::vector<std::pair<std::string, double>>& exp,
                            const std::vector<retrieve::ScoredHit>& got, const char* what) -> std::optional<Outcome> {
                if (exp.size() != got.size())
                    return Outcome{false, std::string(what) + " length differs in corpus " + std::to_string(c)};
                for (std::size_t i = 0; i < exp.size(); ++i) {
                    if (exp[i].first != got[i].doc_id)
                        return Outcome{false, std::string(what) + " order differs in corpus " + std::to_string(c)};
                    worst = std::max(worst, std::abs(exp[i].second - got[i].score));
                    ++compared;
                }
                return std::nullopt;
            };
            if (auto f = same(bm_expected, bm_got, "bm25")) return *f;
            if (auto f = same(dn_expected, dn_got, "dense")) return *f;
            if (auto f = same(fu_expected, fu_got, "rrf")) return *f;
            if (auto f = same(rr_expected, rr_got, "rerank")) return *f;
        }
    }
    return {worst <= 1e-9 && queries == 50, "20 corpora, " + std::to_string(queries) + " queries, " +
                                                 std::to_string(compared) + " scores, max|d|=" + fmt(worst)};
}

// ---- 4 --------------------------------------------------------------------

Outcome chunking() {
    const std::size_t window = 512, stride = 256;
    std::string text;
    std::vector<std::pair<std::size_t, std::size_t>> offsets;
    for (std::size_t n = 1; n <= 2000; ++n) {
        std::string tok = "w" + std::to_string(n - 1);
        if (!text.empty()) text += ' ';
        offsets.push_back({text.size(), text.size() + tok.size()});
        text += tok;

        auto chunks = retrieve::chunk_text(text, window, stride);
        std::vector<std::pair<std::size_t, std::size_t>> expected;  // token ranges
        for (std::size_t s = 0;; s += stride) {
            expected.push_back({s, std::min(n, s + window)});
            if (s + window >= n) break;
        }
        if (chunks.size() != expected.size() || retrieve::chunk_count(n, window, stride) != expected.size())
            return {false, "count differs at n=" + std::to_string(n)};
        for (std::size_t c = 0; c < chunks.size(); ++c) {
            auto [a, b] = expected[c];
            if (chunks[c].tokens.size() != b - a || chunks[c].tokens.front() != "w" + std::to_string(a) ||
                chunks[c].tokens.back() != "w" + std::to_string(b - 1) || chunks[c].seq != c ||
                chunks[c].char_start != offsets[a].first || chunks[c].char_end != offsets[b - 1].second)
                return {false, "chunk " + std::to_string(c) + " differs at n=" + std::to_string(n)};
        }
    }
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t k = 1 + rng() % 12, dim = 1 + rng() % 64;
        std::vector<retrieve::Embedding> vs;
        std::vector<long double> sum(dim, 0);
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<double> v(dim);
            for (std::size_t d = 0; d < dim; ++d) sum[d] += (v[d] = u(rng));
            vs.push_back(retrieve::Embedding::from(v));
        }
        auto m = retrieve::mean_pool(vs);
        for (std::size_t d = 0; d < dim; ++d) worst = std::max(worst, std::abs(m.vector[d] - double(sum[d] / k)));
    }
    return {worst <= 1e-9, "n=1..2000 counts and offsets match; mean_pool max|d|=" + fmt(worst)};
}

// ---- 5 --------------------------------------------------------------------

Outcome imphash() {
    std::size_t tables = 0;
    for (const auto& s : oracle::manifest()) {
        auto pe = binscan::parse_pe(oracle::read_bytes(oracle::fixture_dir() / s["file"].get<std::string>()));
        std::string expected = oracle::md5_hex(oracle::imphash_string(s["imports"]));
        if (binscan::compute_imphash(pe.imports) != expected || expected != s["imphash"].get<std::string>())
            return {false, "digest differs for " + s["name"].get<std::string>()};
        // Swapping two adjacent functions must change the hash.
        auto perm = pe.imports;
        auto it = std::find_if(perm.begin(), perm.end(), [](const auto& e) { return e.functions.size() > 1; });
        if (it == perm.end()) return {false, "no permutable table in " + s["name"].get<std::string>()};
        std::swap(it->functions[0], it->functions[1]);
        if (binscan::compute_imphash(perm) == expected) return {false, "permutation kept the hash"};
        ++tables;
    }
    struct Case {
        std::string lib;
        std::string expect_lib;
    };
    std::vector<Case> cases = {{"KERNEL32.DLL", "kernel32"}, {"kernel32.dll", "kernel32"}, {"ntoskrnl.sys", "ntoskrnl"},
                               {"MSCOMCTL.OCX", "mscomctl"}, {"helper.exe", "helper.exe"},  {"twice.dll.dll", "twice.dll"},
                               {"noext", "noext"}};
    for (const auto& c : cases) {
        std::vector<binscan::ImportEntry> imp = {{c.lib, {"FuncA", "ord7"}}};
        json oj = json::array({{{"library", c.lib}, {"functions", {"FuncA", 7}}}});
        std::string want = c.expect_lib + ".funca," + c.expect_lib + ".ord7";
        if (oracle::imphash_string(oj) != want || binscan::imphash_input(imp) != want ||
            binscan::compute_imphash(imp) != oracle::md5_hex(want))
            return {false, "extension case " + c.lib};
    }
    std::vector<binscan::ImportEntry> upper = {{"KERNEL32.DLL", {"CreateFileW"}}};
    std::vector<binscan::ImportEntry> lower = {{"kernel32", {"createfilew"}}};
    bool equal_ok = binscan::compute_imphash(upper) == binscan::compute_imphash(lower);
    return {tables == 10 && equal_ok, std::to_string(tables) + " tables match the MD5 oracle; " +
                                          std::to_string(cases.size()) + " extension cases match"};
}

// ---- 6 --------------------------------------------------------------------

Outcome indicators() {
    auto store = support::seeded_store();
    std::ifstream in(oracle::fixture_dir() / "indicators.jsonl");
    std::string line;
    std::size_t lines = 0, negatives = 0, extracted = 0, expected = 0, tp = 0, labels_ok = 0;
    std::set<std::string> kinds;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = json::parse(line);
        ++lines;
        std::string text = j["text"];
        auto got = ioc::extract_indicators(text);
        std::set<std::tuple<std::string, std::string, std::string>> want;
        std::map<std::string, std::string> want_label;
        for (const auto& e : j["expected"]) {
            want.insert({e["kind"].get<std::string>(), e["raw"].get<std::string>(), e["normalized"].get<std::string>()});
            want_label[e["raw"].get<std::string>()] = e["label"].get<std::string>();
            kinds.insert(e["kind"].get<std::string>());
        }
        if (want.empty()) ++negatives;
        extracted += got.size();
        expected += want.size();
        for (const auto& g : got) {
            if (!want.contains({std::string(ioc::to_string(g.kind)), g.raw, g.normalized})) continue;
            ++tp;
            auto v = ioc::validate_indicator(g, *store, nullptr, {2026});
            std::string tag = v.label == ioc::ProvenanceLabel::Verified  ? "verified"
                              : v.label == ioc::ProvenanceLabel::Invalid ? "invalid"
                                                                         : "valid_unverified";
            if (tag == want_label[g.raw]) ++labels_ok;
        }
    }
    double precision = extracted ? double(tp) / extracted : 1.0;
    double recall = expected ? double(tp) / expected : 1.0;
    bool ok = lines == 250 && negatives == 50 && kinds.size() == 10 && precision == 1.0 && recall == 1.0 &&
              labels_ok == expected;
    return {ok, std::to_string(lines - negatives) + " labeled + " + std::to_string(negatives) + " negative lines, " +
                    std::to_string(kinds.size()) + " kinds: precision=" + fmt(precision, 4) + " recall=" +
                    fmt(recall, 4) + " labels " + std::to_string(labels_ok) + "/" + std::to_string(expected)};
}

// ---- 7 --------------------------------------------------------------------

Outcome gate_routing() {
    using D = gate::Decision;
    const gate::QualityWeights W0 = gate::kDefaultWeights;
    const gate::QualityWeights WD = {0.25, 0.25, 0.125, 0.125, 0.25};
    const gate::QualityWeights WH = {0.5, 0.5, 0, 0, 0};
    auto one = [](int i) {
        gate::QualityWeights w{0, 0, 0, 0, 0};
        w[i] = 1.0;
        return w;
    };
    auto all = [](double x) { return std::array<double, 5>{x, x, x, x, x}; };
    const gate::Thresholds T0{0.75, 0.45};
    const double eps = std::ldexp(1.0, -30);
    struct Row {
        std::array<double, 5> dims;
        gate::QualityWeights w;
        gate::Thresholds t;
        D expect;
    };
    std::vector<Row> rows = {
        {all(1), W0, T0, D::Accept},
        {all(0), W0, T0, D::TemplateFallback},
        {all(0.75), one(0), T0, D::Accept},            // sigma == accept
        {all(0.45), one(0), T0, D::RetryWithFeedback},  // sigma == retry
        {all(0.75 - eps), one(1), T0, D::RetryWithFeedback},
        {all(0.45 - eps), one(2), T0, D::TemplateFallback},
        {all(0.75), WD, {0.75, 0.5}, D::Accept},
        {all(0.5), WD, {0.75, 0.5}, D::RetryWithFeedback},
        {all(0.5 - eps), WD, {0.75, 0.5}, D::TemplateFallback},
        {all(0.625), WD, {0.625, 0.375}, D::Accept},
        {all(0.375), WD, {0.625, 0.375}, D::RetryWithFeedback},
        {all(0.375 - eps), WD, {0.625, 0.375}, D::TemplateFallback},
        {{1, 1, 1, 1, 0}, W0, T0, D::RetryWithFeedback},   // 0.70
        {{1, 1, 1, 0, 1}, W0, T0, D::Accept},              // 0.90
        {{0, 0, 1, 1, 1}, W0, T0, D::RetryWithFeedback},   // 0.55
        {{1, 0, 0, 1, 0}, W0, T0, D::TemplateFallback},    // 0.30
        {{0, 1, 0, 0, 1}, W0, T0, D::RetryWithFeedback},   // 0.55
        {all(0.5), W0, T0, D::RetryWithFeedback},           // 0.50
        {{0.9, 0.8, 1, 0.7, 0.95}, W0, T0, D::Accept},      // 0.885
        {{0.3, 0.4, 1, 0.2, 0.3}, W0, T0, D::TemplateFallback},   // 0.42
        {{0.3, 0.4, 1, 0.5, 0.4}, W0, T0, D::RetryWithFeedback},  // 0.48
        {{0.3, 0.4, 1, 0.5, 0.4}, W0, {0.9, 0.5}, D::TemplateFallback},
        {{0.9, 0.8, 1, 0.7, 0.95}, W0, {0.9, 0.5}, D::RetryWithFeedback},
        {all(1), one(4), {1.0, 0.5}, D::Accept},            // accept at 1
        {all(0), one(3), {0.5, 0.0}, D::RetryWithFeedback}, // retry at 0
        {all(0.6), one(1), {0.6, 0.3}, D::Accept},
        {all(0.3), one(2), {0.6, 0.3}, D::RetryWithFeedback},
        {all(0.3 - eps), one(3), {0.6, 0.3}, D::TemplateFallback},
        {{1, 0, 0, 0, 0}, WH, {0.5, 0.25}, D::Accept},            // 0.5 == accept
        {{0, 0.5, 0, 0, 0}, WH, {0.5, 0.25}, D::RetryWithFeedback},  // 0.25 == retry
    };
    std::size_t ok_rows = 0, boundary_rows = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        gate::QualityDimensions dims{r.dims[0], r.dims[1], r.dims[2], r.dims[3], r.dims[4]};
        double sigma = gate::weighted_quality(dims, r.w);
        long double ref = 0;
        for (int k = 0; k < 5; ++k) ref += static_cast<long double>(r.dims[k]) * r.w[k];
        if (std::abs(sigma - double(ref)) > 1e-12) return {false, "sigma differs in row " + std::to_string(i + 1)};
        if (sigma == r.t.accept || sigma == r.t.retry) ++boundary_rows;
        auto v = gate::gate(sigma, r.t, dims);
        if (v.decision == r.expect) ++ok_rows;
        else
            return {false, "row " + std::to_string(i + 1) + " routed " + std::string(gate::to_string(v.decision))};
    }
    bool errors_ok = false;
    try {
        gate::gate(0.5, {0.4, 0.6});
    } catch (const Error& e) {
        errors_ok = e.code() == ErrorCode::ThresholdOrderViolation;
    }
    std::string phrase = "I cannot assist with this request";
    bool in_ref = reference_text().find(phrase) != std::string::npos;
    bool refusal_ok = gate::detect_refusal(phrase) && gate::detect_refusal(" \t\n ") && gate::detect_refusal("") &&
                      !gate::detect_refusal("The sample encrypts files with AES.");
    bool ok = ok_rows == 30 && boundary_rows >= 2 && errors_ok && refusal_ok && in_ref;
    return {ok, std::to_string(ok_rows) + "/30 rows routed, " + std::to_string(boundary_rows) +
                    " exact-boundary rows; refusal on phrase and whitespace: " + (refusal_ok ? "yes" : "no")};
}

// ---- 8 and 11 ---------------------------------------------------------------

struct RunResult {
    std::vector<std::string> report_json;
    std::vector<std::string> report_md;
};

std::optional<RunResult> g_first_run;

Outcome end_to_end() {
    auto world = support::world();
    engine::Engine eng({}, world->deps(oracle::fixture_dir()));
    RunResult run;
    std::size_t passed = 0;
    std::string failures;
    for (const auto& s : oracle::manifest()) {
        engine::AnalysisRequest req;
        req.sample = oracle::read_bytes(oracle::fixture_dir() / s["file"].get<std::string>());
        auto resp = eng.analyze(req);
        std::string name = s["name"];
        if (!resp.report) {
            failures += " " + name + "(no report)";
            continue;
        }
        const auto& r = *resp.report;
        auto md = engine::render_markdown(r);
        run.report_json.push_back(engine::to_json(r).dump());
        run.report_md.push_back(md);
        bool steps = true;
        for (int k = 1; k <= 4; ++k) steps &= md.find("## Step " + std::to_string(k)) != std::string::npos;
        bool graphs = r.step2_code_behavior.cfg && r.step2_code_behavior.cfg->nodes > 0 &&
                      r.step2_code_behavior.fcg && r.step2_code_behavior.fcg->nodes > 0;
        std::size_t mitre_ok = 0;
        for (const auto& m : r.step4_assessment.mitre_mappings) {
            for (const auto& v : r.step3_indicators)
                if (v.indicator.kind == ioc::IndicatorKind::MitreTechnique && v.indicator.normalized == m &&
                    v.label != ioc::ProvenanceLabel::Invalid) {
                    ++mitre_ok;
                    break;
                }
        }
        bool guidance = !text::trim(r.step4_assessment.detection_guidance).empty();
        if (steps && graphs && mitre_ok >= 1 && guidance) ++passed;
        else
            failures += " " + name + "(steps=" + std::to_string(steps) + " graphs=" + std::to_string(graphs) +
                        " mitre=" + std::to_string(mitre_ok) + " guidance=" + std::to_string(guidance) + ")";
    }
    g_first_run = run;
    return {passed == 10, std::to_string(passed) + "/10 structured reports complete" + failures};
}

Outcome determinism_and_cache() {
    if (!g_first_run) return {false, "criterion 8 produced no baseline"};
    auto world = support::world();
    engine::Engine eng({}, world->deps(oracle::fixture_dir()));
    std::size_t identical = 0, cached = 0, i = 0;
    for (const auto& s : oracle::manifest()) {
        engine::AnalysisRequest req;
        req.sample = oracle::read_bytes(oracle::fixture_dir() / s["file"].get<std::string>());
        auto first = eng.analyze(req);
        if (first.report && i < g_first_run->report_json.size() &&
            engine::to_json(*first.report).dump() == g_first_run->report_json[i] &&
            engine::render_markdown(*first.report) == g_first_run->report_md[i])
            ++identical;
        auto second = eng.analyze(req);
        auto a = facade::analysis_body(first, std::nullopt, std::nullopt);
        auto b = facade::analysis_body(second, std::nullopt, std::nullopt);
        bool flag = !first.from_cache && second.from_cache;
        a.erase("from_cache");
        b.erase("from_cache");
        if (flag && a.dump() == b.dump()) ++cached;
        ++i;
    }
    bool ok = identical == 10 && cached == 10 && eng.computations() == 10;
    return {ok, std::to_string(identical) + "/10 byte-identical reports across runs; " + std::to_string(cached) +
                    "/10 repeats served from cache with identical bodies"};
}

// ---- 9 --------------------------------------------------------------------

Outcome labeling() {
    auto truth = attrib::load_ground_truth(oracle::fixture_dir() / "ground_truth.json");
    attrib::FixtureCtiClient cti(oracle::fixture_dir() / "cti");
    auto table = attrib::ImphashTable::from_ground_truth(truth);
    attrib::LabelingContext ctx{&truth, &cti, &table, nullptr};

    std::set<attrib::LabelSource> seen;
    std::string mismatches;
    for (const auto& s : oracle::manifest()) {
        auto l = attrib::label_sample(s["sha256"], std::nullopt, ctx);
        seen.insert(l.source);
        std::string path = s["label_path"];
        auto want = path == "ground_truth" ? attrib::LabelSource::LocalGroundTruth
                    : path == "cti"        ? attrib::LabelSource::CtiReport
                                           : attrib::LabelSource::Unknown;
        if (l.source != want || l.family != s["family"].get<std::string>() ||
            l.category != s["category"].get<std::string>())
            mismatches += " " + s["name"].get<std::string>();
    }
    // A sample nobody has labeled that shares a known import table.
    const auto& zbot = truth.begin()->second;
    auto heuristic = attrib::label_sample(std::string(64, '0'), zbot.imphash, ctx);
    seen.insert(heuristic.source);
    bool imphash_ok = heuristic.source == attrib::LabelSource::ImphashMatch && heuristic.family == zbot.family &&
                      heuristic.confidence == "heuristic";

    auto tops = reference_top_families();
    std::size_t table_ok = 0;
    for (const char* name : {"gandcrab", "agenttesla", "asyncrat"}) {
        for (const auto& s : oracle::manifest()) {
            if (s["name"] != name) continue;
            auto l = attrib::label_sample(s["sha256"], std::nullopt, ctx);
            auto it = std::find_if(tops.begin(), tops.end(),
                                   [&](const auto& kv) { return text::iequals(kv.second, l.family); });
            if (l.source == attrib::LabelSource::CtiReport && it != tops.end() && it->first == l.category) ++table_ok;
        }
    }
    bool ok = seen.size() == 4 && mismatches.empty() && imphash_ok && table_ok == 3;
    return {ok, std::to_string(seen.size()) + "/4 terminal paths reached; " + std::to_string(table_ok) +
                    "/3 CTI families match the table's top-family names and categories" +
                    (mismatches.empty() ? "" : "; mismatches:" + mismatches)};
}

// ---- 10 -------------------------------------------------------------------

class FlakyGenerator final : public engine::Generator {
public:
    explicit FlakyGenerator(engine::Generator& inner, std::size_t refusals) : inner_(inner), left_(refusals) {}
    std::string name() const override { return inner_.name(); }
    std::string generate(const engine::GenerationRequest& r) override {
        if (left_ > 0) {
            --left_;
            ++served_;
            return "I cannot assist with this request.";
        }
        return inner_.generate(r);
    }
    std::size_t served() const { return served_; }

private:
    engine::Generator& inner_;
    std::size_t left_;
    std::size_t served_ = 0;
};

Outcome corpus_pipeline() {
    using namespace corpus;
    auto world = support::world();
    auto deps = world->deps(oracle::fixture_dir());
    retrieve::Retriever retriever(*world->knowledge);
    retriever.build_all();

    std::vector<CorpusSample> samples;
    for (const char* name : {"gandcrab", "agenttesla", "asyncrat"})
        samples.push_back(prepare_sample(
            oracle::read_bytes(oracle::fixture_dir() / "samples" / (std::string(name) + ".exe")), deps));

    // The first record refuses on both of its attempts.
    FlakyGenerator flaky(*deps.generator, 2);
    GenerationContext gctx;
    gctx.generator = &flaky;
    gctx.knowledge = world->knowledge.get();
    gctx.retriever = &retriever;

    std::vector<const tasks::TaskType*> task_list;
    for (const auto& t : tasks::TaskCatalog::builtin().tasks()) task_list.push_back(&t);
    auto records = generate_corpus(samples, task_list, {Augmentation::Base, Augmentation::CoT, Augmentation::CoVe},
                                   Pipeline::ArchitectAnalystJudge, gctx);

    QaContext qctx;
    qctx.knowledge = world->knowledge.get();
    qctx.labels = [&](const std::string& sha) -> std::optional<attrib::FamilyLabel> {
        for (const auto& s : samples)
            if (s.transcript.sha256 == sha) return s.label;
        return std::nullopt;
    };
    auto before = qa_validate(records, {}, qctx);

    Regenerator regen = [&](const InstructionRecord& r) -> std::optional<InstructionRecord> {
        for (const auto& s : samples)
            if (s.transcript.sha256 == r.sample_id)
                return generate_record(s, tasks::TaskCatalog::builtin().at(r.task_type), r.augmentation, r.pipeline,
                                       gctx);
        return std::nullopt;
    };
    auto filled = backfill(records, regen, qctx);
    auto after = qa_validate(filled.records, {}, qctx);

    std::map<Augmentation, int> split;
    for (const auto& r : filled.records) split[r.augmentation]++;
    auto exported = load_jsonl(export_jsonl(filled.records));
    std::size_t contaminated = 0;
    for (const auto& r : exported) contaminated += gate::detect_refusal(r.assistant);

    bool ok = records.size() == 36 && flaky.served() == 2 && before.passed < before.total && filled.repaired >= 1 &&
              filled.excluded.empty() && after.total == 36 && after.passed == 36 && after.balance_ok &&
              split[Augmentation::Base] == 12 && split[Augmentation::CoT] == 12 && split[Augmentation::CoVe] == 12 &&
              exported.size() == 36 && contaminated == 0;
    return {ok, "split " + std::to_string(split[Augmentation::Base]) + "/" + std::to_string(split[Augmentation::CoT]) +
                    "/" + std::to_string(split[Augmentation::CoVe]) + "; QA " + std::to_string(before.passed) + "/" +
                    std::to_string(before.total) + " before backfill, " + std::to_string(after.passed) + "/" +
                    std::to_string(after.total) + " after (" + std::to_string(filled.repaired) +
                    " repaired); exported " + std::to_string(exported.size()) + ", refusals " +
                    std::to_string(contaminated)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        std::string name;
        double limit_s;
        std::function<Outcome()> run;
    };
    std::vector<Criterion> all = {
        {1, "balance metrics", 5, balance_metrics},
        {2, "F1 identity", 1, f1_identity},
        {3, "retrieval oracle equivalence", 30, retrieval_oracles},
        {4, "chunking and mean pooling", 10, chunking},
        {5, "imphash", 1, imphash},
        {6, "indicator suite", 5, indicators},
        {7, "quality gate routing", 1, gate_routing},
        {8, "end-to-end structured reports", 60, end_to_end},
        {9, "labeling pipeline", 5, labeling},
        {10, "corpus pipeline", 60, corpus_pipeline},
        {11, "determinism and cache", 60, determinism_and_cache},
    };
    int failed = 0;
    for (const auto& c : all) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool in_time = secs < c.limit_s;
        bool pass = o.pass && in_time;
        failed += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << c.id << "  " << c.name << "  ["
                  << std::fixed << std::setprecision(3) << secs << " s, limit " << std::setprecision(0) << c.limit_s
                  << " s" << (in_time ? "" : ", over time") << "]  " << o.detail << "\n";
        std::cout.unsetf(std::ios::fixed);
        std::cout << std::setprecision(6);
    }
    std::cout << (failed ? "FAILED " : "ALL PASSED ") << (all.size() - failed) << "/" << all.size() << "\n";
    return failed ? 1 : 0;
}
