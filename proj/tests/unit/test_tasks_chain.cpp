#include "world.hpp"

#include "triage/error.hpp"
#include "triage/static_chain.hpp"
#include "triage/tasks.hpp"

#include <gtest/gtest.h>

using namespace triage;
using namespace triage::engine;

TEST(Tasks, BuiltinCatalog) {
    const auto& cat = tasks::TaskCatalog::builtin();
    ASSERT_EQ(cat.tasks().size(), 12u);
    double share = 0;
    for (const auto& t : cat.tasks()) {
        share += t.reference_share;
        EXPECT_FALSE(t.required_sections.empty()) << t.id;
        EXPECT_EQ(cat.find(t.name), &t);
        EXPECT_EQ(cat.find(t.id), &t);
    }
    EXPECT_NEAR(share, 100.0, 0.1);
    EXPECT_THROW(cat.at("no_such_task"), Error);
}

TEST(Tasks, Routing) {
    const auto& cat = tasks::TaskCatalog::builtin();
    const auto* t = cat.route("Explain technique T1055 and how MITRE describes it");
    ASSERT_NE(t, nullptr);
    EXPECT_EQ(t->id, "technique_explanation");
    EXPECT_EQ(cat.route("hello there"), nullptr);
}

TEST(Tasks, RenderTemplate) {
    EXPECT_EQ(tasks::render_template("a {x} b {y}", {{"x", "1"}}), "a 1 b {y}");
}

TEST(StaticChain, CfgFromAssembly) {
    std::string asm_text =
        "start:\n"
        "  mov eax, 1\n"
        "  cmp eax, 2\n"
        "  jne skip\n"
        "  call foo\n"
        "skip:\n"
        "  ret\n";
    auto g = summarize_cfg(asm_text);
    EXPECT_EQ(g.nodes, 3u);
    EXPECT_EQ(g.edges, 3u);
}

TEST(StaticChain, FcgFromC) {
    std::string c =
        "int helper(int x) { return x + 1; }\n"
        "void run(void) { helper(1); CreateFileW(0); helper(2); }\n"
        "int main(void) { run(); return 0; }\n";
    auto g = summarize_fcg_from_c(c);
    EXPECT_EQ(g.nodes, 4u);
    EXPECT_EQ(g.edges, 3u);
    ASSERT_FALSE(g.hotspots.empty());
    EXPECT_EQ(g.hotspots.front(), "run");
}

TEST(StaticChain, RunsOnFixturesAndRejectsNonPe) {
    auto store = support::seeded_store();
    auto adapters = AdapterSet::fixtures(oracle::fixture_dir() / "tools");
    ChainOptions opts{store.get(), nullptr};
    for (const auto& s : oracle::manifest()) {
        auto bytes = oracle::read_bytes(oracle::fixture_dir() / s["file"].get<std::string>());
        auto t = run_static_chain(bytes, binscan::detect_file_type(bytes), adapters, opts);
        SCOPED_TRACE(s["name"].get<std::string>());
        EXPECT_EQ(t.sha256, s["sha256"].get<std::string>());
        for (auto stage : kChainStages) EXPECT_TRUE(t.tool_status.at(std::string(stage))) << stage;
        EXPECT_TRUE(t.cfg_summary);
        EXPECT_TRUE(t.fcg_summary);
        EXPECT_FALSE(t.suspicious_apis.empty());
    }
    std::vector<std::uint8_t> text = {'n', 'o', 't', ' ', 'p', 'e'};
    try {
        run_static_chain(text, binscan::detect_file_type(text), adapters, opts);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnsupportedFileType);
    }
}

TEST(StaticChain, MissingToolsDegrade) {
    auto store = support::seeded_store();
    auto empty_dir = std::filesystem::temp_directory_path() / "triage-no-tools";
    std::filesystem::create_directories(empty_dir);
    auto adapters = AdapterSet::fixtures(empty_dir);
    auto bytes = oracle::read_bytes(oracle::fixture_dir() / "samples/zbot.exe");
    auto t = run_static_chain(bytes, binscan::FileType::PeExecutable, adapters, {store.get(), nullptr});
    EXPECT_FALSE(t.tool_status.at("decompiler"));
    EXPECT_FALSE(t.tool_status.at("disassembler"));
    EXPECT_TRUE(t.tool_status.at("binscan"));
    EXPECT_FALSE(t.decompiled_c);
    EXPECT_EQ(t.failed_tools(), 2u + (t.tool_status.at("graph_summarizer") ? 0u : 1u));
}

TEST(StaticChain, SubprocessAdapter) {
    SubprocessToolAdapter ok("cat", {"/bin/cat", "{sample}"});
    std::vector<std::uint8_t> bytes = {'h', 'i'};
    EXPECT_EQ(ok.run("x", bytes, std::chrono::milliseconds(5000)), "hi");
    SubprocessToolAdapter fail("false", {"/bin/false"});
    EXPECT_ANY_THROW(fail.run("x", bytes, std::chrono::milliseconds(5000)));
    SubprocessToolAdapter slow("sleep", {"/bin/sleep", "5"});
    EXPECT_ANY_THROW(slow.run("x", bytes, std::chrono::milliseconds(200)));
}
