#pragma once

// Static tool chain: binscan, decompiler and disassembler adapters, graph
// summaries, suspicious-API and capability matching.

#include "triage/binscan.hpp"
#include "triage/kb.hpp"
#include "triage/transcript.hpp"

#include <array>
#include <chrono>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace triage::engine {

/// A subprocess-shaped tool: sample in, text out. Throws on failure.
class ToolAdapter {
public:
    virtual ~ToolAdapter() = default;
    virtual std::string name() const = 0;
    virtual std::string run(const std::string& sha256, binscan::Bytes sample, std::chrono::milliseconds timeout) = 0;
};

/// Returns `<dir>/<sha256>/<file>`; missing file is a tool failure.
class FixtureToolAdapter final : public ToolAdapter {
public:
    FixtureToolAdapter(std::string name, std::filesystem::path dir, std::string file);
    std::string name() const override { return name_; }
    std::string run(const std::string& sha256, binscan::Bytes sample, std::chrono::milliseconds timeout) override;

private:
    std::string name_;
    std::filesystem::path dir_;
    std::string file_;
};

/// Runs an external command with the sample written to a temporary file.
/// "{sample}" in argv is replaced by that path; stdout is the output. A
/// non-zero exit status or an expired timeout is a failure.
class SubprocessToolAdapter final : public ToolAdapter {
public:
    SubprocessToolAdapter(std::string name, std::vector<std::string> argv);
    std::string name() const override { return name_; }
    std::string run(const std::string& sha256, binscan::Bytes sample, std::chrono::milliseconds timeout) override;

private:
    std::string name_;
    std::vector<std::string> argv_;
};

struct AdapterSet {
    std::shared_ptr<ToolAdapter> decompiler;
    std::shared_ptr<ToolAdapter> disassembler;
    std::chrono::milliseconds timeout{10'000};

    /// Fixture adapters reading decompiled.c / disasm.s under `dir`.
    static AdapterSet fixtures(const std::filesystem::path& dir);
};

/// Basic blocks and edges from assembly listing text. A block starts at a
/// label or after a branch; jcc adds target and fall-through edges, jmp its
/// target, ret none, anything else the fall-through.
GraphSummary summarize_cfg(std::string_view assembly);
/// Function call graph from decompiled C: top-level definitions and the
/// identifiers they call. Hotspots are the three largest fan-outs.
GraphSummary summarize_fcg_from_c(std::string_view c_source);
/// Function call graph from assembly: non-local labels and call targets.
GraphSummary summarize_fcg_from_asm(std::string_view assembly);

/// Imported functions present in the WinApiBehavior collection, in import
/// order, with the document's risk and behavior tags.
std::vector<SuspiciousApi> match_suspicious_apis(const binscan::PeMetadata& pe, const kb::KnowledgeStore& store);

struct CapabilityRule {
    std::string name;
    std::string technique;
    RiskLevel risk = RiskLevel::Low;
    std::vector<std::string> apis_all;
    std::vector<std::string> apis_any;
    std::vector<std::string> strings_any;
    std::string guidance;
};

std::vector<CapabilityRule> load_capability_rules(const std::filesystem::path& path);
const std::vector<CapabilityRule>& builtin_capability_rules();

/// A rule fires when every apis_all import is present, at least one
/// apis_any import is (if listed) and at least one strings_any substring
/// occurs in the strings (if listed). Names compare case-insensitively.
std::vector<CapabilityMatch> match_capabilities(const binscan::PeMetadata& pe, std::span<const CapabilityRule> rules);

struct ChainOptions {
    const kb::KnowledgeStore* knowledge = nullptr;
    const std::vector<CapabilityRule>* rules = nullptr;  // builtin when null
};

/// Runs the chain for a PE sample. Throws UnsupportedFileType for other
/// types and AllToolsFailed when no stage succeeded.
Transcript run_static_chain(binscan::Bytes sample, binscan::FileType type, const AdapterSet& adapters,
                            const ChainOptions& options);

/// Stage names recorded in Transcript::tool_status.
inline constexpr std::array<std::string_view, 6> kChainStages = {
    "binscan", "decompiler", "disassembler", "graph_summarizer", "api_matcher", "capability_matcher"};

}  // namespace triage::engine
