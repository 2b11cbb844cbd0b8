#pragma once

// Family labeling: local ground truth, then CTI vendor labels, then an
// imphash cross-reference, then Unknown. Vendor labels are reduced to one
// family name by alias-aware plurality voting.

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace triage::attrib {

enum class LabelSource { LocalGroundTruth, CtiReport, ImphashMatch, Unknown };
std::string_view to_string(LabelSource s) noexcept;

struct FamilyLabel {
    std::string family = "unknown";
    std::string category = "unknown";
    LabelSource source = LabelSource::Unknown;
    std::vector<std::string> vendor_labels;
    std::optional<std::string> confidence;  // "heuristic" for imphash matches
    bool cti_degraded = false;
};

nlohmann::json to_json(const FamilyLabel& label);

/// Alias, generic-token and category tables.
class Taxonomy {
public:
    Taxonomy() = default;
    Taxonomy(std::map<std::string, std::string> aliases, std::set<std::string> generic_tokens,
             std::vector<std::string> categories, std::map<std::string, std::string> family_categories);

    /// Loads aliases.json, generic_tokens.json and categories.json from `dir`.
    static Taxonomy load(const std::filesystem::path& dir);
    /// The shipped tables under the data directory.
    static const Taxonomy& builtin();

    /// Plurality vote over alias-resolved, non-generic tokens; ties go to the
    /// lexicographically smallest. Throws EmptyList / NoSignal.
    std::string normalize_family(const std::vector<std::string>& vendor_labels) const;

    /// Exact lookup; "unknown" on a miss.
    std::string map_category(std::string_view family) const;

    bool is_category(std::string_view category) const;
    const std::vector<std::string>& categories() const noexcept { return categories_; }

    /// Candidate family tokens from one label, in order, deduplicated.
    std::vector<std::string> label_tokens(std::string_view label) const;

private:
    std::map<std::string, std::string> aliases_;
    std::set<std::string> generic_;
    std::vector<std::string> categories_;
    std::map<std::string, std::string> family_categories_;
};

struct GroundTruthEntry {
    std::string family;
    std::string category;
    std::optional<std::string> imphash;
};

/// sha256 -> label for locally curated samples.
using GroundTruth = std::map<std::string, GroundTruthEntry>;

GroundTruth load_ground_truth(const std::filesystem::path& path);

class CtiClient {
public:
    virtual ~CtiClient() = default;
    /// Vendor labels for the sample, nullopt when the service has no report.
    /// Throws Error{CtiUnavailable} on transport failure.
    virtual std::optional<std::vector<std::string>> vendor_labels(const std::string& sha256) = 0;
};

/// Reads `<dir>/<sha256>.json` with a "vendor_labels" array.
class FixtureCtiClient final : public CtiClient {
public:
    explicit FixtureCtiClient(std::filesystem::path dir);
    std::optional<std::vector<std::string>> vendor_labels(const std::string& sha256) override;
    std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::filesystem::path dir_;
    std::atomic<std::size_t> calls_{0};
};

/// imphash -> family, built from already-labeled samples. Hashes shared by
/// samples of different families are dropped as ambiguous.
class ImphashTable {
public:
    ImphashTable() = default;
    void add(const std::string& imphash, const std::string& family);
    static ImphashTable from_ground_truth(const GroundTruth& truth);
    std::optional<std::string> lookup(const std::string& imphash) const;
    std::size_t size() const noexcept { return table_.size(); }

private:
    std::map<std::string, std::optional<std::string>> table_;
};

struct LabelingContext {
    const GroundTruth* ground_truth = nullptr;
    CtiClient* cti = nullptr;
    const ImphashTable* imphash_table = nullptr;
    const Taxonomy* taxonomy = nullptr;  // builtin() when null
};

/// First hit wins: LocalGroundTruth, CtiReport, ImphashMatch, Unknown.
/// A CTI transport failure is recorded as cti_degraded and skipped.
FamilyLabel label_sample(const std::string& sha256, const std::optional<std::string>& imphash,
                         const LabelingContext& ctx);

}  // namespace triage::attrib
