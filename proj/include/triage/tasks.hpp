#pragma once

// The twelve analyst task types: routing rules, prompt templates and the
// section headings an answer for each task must carry.

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace triage::tasks {

struct RoutingRule {
    std::string pattern;
    double weight = 1.0;
    std::regex re;
};

struct TaskType {
    std::string id;
    std::string name;
    double reference_share = 0.0;  // percent of the reference corpus
    std::vector<RoutingRule> routing;
    std::vector<std::string> required_sections;
    std::string user_template;

    /// Sum of weights of the rules matching the case-folded text.
    double route_score(std::string_view text) const;
};

class TaskCatalog {
public:
    static TaskCatalog load(const std::filesystem::path& path);
    static const TaskCatalog& builtin();

    const std::vector<TaskType>& tasks() const noexcept { return tasks_; }
    /// By id ("detection_guidance") or display name ("Detection Guidance").
    const TaskType* find(std::string_view id_or_name) const;
    const TaskType& at(std::string_view id_or_name) const;

    /// Highest-scoring task at or above the routing threshold; earlier
    /// catalog entries win ties. nullptr when nothing reaches the threshold.
    const TaskType* route(std::string_view text) const;

    const std::vector<std::string>& default_sections() const noexcept { return default_sections_; }
    const std::vector<std::string>& query_only_sections() const noexcept { return query_only_sections_; }
    const std::vector<std::string>& system_variants() const noexcept { return system_variants_; }
    double routing_threshold() const noexcept { return threshold_; }

private:
    std::vector<TaskType> tasks_;
    std::vector<std::string> default_sections_;
    std::vector<std::string> query_only_sections_;
    std::vector<std::string> system_variants_;
    double threshold_ = 1.0;
};

/// Replaces {name} placeholders; unknown placeholders are left as-is.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace triage::tasks
