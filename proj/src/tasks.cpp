#include "triage/tasks.hpp"

#include "triage/error.hpp"
#include "triage/text.hpp"

#include <json.hpp>

namespace triage::tasks {

double TaskType::route_score(std::string_view s) const {
    const std::string folded = text::lower(s);
    double score = 0.0;
    for (const auto& rule : routing) {
        if (std::regex_search(folded, rule.re)) score += rule.weight;
    }
    return score;
}

TaskCatalog TaskCatalog::load(const std::filesystem::path& path) {
    auto j = nlohmann::json::parse(text::read_file(path.string()));
    TaskCatalog c;
    c.threshold_ = j.value("routing_threshold", 1.0);
    c.default_sections_ = j.at("default_sections").get<std::vector<std::string>>();
    c.query_only_sections_ = j.at("query_only_sections").get<std::vector<std::string>>();
    c.system_variants_ = j.at("system_variants").get<std::vector<std::string>>();
    if (c.system_variants_.empty()) throw Error(ErrorCode::SchemaViolation, "task catalog needs a system prompt");
    for (const auto& t : j.at("tasks")) {
        TaskType task;
        task.id = t.at("id").get<std::string>();
        task.name = t.at("name").get<std::string>();
        task.reference_share = t.value("reference_share", 0.0);
        task.required_sections = t.at("required_sections").get<std::vector<std::string>>();
        task.user_template = t.at("user_template").get<std::string>();
        for (const auto& r : t.at("routing")) {
            RoutingRule rule;
            rule.pattern = r.at("pattern").get<std::string>();
            rule.weight = r.value("weight", 1.0);
            try {
                rule.re = std::regex(rule.pattern, std::regex::ECMAScript | std::regex::icase);
            } catch (const std::regex_error& e) {
                throw Error(ErrorCode::SchemaViolation, "bad routing pattern for " + task.id + ": " + rule.pattern);
            }
            task.routing.push_back(std::move(rule));
        }
        if (c.find(task.id)) throw Error(ErrorCode::SchemaViolation, "duplicate task id " + task.id);
        c.tasks_.push_back(std::move(task));
    }
    return c;
}

const TaskCatalog& TaskCatalog::builtin() {
    static const TaskCatalog kCatalog = load(std::filesystem::path(TRIAGE_DATA_DIR) / "tasks" / "tasks.json");
    return kCatalog;
}

const TaskType* TaskCatalog::find(std::string_view id_or_name) const {
    for (const auto& t : tasks_) {
        if (t.id == id_or_name || text::iequals(t.name, id_or_name)) return &t;
    }
    return nullptr;
}

const TaskType& TaskCatalog::at(std::string_view id_or_name) const {
    if (const auto* t = find(id_or_name)) return *t;
    throw Error(ErrorCode::NotFound, "unknown task type: " + std::string(id_or_name));
}

const TaskType* TaskCatalog::route(std::string_view s) const {
    const TaskType* best = nullptr;
    double best_score = 0.0;
    for (const auto& t : tasks_) {
        double score = t.route_score(s);
        if (score >= threshold_ && score > best_score) {
            best = &t;
            best_score = score;
        }
    }
    return best;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i);
            if (close != std::string_view::npos) {
                auto it = vars.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

}  // namespace triage::tasks
