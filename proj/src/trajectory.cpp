#include "agentrec/trajectory.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace agentrec {

std::string_view outcome_name(Outcome o) {
    switch (o) {
        case Outcome::ranked: return "ranked";
        case Outcome::format_error: return "format_error";
        case Outcome::limit_exceeded: return "limit_exceeded";
        case Outcome::policy_error: return "policy_error";
    }
    return "?";
}

Outcome parse_outcome(std::string_view s) {
    for (auto o : {Outcome::ranked, Outcome::format_error, Outcome::limit_exceeded, Outcome::policy_error}) {
        if (outcome_name(o) == s) return o;
    }
    throw Error(fmt::format("unknown outcome '{}'", s));
}

std::size_t Trajectory::count_tool_calls() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const Step& s) { return s.is_tool_call(); }));
}

std::string Trajectory::ref() const { return fmt::format("{}#{}", case_id, repeat); }

namespace {
json action_json(const Action& a) {
    if (const auto* call = std::get_if<ToolCall>(&a)) {
        return {{"type", "tool_call"}, {"name", call->name}, {"arguments", call->arguments}};
    }
    return {{"type", "rank"}, {"ranking", std::get<FinalRanking>(a).items}};
}

Action action_from_json(const json& j) {
    auto type = j.at("type").get<std::string>();
    if (type == "tool_call") return ToolCall{j.at("name").get<std::string>(), j.at("arguments")};
    if (type == "rank") return FinalRanking{j.at("ranking").get<std::vector<ItemId>>()};
    throw Error("unknown action type '" + type + "'");
}
}  // namespace

void to_json(json& j, const Trajectory& t) {
    json steps = json::array();
    for (const auto& s : t.steps) {
        json step = {{"t", s.t}, {"raw", s.raw}, {"reasoning", s.reasoning}, {"action", action_json(s.action)}};
        step["observation"] = s.observation ? json(*s.observation) : json(nullptr);
        steps.push_back(std::move(step));
    }
    j = json{{"case_id", t.case_id},   {"user", t.user},
             {"seed", t.seed},         {"repeat", t.repeat},
             {"outcome", outcome_name(t.outcome)},
             {"steps", steps},         {"n_tool_calls", t.n_tool_calls}};
    j["final_ranking"] = t.final_ranking ? json(t.final_ranking->items) : json(nullptr);
    j["rejected_text"] = t.rejected_text ? json(*t.rejected_text) : json(nullptr);
    j["error"] = t.error ? json(*t.error) : json(nullptr);
}

void from_json(const json& j, Trajectory& t) {
    t = {};
    t.case_id = j.at("case_id").get<std::string>();
    t.user = j.at("user").get<UserId>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.repeat = j.value("repeat", std::size_t{0});
    t.outcome = parse_outcome(j.at("outcome").get<std::string>());
    for (const auto& s : j.at("steps")) {
        Step step;
        step.t = s.at("t").get<std::size_t>();
        step.raw = s.at("raw").get<std::string>();
        step.reasoning = s.at("reasoning").get<std::string>();
        step.action = action_from_json(s.at("action"));
        if (s.contains("observation") && !s.at("observation").is_null()) {
            step.observation = s.at("observation").get<Observation>();
        }
        t.steps.push_back(std::move(step));
    }
    t.n_tool_calls = j.at("n_tool_calls").get<std::size_t>();
    if (j.contains("final_ranking") && !j.at("final_ranking").is_null()) {
        t.final_ranking = FinalRanking{j.at("final_ranking").get<std::vector<ItemId>>()};
    }
    if (j.contains("rejected_text") && !j.at("rejected_text").is_null()) {
        t.rejected_text = j.at("rejected_text").get<std::string>();
    }
    if (j.contains("error") && !j.at("error").is_null()) t.error = j.at("error").get<std::string>();
}

std::vector<Trajectory> read_trajectories(const std::string& path) {
    std::vector<Trajectory> out;
    for (const auto& rec : read_jsonl(path)) out.push_back(rec.get<Trajectory>());
    return out;
}

void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories) {
    std::vector<json> records;
    records.reserve(trajectories.size());
    for (const auto& t : trajectories) records.emplace_back(t);
    write_jsonl(path, records);
}

}  // namespace agentrec
