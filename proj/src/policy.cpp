#include "agentrec/policy.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>

namespace agentrec {

std::string_view message_role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "?";
}

void check_roles(std::span<const Message> messages) {
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (messages[i].role == Role::tool && (i == 0 || messages[i - 1].role != Role::assistant)) {
            throw Error(fmt::format("message {}: a tool message must follow an assistant message", i));
        }
    }
}

void SamplingParams::validate() const {
    if (temperature < 0.0) throw Error("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw Error("top_p must lie in (0, 1]");
    if (max_tokens == 0) throw Error("max_tokens must be >= 1");
}

// ---------------------------------------------------------------------------
// Grammar

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kToolOpen = "<tool_call>";
constexpr std::string_view kToolClose = "</tool_call>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

std::size_t skip_ws(std::string_view s, std::size_t pos) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos;
}

bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == ':';
    });
}

std::variant<FinalRanking, ParseError> parse_answer(std::string_view body) {
    auto inner = trim(body);
    if (inner.size() < 2 || inner.front() != '[' || inner.back() != ']') {
        return ParseError{"answer must be a bracketed list of item ids"};
    }
    FinalRanking ranking;
    auto content = trim(std::string_view(inner).substr(1, inner.size() - 2));
    if (content.empty()) return ranking;
    for (auto& part : split(content, ",")) {
        auto entry = trim(part);
        if (entry.size() >= 2 && ((entry.front() == '"' && entry.back() == '"') ||
                                  (entry.front() == '\'' && entry.back() == '\''))) {
            entry = entry.substr(1, entry.size() - 2);
        }
        if (!is_identifier(entry)) {
            return ParseError{fmt::format("answer entry '{}' is not an item id", entry)};
        }
        ranking.items.emplace_back(entry);
    }
    return ranking;
}

std::variant<ToolCall, ParseError> parse_tool_call(std::string_view body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return ParseError{"tool_call body must be a JSON object"};
    auto name = j.find("name");
    if (name == j.end() || !name->is_string() || name->get<std::string>().empty()) {
        return ParseError{"tool_call needs a string \"name\""};
    }
    ToolCall call{name->get<std::string>(), json::object()};
    if (auto args = j.find("arguments"); args != j.end()) {
        if (!args->is_object()) return ParseError{"tool_call \"arguments\" must be an object"};
        call.arguments = *args;
    }
    return call;
}

}  // namespace

std::variant<ParsedStep, ParseError> parse_step(std::string_view text) {
    auto pos = skip_ws(text, 0);
    if (text.substr(pos, kThinkOpen.size()) != kThinkOpen) {
        return ParseError{"missing <think> block at the start of the turn"};
    }
    pos += kThinkOpen.size();
    auto close = text.find(kThinkClose, pos);
    if (close == std::string_view::npos) return ParseError{"unterminated <think> block"};
    ParsedStep step;
    step.reasoning = std::string(text.substr(pos, close - pos));
    if (step.reasoning.find(kThinkOpen) != std::string::npos) return ParseError{"nested <think> block"};
    pos = skip_ws(text, close + kThinkClose.size());

    std::string_view open, end;
    bool is_tool = false;
    if (text.substr(pos, kToolOpen.size()) == kToolOpen) {
        open = kToolOpen;
        end = kToolClose;
        is_tool = true;
    } else if (text.substr(pos, kAnswerOpen.size()) == kAnswerOpen) {
        open = kAnswerOpen;
        end = kAnswerClose;
    } else if (pos == text.size()) {
        return ParseError{"no action after <think>: expected <tool_call> or <answer>"};
    } else if (text.substr(pos, kThinkOpen.size()) == kThinkOpen) {
        return ParseError{"more than one <think> block"};
    } else {
        return ParseError{"unexpected text after </think>: expected <tool_call> or <answer>"};
    }
    pos += open.size();
    auto body_end = text.find(end, pos);
    if (body_end == std::string_view::npos) return ParseError{fmt::format("unterminated {} block", open)};
    auto body = text.substr(pos, body_end - pos);
    pos = skip_ws(text, body_end + end.size());
    if (pos != text.size()) {
        auto rest = text.substr(pos);
        if (rest.starts_with(kToolOpen) || rest.starts_with(kAnswerOpen)) {
            return ParseError{"more than one action in a turn; emit exactly one <tool_call> or <answer>"};
        }
        return ParseError{"unexpected text after the action block"};
    }

    if (is_tool) {
        auto call = parse_tool_call(body);
        if (auto* err = std::get_if<ParseError>(&call)) return *err;
        step.action = std::get<ToolCall>(std::move(call));
    } else {
        auto ranking = parse_answer(body);
        if (auto* err = std::get_if<ParseError>(&ranking)) return *err;
        step.action = std::get<FinalRanking>(std::move(ranking));
    }
    return step;
}

std::string render_step(const ParsedStep& step) {
    std::string out = fmt::format("{}{}{}\n", kThinkOpen, step.reasoning, kThinkClose);
    if (const auto* call = std::get_if<ToolCall>(&step.action)) {
        json body = {{"name", call->name}, {"arguments", call->arguments}};
        out += fmt::format("{}{}{}", kToolOpen, body.dump(), kToolClose);
    } else {
        std::vector<std::string> quoted;
        for (const auto& id : std::get<FinalRanking>(step.action).items) quoted.push_back(json(id.str()).dump());
        out += fmt::format("{}[{}]{}", kAnswerOpen, fmt::join(quoted, ", "), kAnswerClose);
    }
    return out;
}

std::string grammar_contract() {
    return R"(Every reply must have exactly this shape and nothing else:
<think>your analysis: what you know about the user and the candidates, what is still missing, and what to do next</think>
followed by exactly ONE of
<tool_call>{"name": "<tool name>", "arguments": {...}}</tool_call>
or, once the information is sufficient,
<answer>["<item_id>", "<item_id>", ...]</answer>
The answer must list every candidate item id exactly once, most relevant first.
One tool call per reply. The tool result arrives in the next message.)";
}

// ---------------------------------------------------------------------------
// Prompts

std::string system_prompt(const ToolRegistry& registry, std::size_t max_turns) {
    return fmt::format(
        "You are a recommendation agent. Your task is to rank a set of candidate items for one user by how "
        "likely the user is to interact with each item next.\n"
        "Work in rounds. In each round, judge whether the information you have about the user and the "
        "candidates is sufficient for a confident ranking. If it is not, call one tool to fill the most "
        "important gap. When it is, give the final ranking.\n"
        "You have at most {} replies in total.\n\n"
        "{}\n\nAvailable tools (JSON schema):\n{}",
        max_turns, grammar_contract(), registry.document().at("tools").dump(2));
}

std::string user_prompt(const UserId& user, const CandidateSet& candidates, const Catalog& catalog) {
    std::string out = fmt::format("User ID: {}\nCandidate items ({} in total, rank all of them):\n", user.str(),
                                  candidates.candidates.size());
    std::size_t i = 0;
    for (const auto& id : candidates.candidates) {
        std::string category;
        if (auto it = catalog.find(id); it != catalog.end()) category = it->second.category_text();
        out += fmt::format("{}. item_id: {} | title: {}{}\n", ++i, id.str(), item_title(catalog, id),
                           category.empty() ? "" : " | category: " + category);
    }
    return out;
}

std::vector<Message> render_prompt(const UserId& user, const CandidateSet& candidates, const Catalog& catalog,
                                   const ToolRegistry& registry, std::span<const PromptTurn> turns,
                                   std::size_t max_turns) {
    std::vector<Message> out;
    out.push_back({Role::system, system_prompt(registry, max_turns)});
    out.push_back({Role::user, user_prompt(user, candidates, catalog)});
    for (const auto& t : turns) {
        out.push_back({Role::assistant, t.assistant});
        out.push_back({Role::tool, t.observation});
    }
    return out;
}

std::string transcript_header(Role role) { return fmt::format("<|{}|>\n", message_role_name(role)); }

std::string render_transcript(std::span<const Message> messages) {
    std::string out;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (i > 0) out += '\n';
        out += transcript_header(messages[i].role);
        out += messages[i].content;
    }
    return out;
}

PromptFacts read_prompt(std::span<const Message> messages) {
    PromptFacts facts;
    const Message* user_msg = nullptr;
    for (const auto& m : messages) {
        if (m.role == Role::user && !user_msg) user_msg = &m;
        if (m.role == Role::assistant) ++facts.assistant_turns;
        if (m.role == Role::tool) facts.observations.push_back(m.content);
    }
    if (!user_msg) throw Error("prompt has no user message");
    for (const auto& line : split(user_msg->content, "\n")) {
        if (line.starts_with("User ID: ")) {
            facts.user = UserId(trim(line.substr(9)));
            continue;
        }
        auto marker = line.find(". item_id: ");
        if (marker == std::string::npos || marker == 0) continue;
        auto start = marker + 11;
        auto bar = line.find(" | ", start);
        facts.candidates.emplace_back(trim(line.substr(start, bar == std::string::npos ? std::string::npos : bar - start)));
    }
    if (facts.user.empty() || facts.candidates.empty()) throw Error("prompt does not name a user and candidates");
    return facts;
}

std::string candidate_key(const UserId& user, std::span<const ItemId> candidates) {
    std::vector<std::string_view> ids;
    for (const auto& c : candidates) ids.push_back(c.str());
    return fmt::format("{}|{}", user.str(), fmt::join(ids, ","));
}

bool is_permutation_of(const FinalRanking& ranking, std::span<const ItemId> candidates) {
    if (ranking.items.size() != candidates.size()) return false;
    std::vector<ItemId> a(ranking.items.begin(), ranking.items.end());
    std::vector<ItemId> b(candidates.begin(), candidates.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (std::adjacent_find(a.begin(), a.end()) != a.end()) return false;
    return a == b;
}

bool validate_format(const Trajectory& trajectory, const CandidateSet& candidates, std::size_t max_turns) {
    const auto& steps = trajectory.steps;
    if (trajectory.outcome != Outcome::ranked || steps.empty() || steps.size() > max_turns) return false;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& s = steps[i];
        auto parsed = parse_step(s.raw);
        const auto* ok = std::get_if<ParsedStep>(&parsed);
        if (!ok || ok->reasoning != s.reasoning || ok->action != s.action) return false;
        const bool last = i + 1 == steps.size();
        if (!last && (!s.is_tool_call() || !s.observation)) return false;
        if (last && s.is_tool_call()) return false;
    }
    const auto& ranking = std::get<FinalRanking>(steps.back().action);
    if (!trajectory.final_ranking || *trajectory.final_ranking != ranking) return false;
    return is_permutation_of(ranking, candidates.candidates);
}

// ---------------------------------------------------------------------------
// Scripted policies

namespace {
std::string tool_turn(std::string_view reasoning, const char* tool, json arguments) {
    return render_step({std::string(reasoning), ToolCall{tool, std::move(arguments)}});
}

std::string answer_turn(std::string_view reasoning, std::vector<ItemId> ranking) {
    return render_step({std::string(reasoning), FinalRanking{std::move(ranking)}});
}
}  // namespace

OraclePolicy::OraclePolicy(std::span<const CandidateSet> answer_key) {
    for (const auto& c : answer_key) gold_[candidate_key(c.user, c.candidates)] = c.positive();
}

std::string OraclePolicy::complete(std::span<const Message> messages, const SamplingParams&, std::uint64_t) {
    auto facts = read_prompt(messages);
    auto it = gold_.find(candidate_key(facts.user, facts.candidates));
    if (it == gold_.end()) throw Error("oracle policy has no answer for user " + facts.user.str());
    switch (facts.assistant_turns) {
        case 0:
            return tool_turn("I know nothing about this user yet; start with the profile.", tools::kUserProfile,
                             json::object());
        case 1:
            return tool_turn("The profile gives long-term taste; check the most recent history.",
                             tools::kUserHistory, {{"m", 1}});
        default: {
            std::vector<ItemId> ranking{it->second};
            for (const auto& c : facts.candidates) {
                if (c != it->second) ranking.push_back(c);
            }
            return answer_turn("Profile and recent history point to one clear candidate.", std::move(ranking));
        }
    }
}

std::string RandomPolicy::complete(std::span<const Message> messages, const SamplingParams&, std::uint64_t seed) {
    auto facts = read_prompt(messages);
    Rng rng(seed);
    if (facts.assistant_turns < tool_calls_) {
        switch (rng.below(5)) {
            case 0: return tool_turn("Random probe: profile.", tools::kUserProfile, json::object());
            case 1: return tool_turn("Random probe: history.", tools::kUserHistory, {{"m", 1 + rng.below(3)}});
            case 2:
                return tool_turn("Random probe: item.", tools::kItemInfo,
                                 {{"item_id", facts.candidates[rng.below(facts.candidates.size())].str()}});
            case 3: return tool_turn("Random probe: similar users.", tools::kSimilarUsers, json::object());
            default: return tool_turn("Random probe: knowledge graph.", tools::kKnowledgeGraph, json::object());
        }
    }
    auto ranking = facts.candidates;
    rng.shuffle(ranking);
    return answer_turn("Random ranking.", std::move(ranking));
}

ReplayPolicy ReplayPolicy::from_trajectories(std::span<const Trajectory> trajectories,
                                             std::span<const CandidateSet> candidates, bool check_observations) {
    std::map<std::string, const CandidateSet*> by_case;
    for (const auto& c : candidates) by_case[c.case_id] = &c;
    std::map<std::string, Script> scripts;
    for (const auto& t : trajectories) {
        auto it = by_case.find(t.case_id);
        if (it == by_case.end()) throw Error("no candidate set for trajectory " + t.case_id);
        Script script;
        for (const auto& s : t.steps) {
            script.turns.push_back(s.raw);
            if (check_observations && s.observation) script.expected_observations.push_back(s.observation->payload);
        }
        scripts[candidate_key(it->second->user, it->second->candidates)] = std::move(script);
    }
    return ReplayPolicy(std::move(scripts));
}

std::string ReplayPolicy::complete(std::span<const Message> messages, const SamplingParams&, std::uint64_t) {
    auto facts = read_prompt(messages);
    auto it = scripts_.find(candidate_key(facts.user, facts.candidates));
    if (it == scripts_.end()) throw Error("replay policy has no script for user " + facts.user.str());
    const auto& script = it->second;
    if (!script.expected_observations.empty()) {
        for (std::size_t i = 0; i < facts.observations.size(); ++i) {
            if (i >= script.expected_observations.size() || facts.observations[i] != script.expected_observations[i]) {
                throw Error(fmt::format("replay divergence: observation {} differs from the recording", i + 1));
            }
        }
    }
    if (facts.assistant_turns >= script.turns.size()) throw Error("replay script exhausted");
    return script.turns[facts.assistant_turns];
}

}  // namespace agentrec
