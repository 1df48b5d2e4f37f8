#include "archevo/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace archevo {

using nlohmann::json;

void ControllerConfig::check() const
{
    if (!(0.0 <= eps_min && eps_min <= eps_max && eps_max <= 1.0)) {
        throw Error("INVALID_CONFIG", "need 0 <= eps_min <= eps_max <= 1");
    }
    if (!(lambda > 0.0)) {
        throw Error("INVALID_CONFIG", "lambda must be positive");
    }
    if (window_m < 1) {
        throw Error("INVALID_CONFIG", "window_m must be at least 1");
    }
    if (!(variance_scale > 0.0)) {
        throw Error("INVALID_CONFIG", "variance_scale must be positive");
    }
}

double reward_variance(const ReplayMemory& memory, int m)
{
    const std::size_t n = std::min(memory.size(), static_cast<std::size_t>(std::max(m, 0)));
    if (n < 2) {
        return 0.0;
    }
    const auto first = memory.end() - static_cast<std::ptrdiff_t>(n);
    double mean = 0.0;
    for (auto it = first; it != memory.end(); ++it) {
        mean += it->reward;
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (auto it = first; it != memory.end(); ++it) {
        ss += (it->reward - mean) * (it->reward - mean);
    }
    return ss / static_cast<double>(n);
}

double epsilon(double var, const ControllerConfig& cfg)
{
    return cfg.eps_min + (cfg.eps_max - cfg.eps_min) * std::exp(-cfg.lambda * var);
}

double q_value(const std::string& id, const ReplayMemory& memory)
{
    double sum = 0.0;
    int n = 0;
    for (const auto& r : memory) {
        if (r.inspiration_id == id) {
            sum += r.reward;
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / n;
}

void record(ReplayMemory& memory, const std::string& inspiration_id, double reward, const std::string& summary)
{
    if (!std::isfinite(reward)) {
        throw Error("INVALID_REWARD", "reward must be finite");
    }
    const int step = memory.empty() ? 0 : memory.back().step + 1;
    memory.push_back({inspiration_id, reward, summary, step});
}

void ReflectiveState::push(const std::string& summary, double reward)
{
    summaries.push_back(summary);
    rewards.push_back(reward);
    while (summaries.size() > kMaxReflections) {
        summaries.pop_front();
    }
    while (rewards.size() > kMaxReflections) {
        rewards.pop_front();
    }
}

std::string ReflectiveState::joined() const
{
    if (summaries.empty()) {
        return "(none yet)";
    }
    std::string out;
    for (const auto& s : summaries) {
        out += "- " + s + "\n";
    }
    out.pop_back();
    return out;
}

json ReflectiveState::to_json() const
{
    return {{"summaries", summaries}, {"rewards", rewards}, {"generation", generation}, {"parent_id", parent_id}};
}

ReflectiveState ReflectiveState::from_json(const json& j)
{
    ReflectiveState s;
    s.summaries = j.at("summaries").get<std::deque<std::string>>();
    s.rewards = j.at("rewards").get<std::deque<double>>();
    s.generation = j.at("generation").get<int>();
    s.parent_id = j.at("parent_id").get<std::string>();
    return s;
}

const char* mode_name(Mode m)
{
    return m == Mode::explore ? "explore" : "exploit";
}

bool is_provider_failure(const std::string& code)
{
    return code == "SCHEMA_VIOLATION" || code == "TRANSPORT" || code == "RATE_LIMITED";
}

const Inspiration& exploit_choice(const std::vector<Inspiration>& candidates, const ReplayMemory& memory)
{
    if (candidates.empty()) {
        throw Error("EMPTY_POOL", "no inspiration to choose from");
    }
    const Inspiration* best = &candidates.front();
    double best_q = q_value(best->id, memory);
    for (const auto& c : candidates) {
        const double q = q_value(c.id, memory);
        const bool better = q > best_q || (q == best_q && (c.utility > best->utility ||
                                                           (c.utility == best->utility && c.id < best->id)));
        if (better) {
            best = &c;
            best_q = q;
        }
    }
    return *best;
}

namespace {

const Inspiration& highest_utility(const std::vector<Inspiration>& candidates)
{
    return *std::min_element(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        return a.utility != b.utility ? a.utility > b.utility : a.id < b.id;
    });
}

std::string numbered_list(const std::vector<Inspiration>& items)
{
    if (items.empty()) {
        return "(none)";
    }
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += std::to_string(i + 1) + ". " + items[i].text + "\n";
    }
    out.pop_back();
    return out;
}

} // namespace

ActionChoice choose_action(const ReflectiveState& state, const std::vector<Inspiration>& candidates,
                           const ReplayMemory& memory, double eps, double rng_draw, Gateway* gateway,
                           const ExploreContext& ctx)
{
    if (candidates.empty()) {
        throw Error("EMPTY_POOL", "no inspiration to choose from");
    }
    ActionChoice out;
    if (!(rng_draw < eps)) {
        out.inspiration = exploit_choice(candidates, memory);
        return out;
    }
    out.mode = Mode::explore;
    if (gateway == nullptr) {
        out.mode = Mode::exploit;
        out.fallback = "no provider";
        out.inspiration = exploit_choice(candidates, memory);
        return out;
    }
    out.provider_called = true;
    try {
        const Bindings b{{"field", ctx.field},
                         {"paper_numbered", ctx.paper_numbered},
                         {"current_insp", numbered_list(candidates)},
                         {"reflections", state.joined()}};
        const json reply = gateway->call_json("reflect", b, "explore");
        bool cut = false;
        std::string text = truncate_words(reply.at("proposal").get<std::string>(), kMaxInspirationWords, &cut);
        std::vector<int> refs;
        if (reply.contains("evidence_refs")) {
            refs = reply.at("evidence_refs").get<std::vector<int>>();
        }
        Inspiration fresh =
            make_inspiration(text, gateway->embed(text), InspirationOrigin{"explore", state.generation}, refs);
        if (!fresh.template_name) {
            out.fallback = "proposal does not bind to a template";
            out.inspiration = highest_utility(candidates);
            return out;
        }
        // A proposal equal to a pool member keeps that member's utility.
        for (const auto& c : candidates) {
            if (c.id == fresh.id) {
                out.inspiration = c;
                return out;
            }
        }
        out.novel = true;
        out.inspiration = std::move(fresh);
        return out;
    } catch (const Error& e) {
        if (!is_provider_failure(e.code())) {
            throw;
        }
        out.mode = Mode::exploit;
        out.fallback = e.code();
        out.inspiration = exploit_choice(candidates, memory);
        return out;
    }
}

std::string template_summary(const std::optional<StepOutcome>& last)
{
    if (!last) {
        return "step 0: initialization";
    }
    char delta[32];
    std::snprintf(delta, sizeof delta, "%+.4f", last->reward);
    return "step " + std::to_string(last->step) + ": " + last->inspiration + " → Δacc " + delta;
}

std::string reflect_summary(const ReflectiveState& state, const std::optional<StepOutcome>& last, Gateway* gateway)
{
    if (!last || gateway == nullptr || !gateway->supports("summary", "")) {
        return template_summary(last);
    }
    char delta[32];
    std::snprintf(delta, sizeof delta, "%+.4f", last->reward);
    try {
        const json reply = gateway->call_json("summary", {{"step", std::to_string(last->step)},
                                                          {"inspiration", last->inspiration},
                                                          {"reward", delta},
                                                          {"outcome", last->outcome},
                                                          {"reflections", state.joined()}});
        return truncate_words(reply.at("summary").get<std::string>(), kMaxSummaryWords);
    } catch (const Error& e) {
        if (!is_provider_failure(e.code())) {
            throw;
        }
        return template_summary(last);
    }
}

json to_json(const ReflectionRecord& r)
{
    return {{"inspiration_id", r.inspiration_id}, {"reward", r.reward}, {"summary", r.summary}, {"step", r.step}};
}

ReflectionRecord reflection_from_json(const json& j)
{
    return {j.at("inspiration_id").get<std::string>(), j.at("reward").get<double>(), j.at("summary").get<std::string>(),
            j.at("step").get<int>()};
}

} // namespace archevo
