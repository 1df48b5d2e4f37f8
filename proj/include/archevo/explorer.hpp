#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "archevo/inspiration.hpp"
#include "archevo/llm_gateway.hpp"

namespace archevo {

struct ReflectionRecord {
    std::string inspiration_id;
    double reward = 0.0; // child acc - parent acc, as a fraction
    std::string summary;
    int step = 0;
};

using ReplayMemory = std::vector<ReflectionRecord>;

struct ControllerConfig {
    double eps_min = 0.05;
    double eps_max = 0.5;
    double lambda = 3.0;
    int window_m = 5;
    // Multiplies the reward variance before the schedule; fraction-scale
    // variances (~1e-4) would otherwise pin epsilon at eps_max.
    double variance_scale = 1000.0;

    void check() const; // throws Error("INVALID_CONFIG")
};

// Population variance of the last min(m, n) rewards; 0 below two records.
double reward_variance(const ReplayMemory& memory, int m);

// eps_min + (eps_max - eps_min) * exp(-lambda * var)
double epsilon(double var, const ControllerConfig& cfg);

// Mean reward of records for `id`; 0 when there are none.
double q_value(const std::string& id, const ReplayMemory& memory);

// Appends with the next step index.
void record(ReplayMemory& memory, const std::string& inspiration_id, double reward, const std::string& summary);

inline constexpr std::size_t kMaxReflections = 10;

struct ReflectiveState {
    std::deque<std::string> summaries; // newest last, at most kMaxReflections
    std::deque<double> rewards;        // same bound
    int generation = 0;
    std::string parent_id;

    void push(const std::string& summary, double reward);
    std::string joined() const;

    nlohmann::json to_json() const;
    static ReflectiveState from_json(const nlohmann::json& j);
};

enum class Mode { explore, exploit };
const char* mode_name(Mode m);

struct ExploreContext {
    std::string paper_numbered;
    std::string field = "overall block design";
};

struct ActionChoice {
    Inspiration inspiration;
    Mode mode = Mode::exploit;
    bool provider_called = false;
    bool novel = false;       // inspiration came from the provider, not the pool
    std::string fallback;     // empty, or why the planned branch was abandoned
};

// Exploit pick: highest Q, then higher utility, then lexicographically smaller id.
const Inspiration& exploit_choice(const std::vector<Inspiration>& candidates, const ReplayMemory& memory);

// rng_draw < eps selects exploration through the gateway's "reflect" prompt.
// Unusable provider output falls back to the highest-utility candidate;
// provider failure falls back to exploitation. Throws Error("EMPTY_POOL").
ActionChoice choose_action(const ReflectiveState& state, const std::vector<Inspiration>& candidates,
                           const ReplayMemory& memory, double eps, double rng_draw, Gateway* gateway,
                           const ExploreContext& ctx);

struct StepOutcome {
    int step = 0;
    std::string inspiration;
    double reward = 0.0;
    std::string outcome;
};

inline constexpr std::size_t kMaxSummaryWords = 60;

// "step {n}: {inspiration} → Δacc {+0.0000}"; "step 0: initialization" without history.
std::string template_summary(const std::optional<StepOutcome>& last);

// Provider summary (at most 60 words) when the gateway supports "summary",
// otherwise or on failure the template text.
std::string reflect_summary(const ReflectiveState& state, const std::optional<StepOutcome>& last, Gateway* gateway);

// Error codes a provider call may end with that callers degrade on.
bool is_provider_failure(const std::string& code);

nlohmann::json to_json(const ReflectionRecord& r);
ReflectionRecord reflection_from_json(const nlohmann::json& j);

} // namespace archevo
