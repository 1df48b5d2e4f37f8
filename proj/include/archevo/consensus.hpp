#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "archevo/explorer.hpp"
#include "archevo/inspiration.hpp"
#include "archevo/llm_gateway.hpp"
#include "archevo/rng.hpp"

namespace archevo {

struct SubAxis {
    std::string name;
    std::vector<std::string> keywords;
};

inline constexpr std::size_t kMaxSubAxes = 4;
inline constexpr std::size_t kMaxKeywords = 5;
inline constexpr std::size_t kMaxMerged = 4;
inline constexpr double kQualityGuard = 1e-8;

struct ConsensusConfig {
    double tau_j = 0.6;
    double tau_q = 0.03;
    int t_min = 2;
    int t_max = 6;
    double delta = 0.1; // cosine-distance radius of the redundancy filter

    void check() const; // throws Error("INVALID_CONFIG")
};

// Parses the "subtasks" reply: at most 4 axes (extra dropped with a warning),
// at most 5 keywords shared by every axis. Propagates SCHEMA_VIOLATION.
std::vector<SubAxis> extract_subaxes(const std::string& paper_text, Gateway& gateway,
                                     std::vector<std::string>* warnings = nullptr);

std::string format_inspirations(const std::vector<Inspiration>& items);

// One proposal for `axis`, or nullopt when the reply stays unusable.
std::optional<Inspiration> expert_propose(const SubAxis& axis, const std::string& paper_numbered,
                                          const std::vector<Inspiration>& current, Gateway& gateway, int round,
                                          std::vector<std::string>* warnings = nullptr);

// Exact-duplicate removal then the first kMaxMerged in order.
std::vector<Inspiration> local_merge(const std::vector<Inspiration>& proposals);

// Provider merge when the gateway supports "merge", otherwise local_merge.
// A merge reply that stays invalid also falls back to local_merge.
std::vector<Inspiration> merge(const std::vector<Inspiration>& proposals, Gateway* gateway, int round,
                               std::vector<std::string>* warnings = nullptr);

// |a ∩ b| / |a ∪ b| over ids; 1 when both are empty.
double jaccard(const std::vector<Inspiration>& a, const std::vector<Inspiration>& b);

// Mean q_value over the set. Throws Error("EMPTY_SET").
double mean_quality(const std::vector<Inspiration>& s, const ReplayMemory& memory);

// Keeps an item only if its cosine distance to every kept item is >= delta.
std::vector<Inspiration> redundancy_filter(const std::vector<Inspiration>& proposals, double delta);

struct RoundRecord {
    int round = 0;
    std::vector<std::string> proposals;
    std::vector<std::string> merged;
    double jaccard = 0.0;
    double mean_quality = 0.0;
    double delta_mu = 0.0;
    bool converged = false;
    std::vector<std::string> notes;
};

struct ConsensusResult {
    std::vector<SubAxis> axes;
    std::vector<Inspiration> inspirations;
    std::vector<RoundRecord> transcript;
    int rounds = 0;
    std::uint64_t expert_calls = 0;
    std::uint64_t merge_calls = 0;
    std::vector<std::string> warnings;
};

// Rounds t = 1..t_max; stops after round t when J >= tau_j, the relative
// change in mean quality is <= tau_q and t >= t_min. Returns the set of the
// last completed round.
ConsensusResult run_consensus(const std::string& paper_text, Gateway& gateway, const ReplayMemory& memory,
                              const ConsensusConfig& cfg);

// Same rounds over sub-axes extracted earlier; no "subtasks" call.
ConsensusResult run_consensus(const std::vector<SubAxis>& axes, const std::string& paper_text, Gateway& gateway,
                              const ReplayMemory& memory, const ConsensusConfig& cfg);

struct CreditShare {
    std::vector<std::string> lineage; // inspiration ids behind one survivor
    double reward = 0.0;
};

// u <- gamma*u + credit_kappa * sum of rewards of survivors whose lineage
// contains the inspiration.
void update_utility(std::vector<Inspiration>& pool, const std::vector<CreditShare>& survivors, double gamma,
                    double credit_kappa);

inline constexpr double kAgingFloor = 0.01;
inline constexpr int kAgingGenerations = 3;

// Bumps zero-credit counters and drops items below the utility floor after
// kAgingGenerations without credit, never the last item of a sub-axis.
// Returns the ids removed.
std::vector<std::string> age_pool(std::vector<Inspiration>& pool, const std::set<std::string>& credited);

// Softmax over u/temperature, computed with the max subtracted.
std::vector<double> retrieval_probabilities(const std::vector<Inspiration>& pool, double temperature);

// Index drawn with probability proportional to exp(u/temperature); one draw.
// Throws Error("EMPTY_POOL").
std::size_t retrieval_sample(const std::vector<Inspiration>& pool, double temperature, RunRng& rng);

// Index into `weights` for a uniform draw in [0, 1).
std::size_t sample_index(const std::vector<double>& weights, double draw);

nlohmann::json to_json(const SubAxis& a);
SubAxis subaxis_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RoundRecord& r);

} // namespace archevo
