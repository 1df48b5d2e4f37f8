#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "archevo/error.hpp"

namespace archevo {

enum class Sense { maximize, minimize };

// Generic Pareto dominance over objective rows with per-column senses.
bool dominates(std::span<const double> a, std::span<const double> b, std::span<const Sense> senses);

// Fronts of indices; within a front, indices keep input order.
// Throws Error("EMPTY_POPULATION").
std::vector<std::vector<std::size_t>> fast_non_dominated_sort(const std::vector<std::vector<double>>& rows,
                                                              std::span<const Sense> senses);

struct ObjectiveVector {
    double acc = 0.0;
    double params = 0.0;  // millions
    double latency = 0.0; // milliseconds
    double struct_div = 0.0;
    double conf = 0.0;

    std::vector<double> as_row() const { return {acc, params, latency, struct_div, conf}; }
    friend bool operator==(const ObjectiveVector&, const ObjectiveVector&) = default;
};

inline constexpr Sense kObjectiveSenses[5] = {Sense::maximize, Sense::minimize, Sense::minimize, Sense::maximize,
                                              Sense::maximize};

bool dominates(const ObjectiveVector& a, const ObjectiveVector& b);
std::vector<std::vector<std::size_t>> fast_non_dominated_sort(const std::vector<ObjectiveVector>& pop);

struct BidWeights {
    double lambda_p = 0.10;
    double lambda_l = 0.10;
    double gamma_d = 0.10;
    double rho_c = 0.10;
    double beta = 0.10;
};

// acc - lp*params - ll*latency + gd*struct_div + rc*conf + beta*sigma, on
// the values as given (callers normalize params and latency).
double bid(const ObjectiveVector& v, double sigma, const BidWeights& w);

// Sample standard deviation of the last min(5, n) entries; 0 for n == 1.
double estimate_sigma(const std::vector<double>& trace);

struct SelectionInput {
    ObjectiveVector objectives;
    double sigma = 0.0;
};

struct ScoredCandidate {
    std::size_t index = 0;
    int front = 0;
    double bid = 0.0;
    double sigma = 0.0;
    bool survived = false;
};

struct SelectionResult {
    std::vector<ScoredCandidate> scored; // input order
    std::vector<std::size_t> survivors;  // best bid first
    std::size_t k = 0;
};

// Fronts, pool-normalized bids, then the top max(1, floor(kappa*|F0|)) of
// F0 by bid (ties: lower params, then lower index).
SelectionResult select_survivors(const std::vector<SelectionInput>& pop, const BidWeights& w, double kappa);

nlohmann::json to_json(const ObjectiveVector& v);
ObjectiveVector objectives_from_json(const nlohmann::json& j);

} // namespace archevo
