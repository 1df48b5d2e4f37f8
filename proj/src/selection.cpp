#include "archevo/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace archevo {

bool dominates(std::span<const double> a, std::span<const double> b, std::span<const Sense> senses)
{
    bool strict = false;
    for (std::size_t i = 0; i < senses.size(); ++i) {
        const double better = senses[i] == Sense::maximize ? a[i] - b[i] : b[i] - a[i];
        if (better < 0) {
            return false;
        }
        if (better > 0) {
            strict = true;
        }
    }
    return strict;
}

std::vector<std::vector<std::size_t>> fast_non_dominated_sort(const std::vector<std::vector<double>>& rows,
                                                              std::span<const Sense> senses)
{
    if (rows.empty()) {
        throw Error("EMPTY_POPULATION", "cannot sort an empty population");
    }
    const std::size_t n = rows.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<int> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts(1);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (p == q) {
                continue;
            }
            if (dominates(rows[p], rows[q], senses)) {
                dominated[p].push_back(q);
            } else if (dominates(rows[q], rows[p], senses)) {
                ++count[p];
            }
        }
        if (count[p] == 0) {
            fronts[0].push_back(p);
        }
    }
    for (std::size_t i = 0; !fronts[i].empty(); ++i) {
        std::vector<std::size_t> next;
        for (std::size_t p : fronts[i]) {
            for (std::size_t q : dominated[p]) {
                if (--count[q] == 0) {
                    next.push_back(q);
                }
            }
        }
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();
    return fronts;
}

bool dominates(const ObjectiveVector& a, const ObjectiveVector& b)
{
    const auto ra = a.as_row();
    const auto rb = b.as_row();
    return dominates(ra, rb, kObjectiveSenses);
}

std::vector<std::vector<std::size_t>> fast_non_dominated_sort(const std::vector<ObjectiveVector>& pop)
{
    std::vector<std::vector<double>> rows;
    rows.reserve(pop.size());
    for (const auto& v : pop) {
        rows.push_back(v.as_row());
    }
    return fast_non_dominated_sort(rows, kObjectiveSenses);
}

double bid(const ObjectiveVector& v, double sigma, const BidWeights& w)
{
    return v.acc - w.lambda_p * v.params - w.lambda_l * v.latency + w.gamma_d * v.struct_div + w.rho_c * v.conf +
           w.beta * sigma;
}

double estimate_sigma(const std::vector<double>& trace)
{
    const std::size_t n = std::min<std::size_t>(5, trace.size());
    if (n < 2) {
        return 0.0;
    }
    // Shifted by the first value so a constant trace gives exactly 0.
    const auto first = trace.end() - static_cast<std::ptrdiff_t>(n);
    const double shift = *first;
    double sum = 0.0;
    double sq = 0.0;
    for (auto it = first; it != trace.end(); ++it) {
        sum += *it - shift;
        sq += (*it - shift) * (*it - shift);
    }
    const double dn = static_cast<double>(n);
    return std::sqrt(std::max(0.0, (sq - sum * sum / dn) / (dn - 1.0)));
}

SelectionResult select_survivors(const std::vector<SelectionInput>& pop, const BidWeights& w, double kappa)
{
    if (pop.empty()) {
        throw Error("EMPTY_POPULATION", "cannot select from an empty population");
    }
    if (!(kappa > 0.0 && kappa <= 1.0)) {
        throw Error("INVALID_CONFIG", "survival ratio must lie in (0, 1]");
    }
    std::vector<ObjectiveVector> objs;
    for (const auto& c : pop) {
        objs.push_back(c.objectives);
    }
    const auto fronts = fast_non_dominated_sort(objs);

    auto [pmin, pmax] = std::minmax_element(objs.begin(), objs.end(),
                                            [](const auto& a, const auto& b) { return a.params < b.params; });
    auto [lmin, lmax] = std::minmax_element(objs.begin(), objs.end(),
                                            [](const auto& a, const auto& b) { return a.latency < b.latency; });
    const double p_lo = pmin->params;
    const double p_span = pmax->params - p_lo;
    const double l_lo = lmin->latency;
    const double l_span = lmax->latency - l_lo;

    SelectionResult out;
    out.scored.resize(pop.size());
    for (std::size_t f = 0; f < fronts.size(); ++f) {
        for (std::size_t i : fronts[f]) {
            ObjectiveVector v = objs[i];
            v.params = p_span > 0 ? (v.params - p_lo) / p_span : 0.0;
            v.latency = l_span > 0 ? (v.latency - l_lo) / l_span : 0.0;
            out.scored[i] = {i, static_cast<int>(f), bid(v, pop[i].sigma, w), pop[i].sigma, false};
        }
    }

    // F0 of a non-empty finite population is never empty; A_t is the fallback.
    std::vector<std::size_t> pool = fronts.front();
    if (pool.empty()) {
        pool.resize(pop.size());
        std::iota(pool.begin(), pool.end(), 0);
    }
    out.k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(kappa * static_cast<double>(pool.size()))));
    std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        if (out.scored[a].bid != out.scored[b].bid) {
            return out.scored[a].bid > out.scored[b].bid;
        }
        if (objs[a].params != objs[b].params) {
            return objs[a].params < objs[b].params;
        }
        return a < b;
    });
    out.survivors.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(out.k));
    for (std::size_t i : out.survivors) {
        out.scored[i].survived = true;
    }
    return out;
}

nlohmann::json to_json(const ObjectiveVector& v)
{
    return {{"acc", v.acc}, {"params", v.params}, {"latency", v.latency}, {"struct_div", v.struct_div}, {"conf", v.conf}};
}

ObjectiveVector objectives_from_json(const nlohmann::json& j)
{
    return {j.at("acc").get<double>(), j.at("params").get<double>(), j.at("latency").get<double>(),
            j.at("struct_div").get<double>(), j.at("conf").get<double>()};
}

} // namespace archevo
