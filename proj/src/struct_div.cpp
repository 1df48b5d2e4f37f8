#include "archevo/struct_div.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "archevo/hashing.hpp"

namespace archevo {

std::map<std::string, DepthMasses> depth_distribution(const BlockGraph& g)
{
    const auto depths = topological_depths(g);
    int max_depth = 0;
    for (const auto& [_, d] : depths) {
        max_depth = std::max(max_depth, d);
    }
    std::map<std::string, std::map<double, int>> counts;
    std::map<std::string, int> totals;
    for (const auto& n : g.nodes()) {
        if (is_sentinel(n.op)) {
            continue;
        }
        const double x = max_depth == 0 ? 0.0 : static_cast<double>(depths.at(n.id)) / max_depth;
        ++counts[n.label()][x];
        ++totals[n.label()];
    }
    std::map<std::string, DepthMasses> out;
    for (const auto& [label, bins] : counts) {
        auto& masses = out[label];
        for (const auto& [x, c] : bins) {
            masses.emplace_back(x, static_cast<double>(c) / totals[label]);
        }
    }
    return out;
}

double emd_1d(const DepthMasses& a, const DepthMasses& b)
{
    std::vector<double> xs;
    for (const auto& [x, _] : a) {
        xs.push_back(x);
    }
    for (const auto& [x, _] : b) {
        xs.push_back(x);
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    auto cdf = [](const DepthMasses& m, double x) {
        double s = 0.0;
        for (const auto& [px, w] : m) {
            if (px <= x) {
                s += w;
            }
        }
        return s;
    };
    double dist = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        dist += std::abs(cdf(a, xs[i]) - cdf(b, xs[i])) * (xs[i + 1] - xs[i]);
    }
    return dist;
}

WLHistogram wl_histogram(const BlockGraph& g, int iterations)
{
    std::map<NodeId, std::uint64_t> color;
    for (const auto& n : g.nodes()) {
        if (!is_sentinel(n.op)) {
            color[n.id] = fnv1a(n.label());
        }
    }
    for (int it = 0; it < iterations; ++it) {
        std::map<NodeId, std::uint64_t> next;
        for (const auto& [id, own] : color) {
            std::vector<std::uint64_t> preds;
            std::vector<std::uint64_t> succs;
            for (NodeId p : g.predecessors(id)) {
                if (auto f = color.find(p); f != color.end()) {
                    preds.push_back(f->second);
                }
            }
            for (NodeId s : g.successors(id)) {
                if (auto f = color.find(s); f != color.end()) {
                    succs.push_back(f->second);
                }
            }
            std::sort(preds.begin(), preds.end());
            std::sort(succs.begin(), succs.end());
            std::uint64_t h = mix_u64(kFnvOffset, own);
            h = mix_u64(h, preds.size());
            for (auto c : preds) {
                h = mix_u64(h, c);
            }
            h = mix_u64(h, succs.size());
            for (auto c : succs) {
                h = mix_u64(h, c);
            }
            next[id] = splitmix64(h);
        }
        color = std::move(next);
    }
    WLHistogram hist;
    for (const auto& [_, c] : color) {
        ++hist[c];
    }
    return hist;
}

double op_similarity(const std::map<std::string, int>& hc, const std::map<std::string, int>& hp)
{
    std::set<std::string> keys;
    for (const auto& [k, _] : hc) {
        keys.insert(k);
    }
    for (const auto& [k, _] : hp) {
        keys.insert(k);
    }
    long lo = 0;
    long hi = 0;
    for (const auto& k : keys) {
        const int a = hc.count(k) ? hc.at(k) : 0;
        const int b = hp.count(k) ? hp.at(k) : 0;
        lo += std::min(a, b);
        hi += std::max(a, b);
    }
    return hi == 0 ? 1.0 : static_cast<double>(lo) / static_cast<double>(hi);
}

double depth_similarity(const BlockGraph& c, const BlockGraph& p)
{
    const auto dc = depth_distribution(c);
    const auto dp = depth_distribution(p);
    std::set<std::string> ops;
    for (const auto& [k, _] : dc) {
        ops.insert(k);
    }
    for (const auto& [k, _] : dp) {
        ops.insert(k);
    }
    if (ops.empty()) {
        return 1.0;
    }
    double sum = 0.0;
    for (const auto& o : ops) {
        auto a = dc.find(o);
        auto b = dp.find(o);
        if (a == dc.end() || b == dp.end()) {
            continue; // one-sided op scores 0
        }
        sum += 1.0 - emd_1d(a->second, b->second);
    }
    return std::clamp(sum / static_cast<double>(ops.size()), 0.0, 1.0);
}

double wl_similarity(const BlockGraph& c, const BlockGraph& p)
{
    const auto hc = wl_histogram(c);
    const auto hp = wl_histogram(p);
    if (hc.empty() && hp.empty()) {
        return 1.0;
    }
    if (hc.empty() || hp.empty()) {
        return 0.0;
    }
    double dot = 0.0;
    double nc = 0.0;
    double np = 0.0;
    for (const auto& [k, v] : hc) {
        nc += static_cast<double>(v) * v;
        if (auto f = hp.find(k); f != hp.end()) {
            dot += static_cast<double>(v) * f->second;
        }
    }
    for (const auto& [_, v] : hp) {
        np += static_cast<double>(v) * v;
    }
    return std::clamp(dot / (std::sqrt(nc) * std::sqrt(np)), 0.0, 1.0);
}

double blend_diversity(double s_op, double s_depth, double s_wl)
{
    const double s = std::clamp(kOpWeight * s_op + kDepthWeight * s_depth + kWlWeight * s_wl, 0.0, 1.0);
    return 1.0 - s;
}

SimilarityBreakdown similarity_breakdown(const BlockGraph& c, const BlockGraph& p)
{
    SimilarityBreakdown b;
    b.s_op = op_similarity(op_histogram(c), op_histogram(p));
    b.s_depth = depth_similarity(c, p);
    b.s_wl = wl_similarity(c, p);
    b.diversity = blend_diversity(b.s_op, b.s_depth, b.s_wl);
    b.similarity = 1.0 - b.diversity;
    return b;
}

double structural_diversity(const BlockGraph* c, const BlockGraph* p)
{
    if (c == nullptr || p == nullptr) {
        return 1.0;
    }
    return similarity_breakdown(*c, *p).diversity;
}

} // namespace archevo
