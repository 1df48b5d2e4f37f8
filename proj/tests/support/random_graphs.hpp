#pragma once

// Test-only generators for block graphs and DAGs.

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "archevo/arch_graph.hpp"

namespace archevo::gen {

inline int uniform_int(std::mt19937_64& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// A valid single-width block with at most `max_nodes` nodes (>= 3).
inline BlockGraph random_valid_graph(std::mt19937_64& rng, int max_nodes = 12, int width = 16)
{
    static const std::vector<Op> unary{Op::conv, Op::dwconv, Op::pwconv, Op::bn,       Op::relu,
                                       Op::gelu, Op::se,     Op::pool,   Op::identity, Op::linear};
    std::vector<OpNode> nodes{{0, Op::input, {}, {}}};
    std::vector<Edge> edges;
    std::set<NodeId> sinks{0};
    auto make = [&](NodeId id, Op op) {
        OpNode n{id, op, {}, {}};
        if (is_parameterized(op)) {
            n.attrs = {{"in_channels", width}, {"out_channels", width}};
            if (op == Op::conv || op == Op::dwconv || op == Op::pool) {
                n.attrs["kernel"] = uniform_int(rng, 0, 1) == 0 ? 3 : 5;
            }
            if (op == Op::dwconv) {
                n.attrs["groups"] = width;
            }
        }
        return n;
    };
    const int target_interior = uniform_int(rng, 1, max_nodes - 2);
    int interior = 0;
    while (true) {
        const int total = static_cast<int>(nodes.size());
        const int merges_needed = static_cast<int>(sinks.size()) - 1;
        if (interior >= target_interior || total + merges_needed + 1 >= max_nodes) {
            break;
        }
        const NodeId id = total;
        std::vector<NodeId> sink_list(sinks.begin(), sinks.end());
        const bool want_add = nodes.size() >= 2 && uniform_int(rng, 0, 4) == 0;
        if (want_add) {
            const NodeId a = sink_list[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(sink_list.size()) - 1))];
            NodeId b = a;
            while (b == a) {
                b = uniform_int(rng, 0, total - 1);
            }
            nodes.push_back(make(id, Op::add));
            edges.emplace_back(a, id);
            edges.emplace_back(b, id);
            sinks.erase(a);
            sinks.erase(b);
        } else {
            NodeId parent;
            if (uniform_int(rng, 0, 9) < 7) {
                parent = sink_list[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(sink_list.size()) - 1))];
            } else {
                parent = uniform_int(rng, 0, total - 1);
            }
            const Op op = unary[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(unary.size()) - 1))];
            nodes.push_back(make(id, op));
            edges.emplace_back(parent, id);
            sinks.erase(parent);
        }
        sinks.insert(id);
        ++interior;
    }
    while (sinks.size() > 1) {
        auto it = sinks.begin();
        const NodeId a = *it++;
        const NodeId b = *it;
        const NodeId id = static_cast<NodeId>(nodes.size());
        nodes.push_back(make(id, Op::add));
        edges.emplace_back(a, id);
        edges.emplace_back(b, id);
        sinks.erase(a);
        sinks.erase(b);
        sinks.insert(id);
    }
    const NodeId out = static_cast<NodeId>(nodes.size());
    nodes.push_back({out, Op::output, {}, {}});
    edges.emplace_back(*sinks.begin(), out);
    return BlockGraph(std::move(nodes), std::move(edges), 0, out);
}

// Same graph with node ids remapped to a random injective set and the node
// and edge lists shuffled.
inline BlockGraph relabel(const BlockGraph& g, std::mt19937_64& rng)
{
    std::vector<int> pool(200);
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::map<NodeId, NodeId> map;
    std::size_t k = 0;
    for (const auto& n : g.nodes()) {
        map[n.id] = pool[k++];
    }
    std::vector<OpNode> nodes;
    for (auto n : g.nodes()) {
        n.id = map[n.id];
        nodes.push_back(std::move(n));
    }
    std::vector<Edge> edges;
    for (const auto& [s, d] : g.edges()) {
        edges.emplace_back(map[s], map[d]);
    }
    std::shuffle(nodes.begin(), nodes.end(), rng);
    std::shuffle(edges.begin(), edges.end(), rng);
    return BlockGraph(std::move(nodes), std::move(edges), map[g.entry()], map[g.exit()]);
}

// Random DAG on n nodes (edges only go from lower to higher position) with
// ids permuted; entry is position 0. Ops are irrelevant to depth.
inline BlockGraph random_dag(std::mt19937_64& rng, int n, double p_edge)
{
    std::vector<int> ids(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin() + 1, ids.end(), rng);
    std::vector<OpNode> nodes;
    for (int i = 0; i < n; ++i) {
        nodes.push_back({ids[static_cast<std::size_t>(i)], i == 0 ? Op::input : Op::relu, {}, {}});
    }
    std::bernoulli_distribution coin(p_edge);
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (coin(rng)) {
                edges.emplace_back(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
            }
        }
    }
    return BlockGraph(std::move(nodes), std::move(edges), ids[0], ids.back());
}

// Longest path ending at each node over every path from every source,
// by explicit enumeration.
inline std::map<NodeId, int> brute_force_depths(const BlockGraph& g)
{
    std::map<NodeId, int> best;
    for (const auto& n : g.nodes()) {
        best[n.id] = 0;
    }
    std::vector<NodeId> stack;
    auto dfs = [&](auto&& self, NodeId u, int len) -> void {
        best[u] = std::max(best[u], len);
        for (NodeId w : g.successors(u)) {
            self(self, w, len + 1);
        }
    };
    for (const auto& n : g.nodes()) {
        if (g.predecessors(n.id).empty()) {
            dfs(dfs, n.id, 0);
        }
    }
    return best;
}

} // namespace archevo::gen
