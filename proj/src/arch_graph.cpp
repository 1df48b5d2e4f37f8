#include "archevo/arch_graph.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <functional>
#include <queue>
#include <set>
#include <sstream>

#include "archevo/hashing.hpp"

namespace archevo {

namespace {

constexpr std::array<std::pair<Op, std::string_view>, 14> kOpNames{{
    {Op::input, "input"},
    {Op::output, "output"},
    {Op::conv, "conv"},
    {Op::dwconv, "dwconv"},
    {Op::pwconv, "pwconv"},
    {Op::bn, "bn"},
    {Op::relu, "relu"},
    {Op::gelu, "gelu"},
    {Op::add, "add"},
    {Op::concat, "concat"},
    {Op::se, "se"},
    {Op::linear, "linear"},
    {Op::pool, "pool"},
    {Op::identity, "identity"},
}};

const std::set<std::string> kAttrKeys{"in_channels", "out_channels", "kernel", "stride", "groups", "dilation"};

} // namespace

std::string hex64(std::uint64_t value)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xfu];
        value >>= 4;
    }
    return out;
}

std::string_view op_name(Op op) noexcept
{
    for (const auto& [o, name] : kOpNames) {
        if (o == op) {
            return name;
        }
    }
    return "unknown";
}

std::optional<Op> op_from_name(std::string_view name) noexcept
{
    for (const auto& [o, n] : kOpNames) {
        if (n == name) {
            return o;
        }
    }
    return std::nullopt;
}

bool is_parameterized(Op op) noexcept
{
    switch (op) {
    case Op::conv:
    case Op::dwconv:
    case Op::pwconv:
    case Op::linear:
    case Op::se:
    case Op::pool:
        return true;
    default:
        return false;
    }
}

bool consumes_channels(Op op) noexcept { return is_parameterized(op); }

bool is_conv_family(Op op) noexcept { return op == Op::conv || op == Op::dwconv || op == Op::pwconv; }

bool is_sentinel(Op op) noexcept { return op == Op::input || op == Op::output; }

std::string OpNode::label() const
{
    return op == Op::unknown ? unknown_label : std::string(op_name(op));
}

int OpNode::attr(const std::string& key, int fallback) const
{
    auto it = attrs.find(key);
    return it == attrs.end() ? fallback : it->second;
}

BlockGraph::BlockGraph(std::vector<OpNode> nodes, std::vector<Edge> edges, NodeId entry, NodeId exit)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), entry_(entry), exit_(exit)
{
}

const OpNode* BlockGraph::find(NodeId id) const noexcept
{
    for (const auto& n : nodes_) {
        if (n.id == id) {
            return &n;
        }
    }
    return nullptr;
}

const OpNode& BlockGraph::node(NodeId id) const
{
    const OpNode* n = find(id);
    if (n == nullptr) {
        throw Error("NO_SUCH_NODE", "node " + std::to_string(id));
    }
    return *n;
}

std::vector<NodeId> BlockGraph::predecessors(NodeId id) const
{
    std::vector<NodeId> out;
    for (const auto& [s, d] : edges_) {
        if (d == id) {
            out.push_back(s);
        }
    }
    return out;
}

std::vector<NodeId> BlockGraph::successors(NodeId id) const
{
    std::vector<NodeId> out;
    for (const auto& [s, d] : edges_) {
        if (s == id) {
            out.push_back(d);
        }
    }
    return out;
}

NodeId BlockGraph::max_id() const noexcept
{
    NodeId m = -1;
    for (const auto& n : nodes_) {
        m = std::max(m, n.id);
    }
    return m;
}

std::size_t BlockGraph::interior_count() const noexcept
{
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const OpNode& n) { return !is_sentinel(n.op); }));
}

BlockGraph BlockGraph::canonical() const
{
    auto nodes = nodes_;
    auto edges = edges_;
    std::stable_sort(nodes.begin(), nodes.end(), [](const OpNode& a, const OpNode& b) { return a.id < b.id; });
    std::sort(edges.begin(), edges.end());
    return BlockGraph(std::move(nodes), std::move(edges), entry_, exit_);
}

bool operator==(const BlockGraph& a, const BlockGraph& b)
{
    const BlockGraph ca = a.canonical();
    const BlockGraph cb = b.canonical();
    return ca.entry_ == cb.entry_ && ca.exit_ == cb.exit_ && ca.nodes_ == cb.nodes_ && ca.edges_ == cb.edges_;
}

nlohmann::json to_json(const BlockGraph& g)
{
    const BlockGraph c = g.canonical();
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : c.nodes()) {
        nlohmann::json attrs = nlohmann::json::object();
        for (const auto& [k, v] : n.attrs) {
            attrs[k] = v;
        }
        nodes.push_back({{"id", n.id}, {"op", n.label()}, {"attrs", attrs}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [s, d] : c.edges()) {
        edges.push_back({s, d});
    }
    return {{"nodes", nodes}, {"edges", edges}, {"entry", c.entry()}, {"exit", c.exit()}};
}

BlockGraph graph_from_json(const nlohmann::json& j)
{
    try {
        std::vector<OpNode> nodes;
        for (const auto& jn : j.at("nodes")) {
            OpNode n;
            n.id = jn.at("id").get<int>();
            const auto label = jn.at("op").get<std::string>();
            if (auto op = op_from_name(label)) {
                n.op = *op;
            } else {
                n.op = Op::unknown;
                n.unknown_label = label;
            }
            if (jn.contains("attrs")) {
                for (const auto& [k, v] : jn.at("attrs").items()) {
                    n.attrs[k] = v.get<int>();
                }
            }
            nodes.push_back(std::move(n));
        }
        std::vector<Edge> edges;
        for (const auto& je : j.at("edges")) {
            if (!je.is_array() || je.size() != 2) {
                throw Error("PARSE_ERROR", "edge must be a [src, dst] pair");
            }
            edges.emplace_back(je[0].get<int>(), je[1].get<int>());
        }
        return BlockGraph(std::move(nodes), std::move(edges), j.at("entry").get<int>(), j.at("exit").get<int>());
    } catch (const nlohmann::json::exception& e) {
        throw Error("PARSE_ERROR", e.what());
    }
}

std::string serialize(const BlockGraph& g) { return to_json(g).dump(); }

BlockGraph parse_graph(std::string_view text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error("PARSE_ERROR", e.what());
    }
    return graph_from_json(j);
}

BlockGraph load_graph(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("IO_ERROR", "cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_graph(ss.str());
}

void save_graph(const BlockGraph& g, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw Error("IO_ERROR", "cannot write " + path);
    }
    out << to_json(g).dump(2) << '\n';
}

std::uint64_t canonical_hash(const BlockGraph& g) { return fnv1a(serialize(g)); }

std::uint64_t structural_hash(const BlockGraph& g)
{
    std::map<NodeId, std::uint64_t> color;
    for (const auto& n : g.nodes()) {
        std::string seed = n.label();
        for (const auto& [k, v] : n.attrs) {
            seed += ";" + k + "=" + std::to_string(v);
        }
        if (n.id == g.entry()) {
            seed += ";entry";
        }
        if (n.id == g.exit()) {
            seed += ";exit";
        }
        color[n.id] = fnv1a(seed);
    }
    auto distinct = [&] {
        std::set<std::uint64_t> s;
        for (const auto& [_, c] : color) {
            s.insert(c);
        }
        return s.size();
    };
    std::size_t classes = distinct();
    for (std::size_t iter = 0; iter < g.nodes().size(); ++iter) {
        std::map<NodeId, std::uint64_t> next;
        for (const auto& n : g.nodes()) {
            std::vector<std::uint64_t> in, out;
            for (NodeId p : g.predecessors(n.id)) {
                in.push_back(color[p]);
            }
            for (NodeId s : g.successors(n.id)) {
                out.push_back(color[s]);
            }
            std::sort(in.begin(), in.end());
            std::sort(out.begin(), out.end());
            std::uint64_t h = mix_u64(kFnvOffset, color[n.id]);
            h = mix_u64(h, in.size());
            for (auto c : in) {
                h = mix_u64(h, c);
            }
            h = mix_u64(h, out.size());
            for (auto c : out) {
                h = mix_u64(h, c);
            }
            next[n.id] = h;
        }
        color = std::move(next);
        const std::size_t now = distinct();
        if (now == classes) {
            break;
        }
        classes = now;
    }
    std::vector<std::uint64_t> all;
    for (const auto& [_, c] : color) {
        all.push_back(c);
    }
    std::sort(all.begin(), all.end());
    std::uint64_t h = mix_u64(kFnvOffset, all.size());
    h = mix_u64(h, g.edges().size());
    for (auto c : all) {
        h = mix_u64(h, c);
    }
    return h;
}

std::string Violation::where() const { return node ? "node " + std::to_string(*node) : std::string("graph"); }

bool ValidationReport::has(std::string_view rule) const
{
    return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.rule == rule; });
}

bool ValidationReport::has(std::string_view rule, NodeId node) const
{
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.rule == rule && v.node == node; });
}

std::string ValidationReport::summary() const
{
    std::string out;
    for (const auto& v : violations) {
        out += v.where() + " error [" + v.rule + "]: " + v.message + "\n";
    }
    return out;
}

namespace {

// Kahn over the edges whose endpoints exist. Returns the order and whether
// every node was emitted.
std::pair<std::vector<NodeId>, bool> kahn(const BlockGraph& g)
{
    std::map<NodeId, int> indegree;
    std::map<NodeId, std::vector<NodeId>> adj;
    for (const auto& n : g.nodes()) {
        indegree.emplace(n.id, 0);
    }
    std::set<Edge> seen;
    for (const auto& e : g.edges()) {
        if (!indegree.contains(e.first) || !indegree.contains(e.second) || !seen.insert(e).second) {
            continue;
        }
        adj[e.first].push_back(e.second);
        ++indegree[e.second];
    }
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (const auto& [id, d] : indegree) {
        if (d == 0) {
            ready.push(id);
        }
    }
    std::vector<NodeId> order;
    while (!ready.empty()) {
        NodeId u = ready.top();
        ready.pop();
        order.push_back(u);
        for (NodeId v : adj[u]) {
            if (--indegree[v] == 0) {
                ready.push(v);
            }
        }
    }
    const bool complete = order.size() == indegree.size();
    return {std::move(order), complete};
}

// Width lattice used by channel inference.
struct Width {
    enum Kind { unknown, input_var, known } kind = unknown;
    int value = 0;
};

struct WidthPass {
    std::map<NodeId, Width> widths;
    std::optional<int> input_width;

    std::optional<int> resolve(const Width& w) const
    {
        if (w.kind == Width::known) {
            return w.value;
        }
        if (w.kind == Width::input_var) {
            return input_width;
        }
        return std::nullopt;
    }
};

WidthPass propagate_widths(const BlockGraph& g, const std::vector<NodeId>& order, std::vector<Violation>* out)
{
    WidthPass pass;
    auto report = [&](NodeId id, std::string msg) {
        if (out != nullptr) {
            out->push_back({id, std::string(rules::kChannelMismatch), std::move(msg)});
        }
    };
    for (NodeId id : order) {
        const OpNode& n = g.node(id);
        const auto preds = g.predecessors(id);
        Width w;
        if (n.op == Op::input) {
            w.kind = Width::input_var;
        } else if (consumes_channels(n.op)) {
            const auto in_it = n.attrs.find("in_channels");
            const auto out_it = n.attrs.find("out_channels");
            if (in_it != n.attrs.end()) {
                for (NodeId p : preds) {
                    const Width& pw = pass.widths[p];
                    if (pw.kind == Width::input_var && !pass.input_width) {
                        pass.input_width = in_it->second;
                        continue;
                    }
                    if (auto have = pass.resolve(pw); have && *have != in_it->second) {
                        report(id, std::string(op_name(n.op)) + " expects " + std::to_string(in_it->second) +
                                       " input channels but node " + std::to_string(p) + " emits " +
                                       std::to_string(*have));
                    }
                }
            }
            if (out_it != n.attrs.end()) {
                w = {Width::known, out_it->second};
            }
        } else if (n.op == Op::add) {
            std::optional<int> common;
            bool any_var = false;
            for (NodeId p : preds) {
                const Width& pw = pass.widths[p];
                auto have = pass.resolve(pw);
                if (!have) {
                    any_var = any_var || pw.kind == Width::input_var;
                    continue;
                }
                if (!common) {
                    common = have;
                } else if (*common != *have) {
                    report(id, "add inputs have mismatched channels (" + std::to_string(*common) + " vs " +
                                   std::to_string(*have) + ")");
                }
            }
            if (common && any_var && !pass.input_width) {
                pass.input_width = common;
            }
            if (common) {
                w = {Width::known, *common};
            } else if (any_var) {
                w.kind = Width::input_var;
            }
        } else if (n.op == Op::concat) {
            int total = 0;
            bool all_known = !preds.empty();
            for (NodeId p : preds) {
                auto have = pass.resolve(pass.widths[p]);
                if (!have) {
                    all_known = false;
                    break;
                }
                total += *have;
            }
            if (all_known) {
                w = {Width::known, total};
            }
        } else if (!preds.empty()) {
            w = pass.widths[preds.front()];
        }
        pass.widths[id] = w;
    }
    return pass;
}

void check_attrs(const OpNode& n, std::vector<Violation>& out)
{
    auto bad = [&](std::string msg) { out.push_back({n.id, std::string(rules::kBadAttrs), std::move(msg)}); };
    const std::string name = n.label();
    if (!is_parameterized(n.op)) {
        if (!n.attrs.empty()) {
            bad(name + " takes no attributes");
        }
        return;
    }
    for (const auto& [k, v] : n.attrs) {
        if (!kAttrKeys.contains(k)) {
            bad("unknown attribute '" + k + "'");
        } else if (v < 1) {
            bad("attribute '" + k + "' must be >= 1");
        }
    }
    auto require = [&](const char* key) {
        if (!n.attrs.contains(key)) {
            bad(name + " requires '" + key + "'");
            return false;
        }
        return true;
    };
    auto forbid = [&](const char* key) {
        if (n.attrs.contains(key)) {
            bad(name + " does not take '" + key + "'");
        }
    };
    const bool has_io = require("in_channels") & require("out_channels");
    const int in = n.attr("in_channels", 0);
    const int out_ch = n.attr("out_channels", 0);
    switch (n.op) {
    case Op::conv: {
        require("kernel");
        const int groups = n.attr("groups", 1);
        if (has_io && groups >= 1 && (in % groups != 0 || out_ch % groups != 0)) {
            bad("groups must divide in_channels and out_channels");
        }
        break;
    }
    case Op::dwconv:
        require("kernel");
        if (require("groups") && has_io && n.attr("groups", 0) != in) {
            bad("dwconv requires groups == in_channels");
        }
        if (has_io && in != out_ch) {
            bad("dwconv requires out_channels == in_channels");
        }
        break;
    case Op::pwconv:
        if (n.attr("kernel", 1) != 1) {
            bad("pwconv kernel must be 1");
        }
        if (const int groups = n.attr("groups", 1); has_io && groups >= 1 && (in % groups || out_ch % groups)) {
            bad("groups must divide in_channels and out_channels");
        }
        break;
    case Op::linear:
        forbid("kernel");
        forbid("stride");
        forbid("groups");
        forbid("dilation");
        break;
    case Op::se:
        forbid("kernel");
        forbid("groups");
        if (has_io && in != out_ch) {
            bad("se requires out_channels == in_channels");
        }
        break;
    case Op::pool:
        require("kernel");
        forbid("groups");
        if (has_io && in != out_ch) {
            bad("pool requires out_channels == in_channels");
        }
        break;
    default:
        break;
    }
}

bool attrs_usable(const OpNode& n) { return n.attrs.contains("in_channels") && n.attrs.contains("out_channels"); }

} // namespace

ValidationReport validate(const BlockGraph& g)
{
    std::vector<Violation> v;
    auto add = [&](std::optional<NodeId> node, std::string_view rule, std::string msg) {
        v.push_back({node, std::string(rule), std::move(msg)});
    };

    std::set<NodeId> ids;
    for (const auto& n : g.nodes()) {
        if (!ids.insert(n.id).second) {
            add(n.id, rules::kDuplicateId, "node id is defined more than once");
        }
        if (n.op == Op::unknown) {
            add(n.id, rules::kUnknownOp, "undefined computation " + n.unknown_label + " is used");
        } else {
            check_attrs(n, v);
        }
    }

    std::set<Edge> seen;
    for (const auto& e : g.edges()) {
        if (!ids.contains(e.first) || !ids.contains(e.second)) {
            add(std::nullopt, rules::kDanglingEdge,
                "edge " + std::to_string(e.first) + "->" + std::to_string(e.second) + " references a missing node");
            continue;
        }
        if (e.first == e.second) {
            add(e.first, rules::kSelfLoop, "self-loop");
        }
        if (!seen.insert(e).second) {
            add(std::nullopt, rules::kDuplicateEdge,
                "edge " + std::to_string(e.first) + "->" + std::to_string(e.second) + " is duplicated");
        }
    }

    std::vector<NodeId> inputs, outputs;
    for (const auto& n : g.nodes()) {
        if (n.op == Op::input) {
            inputs.push_back(n.id);
        } else if (n.op == Op::output) {
            outputs.push_back(n.id);
        }
    }
    if (inputs.size() != 1) {
        add(std::nullopt, rules::kInputNotUnique,
            "block must have exactly one input node (found " + std::to_string(inputs.size()) + ")");
    }
    if (outputs.size() != 1) {
        add(std::nullopt, rules::kOutputNotUnique,
            "output must be the only output node (found " + std::to_string(outputs.size()) + " output nodes)");
    }
    const OpNode* entry = g.find(g.entry());
    const OpNode* exit = g.find(g.exit());
    const bool entry_ok = entry != nullptr && entry->op == Op::input;
    const bool exit_ok = exit != nullptr && exit->op == Op::output;
    if (!entry_ok) {
        add(std::nullopt, rules::kEntryExit, "entry does not reference an input node");
    }
    if (!exit_ok) {
        add(std::nullopt, rules::kEntryExit, "exit does not reference an output node");
    }

    // Degree rules, counted over distinct valid edges.
    std::map<NodeId, int> indeg, outdeg;
    std::map<NodeId, std::vector<NodeId>> fwd, bwd;
    for (const auto& e : seen) {
        ++outdeg[e.first];
        ++indeg[e.second];
        fwd[e.first].push_back(e.second);
        bwd[e.second].push_back(e.first);
    }
    for (const auto& n : g.nodes()) {
        const int in = indeg[n.id];
        switch (n.op) {
        case Op::input:
            if (in != 0) {
                add(n.id, rules::kSentinelDegree, "input node cannot have predecessors");
            }
            break;
        case Op::output:
            if (outdeg[n.id] != 0) {
                add(n.id, rules::kSentinelDegree, "output node cannot have successors");
            }
            if (in != 1) {
                add(n.id, rules::kSentinelDegree, "output node must have exactly one predecessor");
            }
            break;
        case Op::add:
        case Op::concat:
            if (in < 2) {
                add(n.id, rules::kMergeArity, std::string(op_name(n.op)) + " operation needs at least two inputs");
            }
            break;
        case Op::unknown:
            break;
        default:
            if (in > 1) {
                add(n.id, rules::kMultiInputUnary,
                    std::string(op_name(n.op)) + " operation can receive only one input");
            }
            break;
        }
    }

    auto [order, is_dag] = kahn(g);
    if (!is_dag) {
        add(std::nullopt, rules::kNotDag, "the computation graph of the block is not a directed acyclic graph");
    }

    if (entry_ok && exit_ok) {
        auto reach = [](NodeId start, std::map<NodeId, std::vector<NodeId>>& adj) {
            std::set<NodeId> seen_nodes{start};
            std::vector<NodeId> stack{start};
            while (!stack.empty()) {
                NodeId u = stack.back();
                stack.pop_back();
                for (NodeId w : adj[u]) {
                    if (seen_nodes.insert(w).second) {
                        stack.push_back(w);
                    }
                }
            }
            return seen_nodes;
        };
        const auto from_entry = reach(g.entry(), fwd);
        const auto to_exit = reach(g.exit(), bwd);
        std::set<NodeId> reported;
        for (const auto& n : g.nodes()) {
            if (is_sentinel(n.op) && (n.id == g.entry() || n.id == g.exit())) {
                continue;
            }
            if ((!from_entry.contains(n.id) || !to_exit.contains(n.id)) && reported.insert(n.id).second) {
                add(n.id, rules::kUnused, "the node is not used");
            }
        }
    }

    const bool ids_unique = ids.size() == g.nodes().size();
    if (is_dag && ids_unique) {
        // Skip channel checks around nodes whose attributes are unusable.
        bool usable = true;
        for (const auto& n : g.nodes()) {
            if (n.op == Op::unknown || (consumes_channels(n.op) && !attrs_usable(n))) {
                usable = false;
            }
        }
        if (usable) {
            propagate_widths(g, order, &v);
        }
    }

    ValidationReport report;
    report.violations = std::move(v);
    report.ok = report.violations.empty();
    return report;
}

std::vector<NodeId> topological_order(const BlockGraph& g)
{
    auto [order, ok] = kahn(g);
    if (!ok) {
        throw Error("CYCLE", "graph contains a cycle");
    }
    return order;
}

std::map<NodeId, int> topological_depths(const BlockGraph& g)
{
    const auto order = topological_order(g);
    std::map<NodeId, int> depth;
    for (NodeId id : order) {
        depth[id] = 0;
    }
    for (NodeId u : order) {
        for (NodeId w : g.successors(u)) {
            if (depth.contains(w)) {
                depth[w] = std::max(depth[w], depth[u] + 1);
            }
        }
    }
    return depth;
}

std::map<std::string, int> op_histogram(const BlockGraph& g)
{
    std::map<std::string, int> h;
    for (const auto& n : g.nodes()) {
        if (!is_sentinel(n.op)) {
            ++h[n.label()];
        }
    }
    return h;
}

std::map<NodeId, std::optional<int>> infer_widths(const BlockGraph& g)
{
    const auto order = topological_order(g);
    const WidthPass pass = propagate_widths(g, order, nullptr);
    std::map<NodeId, std::optional<int>> out;
    for (const auto& [id, w] : pass.widths) {
        out[id] = pass.resolve(w);
    }
    return out;
}

BlockGraph resnet_basic_block(int channels)
{
    auto conv = [channels](NodeId id) {
        return OpNode{id, Op::conv, {{"in_channels", channels}, {"out_channels", channels}, {"kernel", 3}}, {}};
    };
    std::vector<OpNode> nodes{
        {0, Op::input, {}, {}}, conv(1), {2, Op::bn, {}, {}}, {3, Op::relu, {}, {}}, conv(4),
        {5, Op::bn, {}, {}},    {6, Op::add, {}, {}}, {7, Op::relu, {}, {}}, {8, Op::output, {}, {}},
    };
    std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {0, 6}, {6, 7}, {7, 8}};
    return BlockGraph(std::move(nodes), std::move(edges), 0, 8);
}

} // namespace archevo
