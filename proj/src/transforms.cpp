#include "archevo/transforms.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>

namespace archevo {

namespace {

std::vector<NodeId> sorted_successors(const BlockGraph& g, NodeId id)
{
    auto s = g.successors(id);
    std::sort(s.begin(), s.end());
    return s;
}

// Mutable working copy used while an edit script runs.
struct Workspace {
    std::vector<OpNode> nodes;
    std::vector<Edge> edges;
    NodeId entry;
    NodeId exit;
    NodeId next_id;

    explicit Workspace(const BlockGraph& g)
        : nodes(g.nodes()), edges(g.edges()), entry(g.entry()), exit(g.exit()), next_id(g.max_id() + 1)
    {
    }

    BlockGraph graph() const { return BlockGraph(nodes, edges, entry, exit); }

    OpNode& node(NodeId id)
    {
        for (auto& n : nodes) {
            if (n.id == id) {
                return n;
            }
        }
        throw Error("NO_SUCH_NODE", "node " + std::to_string(id));
    }

    void remove_node(NodeId id)
    {
        std::erase_if(nodes, [id](const OpNode& n) { return n.id == id; });
        std::erase_if(edges, [id](const Edge& e) { return e.first == id || e.second == id; });
    }

    void connect(NodeId a, NodeId b)
    {
        if (std::find(edges.begin(), edges.end(), Edge{a, b}) == edges.end()) {
            edges.emplace_back(a, b);
        }
    }
};

NodeId resolve(const BlockGraph& g, const Anchor& a, const std::string& template_name)
{
    const auto matches = match_anchor(g, a);
    const auto count = static_cast<int>(matches.size());
    const int idx = a.occurrence < 0 ? count + a.occurrence : a.occurrence;
    if (matches.empty() || idx < 0 || idx >= count) {
        std::string path;
        for (Op op : a.path) {
            path += (path.empty() ? "" : "->") + std::string(op_name(op));
        }
        throw TransformError("NO_MATCH", "template '" + template_name + "' found no site matching " + path);
    }
    return matches[static_cast<std::size_t>(idx)];
}

int width_into(const BlockGraph& g, NodeId id)
{
    const OpNode& n = g.node(id);
    if (auto it = n.attrs.find("in_channels"); it != n.attrs.end()) {
        return it->second;
    }
    const auto widths = infer_widths(g);
    for (NodeId p : g.predecessors(id)) {
        if (auto w = widths.at(p)) {
            return *w;
        }
    }
    throw TransformError("INVALID_RESULT", "cannot determine the stream width entering node " + std::to_string(id));
}

int width_out_of(const BlockGraph& g, NodeId id)
{
    const OpNode& n = g.node(id);
    if (auto it = n.attrs.find("out_channels"); it != n.attrs.end()) {
        return it->second;
    }
    const auto widths = infer_widths(g);
    if (auto w = widths.at(id)) {
        return *w;
    }
    for (NodeId s : g.successors(id)) {
        if (auto it = g.node(s).attrs.find("in_channels"); it != g.node(s).attrs.end()) {
            return it->second;
        }
    }
    throw TransformError("INVALID_RESULT", "cannot determine the stream width leaving node " + std::to_string(id));
}

bool preserves_width(Op op) { return !(op == Op::conv || op == Op::pwconv || op == Op::linear); }

// Creates the chain's nodes and returns their ids in order.
std::vector<NodeId> materialize(Workspace& ws, const std::vector<NodeSpec>& chain, int site_width)
{
    std::vector<NodeId> ids;
    int running = site_width;
    for (const auto& spec : chain) {
        OpNode n;
        n.id = ws.next_id++;
        n.op = spec.op;
        if (is_parameterized(spec.op)) {
            int out = running;
            if (spec.out_channels) {
                out = *spec.out_channels;
            } else if (!preserves_width(spec.op)) {
                out = spec.out_mult * site_width;
            }
            n.attrs["in_channels"] = running;
            n.attrs["out_channels"] = out;
            if (spec.op == Op::conv || spec.op == Op::dwconv || spec.op == Op::pool) {
                n.attrs["kernel"] = 3;
            }
            if (spec.op == Op::dwconv) {
                n.attrs["groups"] = running;
            }
            for (const auto& [k, v] : spec.extra) {
                n.attrs[k] = v;
            }
            running = out;
        }
        ids.push_back(n.id);
        ws.nodes.push_back(std::move(n));
    }
    for (std::size_t i = 1; i < ids.size(); ++i) {
        ws.connect(ids[i - 1], ids[i]);
    }
    return ids;
}

struct StepRunner {
    Workspace& ws;
    const std::string& name;

    void operator()(const edit::Replace& s)
    {
        const BlockGraph g = ws.graph();
        const NodeId x = resolve(g, s.at, name);
        const int width = width_into(g, x);
        const auto preds = g.predecessors(x);
        const auto succs = g.successors(x);
        ws.remove_node(x);
        const auto chain = materialize(ws, s.chain, width);
        if (chain.empty()) {
            for (NodeId p : preds) {
                for (NodeId q : succs) {
                    ws.connect(p, q);
                }
            }
            return;
        }
        for (NodeId p : preds) {
            ws.connect(p, chain.front());
        }
        for (NodeId q : succs) {
            ws.connect(chain.back(), q);
        }
    }

    void operator()(const edit::InsertAfter& s)
    {
        const BlockGraph g = ws.graph();
        const NodeId x = resolve(g, s.at, name);
        if (s.chain.empty()) {
            return;
        }
        const int width = width_out_of(g, x);
        const auto succs = g.successors(x);
        std::erase_if(ws.edges, [x](const Edge& e) { return e.first == x; });
        const auto chain = materialize(ws, s.chain, width);
        ws.connect(x, chain.front());
        for (NodeId q : succs) {
            ws.connect(chain.back(), q);
        }
    }

    void operator()(const edit::InsertBefore& s)
    {
        const BlockGraph g = ws.graph();
        const NodeId x = resolve(g, s.at, name);
        if (s.chain.empty()) {
            return;
        }
        const int width = width_into(g, x);
        const auto preds = g.predecessors(x);
        std::erase_if(ws.edges, [x](const Edge& e) { return e.second == x; });
        const auto chain = materialize(ws, s.chain, width);
        for (NodeId p : preds) {
            ws.connect(p, chain.front());
        }
        ws.connect(chain.back(), x);
    }

    void operator()(const edit::Branch& s)
    {
        const BlockGraph g = ws.graph();
        const NodeId from = resolve(g, s.from, name);
        const NodeId into = resolve(g, s.into, name);
        if (s.chain.empty()) {
            ws.connect(from, into);
            return;
        }
        const auto chain = materialize(ws, s.chain, width_out_of(g, from));
        ws.connect(from, chain.front());
        ws.connect(chain.back(), into);
    }

    void operator()(const edit::SetAttr& s)
    {
        const NodeId x = resolve(ws.graph(), s.at, name);
        ws.node(x).attrs[s.key] = s.value;
    }

    void operator()(const edit::Substitute& s)
    {
        const NodeId x = resolve(ws.graph(), s.at, name);
        OpNode& n = ws.node(x);
        n.op = s.op;
        if (!is_parameterized(s.op)) {
            n.attrs.clear();
        }
    }
};

NodeSpec spec(Op op, Attrs extra = {}, int out_mult = 1) { return NodeSpec{op, out_mult, std::nullopt, std::move(extra)}; }

Anchor last(Op op) { return Anchor{{op}, 0, -1}; }
Anchor first(Op op) { return Anchor{{op}, 0, 0}; }

std::map<std::string, TransformTemplate> build_registry()
{
    std::vector<TransformTemplate> all{
        {"identity", {}},
        {"dw_ffn", {edit::Replace{last(Op::conv), {spec(Op::dwconv, {{"kernel", 3}}), spec(Op::pwconv)}}}},
        {"pre_norm", {edit::InsertBefore{first(Op::conv), {spec(Op::bn)}}}},
        {"cross_scale_fusion", {edit::Branch{first(Op::input), last(Op::add), {spec(Op::pwconv)}}}},
        {"anti_alias_dilation", {edit::SetAttr{last(Op::conv), "dilation", 2}}},
        {"mbconv_expand",
         {edit::Replace{last(Op::conv),
                        {spec(Op::pwconv, {}, 4), spec(Op::dwconv, {{"kernel", 3}}), spec(Op::pwconv, {}, 1)}}}},
        {"se_insert", {edit::InsertAfter{last(Op::bn), {spec(Op::se)}}}},
        {"gating", {edit::InsertAfter{last(Op::add), {spec(Op::pwconv), spec(Op::gelu)}}}},
        {"routing_head", {edit::InsertBefore{first(Op::output), {spec(Op::linear)}}}},
        {"rmsnorm_swap", {edit::InsertAfter{last(Op::add), {spec(Op::bn)}}}},
        {"wide_dw_kernel", {edit::Replace{last(Op::conv), {spec(Op::dwconv, {{"kernel", 7}}), spec(Op::pwconv)}}}},
        {"residual_scaling", {edit::InsertAfter{Anchor{{Op::bn, Op::add}, 0, -1}, {spec(Op::pwconv)}}}},
    };
    std::map<std::string, TransformTemplate> out;
    for (auto& t : all) {
        auto key = t.name;
        out.emplace(std::move(key), std::move(t));
    }
    return out;
}

std::string normalize_text(const std::string& text)
{
    std::string out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        if (!std::isalnum(c) && c != '=') {
            out.push_back(' ');
        } else {
            out.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    return out;
}

} // namespace

std::vector<NodeId> match_anchor(const BlockGraph& g, const Anchor& a)
{
    std::vector<NodeId> out;
    if (a.path.empty() || a.pick < 0 || a.pick >= static_cast<int>(a.path.size())) {
        return out;
    }
    std::set<NodeId> emitted;
    std::vector<NodeId> trail;
    std::function<void(NodeId, std::size_t)> walk = [&](NodeId id, std::size_t depth) {
        if (g.node(id).op != a.path[depth]) {
            return;
        }
        trail.push_back(id);
        if (depth + 1 == a.path.size()) {
            const NodeId picked = trail[static_cast<std::size_t>(a.pick)];
            if (emitted.insert(picked).second) {
                out.push_back(picked);
            }
        } else {
            for (NodeId s : sorted_successors(g, id)) {
                walk(s, depth + 1);
            }
        }
        trail.pop_back();
    };
    for (NodeId id : topological_order(g)) {
        walk(id, 0);
    }
    return out;
}

BlockGraph apply_transform(const BlockGraph& parent, const TransformTemplate& t)
{
    Workspace ws(parent);
    StepRunner runner{ws, t.name};
    for (const auto& step : t.rewrite) {
        std::visit(runner, step);
    }
    BlockGraph child = ws.graph().canonical();
    ValidationReport report = validate(child);
    if (!report.ok) {
        throw TransformError("INVALID_RESULT", "template '" + t.name + "' produced an invalid graph:\n" + report.summary(),
                             std::move(report));
    }
    return child;
}

const std::map<std::string, TransformTemplate>& template_registry()
{
    static const auto registry = build_registry();
    return registry;
}

const TransformTemplate* find_template(const std::string& name)
{
    const auto& r = template_registry();
    auto it = r.find(name);
    return it == r.end() ? nullptr : &it->second;
}

std::optional<std::string> bind_template(const std::string& text)
{
    if (auto colon = text.find(':'); colon != std::string::npos) {
        std::string head = text.substr(0, colon);
        std::erase_if(head, [](unsigned char c) { return std::isspace(c); });
        std::transform(head.begin(), head.end(), head.begin(), [](unsigned char c) { return std::tolower(c); });
        if (find_template(head) != nullptr) {
            return head;
        }
    }
    // Most specific cues first: "RMSNorm swap-in + pre-norm" must bind to rmsnorm_swap.
    static const std::vector<std::pair<std::string, std::string>> aliases{
        {"rmsnorm", "rmsnorm_swap"},
        {"mbconv", "mbconv_expand"},
        {"inverted bottleneck", "mbconv_expand"},
        {"k=7", "wide_dw_kernel"},
        {"k7", "wide_dw_kernel"},
        {"7x7", "wide_dw_kernel"},
        {"wide dw", "wide_dw_kernel"},
        {"large kernel", "wide_dw_kernel"},
        {"cross scale", "cross_scale_fusion"},
        {"anti alias", "anti_alias_dilation"},
        {"dilat", "anti_alias_dilation"},
        {"routing", "routing_head"},
        {"router", "routing_head"},
        {"moe", "routing_head"},
        {"gating", "gating"},
        {"gate ", "gating"},
        {"residual scaling", "residual_scaling"},
        {"rescal", "residual_scaling"},
        {"squeeze", "se_insert"},
        {"se ", "se_insert"},
        {"pre norm", "pre_norm"},
        {"pre activation", "pre_norm"},
        {"dw ffn", "dw_ffn"},
        {"depthwise", "dw_ffn"},
        {"dwconv", "dw_ffn"},
        {"identity", "identity"},
    };
    const std::string hay = " " + normalize_text(text) + " ";
    for (const auto& [alias, name] : aliases) {
        if (hay.find(" " + alias) != std::string::npos) {
            return name;
        }
    }
    return std::nullopt;
}

} // namespace archevo
