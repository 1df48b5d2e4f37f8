#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "archevo/error.hpp"

namespace archevo {

// Closed operation vocabulary. `unknown` only ever comes from parsing a label
// outside the vocabulary and is always reported by validate().
enum class Op {
    input,
    output,
    conv,
    dwconv,
    pwconv,
    bn,
    relu,
    gelu,
    add,
    concat,
    se,
    linear,
    pool,
    identity,
    unknown,
};

std::string_view op_name(Op op) noexcept;
std::optional<Op> op_from_name(std::string_view name) noexcept;

// conv/dwconv/pwconv/linear/se/pool carry integer attributes.
bool is_parameterized(Op op) noexcept;
// Ops whose in_channels attribute must match the incoming width.
bool consumes_channels(Op op) noexcept;
bool is_conv_family(Op op) noexcept;
bool is_sentinel(Op op) noexcept;

using NodeId = int;
using Attrs = std::map<std::string, int>;

struct OpNode {
    NodeId id = 0;
    Op op = Op::identity;
    Attrs attrs;
    // Original label when op == Op::unknown.
    std::string unknown_label;

    std::string label() const;
    int attr(const std::string& key, int fallback) const;

    friend bool operator==(const OpNode&, const OpNode&) = default;
};

using Edge = std::pair<NodeId, NodeId>;

class BlockGraph {
public:
    BlockGraph() = default;
    BlockGraph(std::vector<OpNode> nodes, std::vector<Edge> edges, NodeId entry, NodeId exit);

    const std::vector<OpNode>& nodes() const noexcept { return nodes_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    NodeId entry() const noexcept { return entry_; }
    NodeId exit() const noexcept { return exit_; }

    const OpNode* find(NodeId id) const noexcept;
    const OpNode& node(NodeId id) const;
    bool contains(NodeId id) const noexcept { return find(id) != nullptr; }

    // Adjacency in canonical edge order.
    std::vector<NodeId> predecessors(NodeId id) const;
    std::vector<NodeId> successors(NodeId id) const;

    NodeId max_id() const noexcept;
    std::size_t interior_count() const noexcept;

    // Nodes sorted by id, edges sorted lexicographically.
    BlockGraph canonical() const;

    // Equality is defined on canonical form.
    friend bool operator==(const BlockGraph& a, const BlockGraph& b);

private:
    std::vector<OpNode> nodes_;
    std::vector<Edge> edges_;
    NodeId entry_ = 0;
    NodeId exit_ = 0;
};

// Graph file format (canonical form):
// {"nodes":[{"id":0,"op":"input","attrs":{}}...],"edges":[[0,1],...],"entry":0,"exit":8}
nlohmann::json to_json(const BlockGraph& g);
BlockGraph graph_from_json(const nlohmann::json& j);
std::string serialize(const BlockGraph& g);
BlockGraph parse_graph(std::string_view text);
BlockGraph load_graph(const std::string& path);
void save_graph(const BlockGraph& g, const std::string& path);

// Hash of the canonical serialization; depends on node ids.
std::uint64_t canonical_hash(const BlockGraph& g);
// Hash invariant under node-id relabeling (labelled WL refinement run to a
// fixpoint over op labels and attributes).
std::uint64_t structural_hash(const BlockGraph& g);

struct Violation {
    std::optional<NodeId> node; // nullopt means the whole graph
    std::string rule;
    std::string message;

    std::string where() const;
};

struct ValidationReport {
    bool ok = true;
    std::vector<Violation> violations;

    bool has(std::string_view rule) const;
    bool has(std::string_view rule, NodeId node) const;
    std::string summary() const;
};

namespace rules {
inline constexpr std::string_view kNotDag = "GRAPH_NOT_DAG";
inline constexpr std::string_view kDuplicateId = "DUPLICATE_NODE_ID";
inline constexpr std::string_view kDanglingEdge = "DANGLING_EDGE";
inline constexpr std::string_view kSelfLoop = "SELF_LOOP";
inline constexpr std::string_view kDuplicateEdge = "DUPLICATE_EDGE";
inline constexpr std::string_view kInputNotUnique = "INPUT_NOT_UNIQUE";
inline constexpr std::string_view kOutputNotUnique = "OUTPUT_NOT_UNIQUE";
inline constexpr std::string_view kEntryExit = "ENTRY_EXIT_MISMATCH";
inline constexpr std::string_view kSentinelDegree = "SENTINEL_DEGREE";
inline constexpr std::string_view kUnused = "NODE_UNUSED";
inline constexpr std::string_view kMultiInputUnary = "MULTI_INPUT_UNARY_OP";
inline constexpr std::string_view kMergeArity = "MERGE_ARITY";
inline constexpr std::string_view kChannelMismatch = "CHANNEL_MISMATCH";
inline constexpr std::string_view kUnknownOp = "UNKNOWN_OP";
inline constexpr std::string_view kBadAttrs = "INVALID_ATTRS";
} // namespace rules

ValidationReport validate(const BlockGraph& g);

// Longest-path depth from the entry; sources other than the entry start at 0.
// Throws Error("CYCLE") when g is not a DAG.
std::map<NodeId, int> topological_depths(const BlockGraph& g);

// Kahn order with ties broken by lower id. Throws Error("CYCLE").
std::vector<NodeId> topological_order(const BlockGraph& g);

// Counts of interior op labels (input/output excluded).
std::map<std::string, int> op_histogram(const BlockGraph& g);

// Width of the tensor each node emits, when it can be determined. The input
// width is bound by the first consumer that fixes it.
std::map<NodeId, std::optional<int>> infer_widths(const BlockGraph& g);

// input -> conv -> bn -> relu -> conv -> bn -> add(+input) -> relu -> output
BlockGraph resnet_basic_block(int channels = 64);

} // namespace archevo
