#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "archevo/arch_graph.hpp"

namespace archevo {

// Selects a node by matching a path of op labels along edges. `pick` is the
// index within the path of the node the edit applies to; `occurrence`
// counts matches in topological order (-1 = last match).
struct Anchor {
    std::vector<Op> path;
    int pick = 0;
    int occurrence = 0;
};

// A node to be materialized. Channel counts are relative to the width C of
// the stream at the edit site: out_channels = out_mult * C unless
// out_channels is given explicitly. in_channels is always the running width.
struct NodeSpec {
    Op op = Op::identity;
    int out_mult = 1;
    std::optional<int> out_channels;
    Attrs extra; // kernel, stride, dilation ...
};

namespace edit {
struct Replace { Anchor at; std::vector<NodeSpec> chain; };
struct InsertAfter { Anchor at; std::vector<NodeSpec> chain; };
struct InsertBefore { Anchor at; std::vector<NodeSpec> chain; };
// New path from `from` to `into`; `into` should be a merge node.
struct Branch { Anchor from; Anchor into; std::vector<NodeSpec> chain; };
struct SetAttr { Anchor at; std::string key; int value = 1; };
struct Substitute { Anchor at; Op op = Op::identity; };
} // namespace edit

using EditStep =
    std::variant<edit::Replace, edit::InsertAfter, edit::InsertBefore, edit::Branch, edit::SetAttr, edit::Substitute>;

struct TransformTemplate {
    std::string name;
    std::vector<EditStep> rewrite;
};

// Error codes: NO_MATCH, INVALID_RESULT. INVALID_RESULT carries the report.
class TransformError : public Error {
public:
    TransformError(std::string code, const std::string& message, ValidationReport report = {})
        : Error(std::move(code), message), report_(std::move(report)) {}

    const ValidationReport& report() const noexcept { return report_; }

private:
    ValidationReport report_;
};

// Node ids matching an anchor, in topological order of the path start.
std::vector<NodeId> match_anchor(const BlockGraph& g, const Anchor& a);

// Applies every step in order to a copy of `parent`, then validates.
BlockGraph apply_transform(const BlockGraph& parent, const TransformTemplate& t);

// The curated motif registry, keyed by template name.
const std::map<std::string, TransformTemplate>& template_registry();
const TransformTemplate* find_template(const std::string& name);

// Maps free text to a registry template name: an explicit "name:" prefix
// wins, otherwise the first alias found in the lower-cased text.
std::optional<std::string> bind_template(const std::string& text);

} // namespace archevo
