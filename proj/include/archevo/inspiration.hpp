#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace archevo {

struct InspirationOrigin {
    std::string subaxis;
    int round = 0;
};

struct Inspiration {
    std::string id;
    std::string text;
    std::vector<double> embedding;
    double utility = 0.0;
    std::optional<std::string> template_name;
    std::vector<int> evidence_refs;
    InspirationOrigin origin;
    int zero_credit_generations = 0; // consecutive generations without credit
};

inline constexpr std::size_t kMaxInspirationWords = 40;

// Lower-cased with runs of whitespace collapsed to one space and trimmed.
std::string canonical_text(std::string_view text);
// hex64 of the FNV-1a hash of canonical_text.
std::string inspiration_id(std::string_view text);

// Fills id and template binding; the embedding is supplied by the caller.
Inspiration make_inspiration(std::string text, std::vector<double> embedding, InspirationOrigin origin,
                             std::vector<int> evidence_refs = {});

nlohmann::json to_json(const Inspiration& i);
Inspiration inspiration_from_json(const nlohmann::json& j);

} // namespace archevo
