#include "archevo/inspiration.hpp"

#include <cctype>

#include "archevo/hashing.hpp"
#include "archevo/transforms.hpp"

namespace archevo {

using nlohmann::json;

std::string canonical_text(std::string_view text)
{
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::string inspiration_id(std::string_view text)
{
    return hex64(fnv1a(canonical_text(text)));
}

Inspiration make_inspiration(std::string text, std::vector<double> embedding, InspirationOrigin origin,
                             std::vector<int> evidence_refs)
{
    Inspiration i;
    i.id = inspiration_id(text);
    i.template_name = bind_template(text);
    i.text = std::move(text);
    i.embedding = std::move(embedding);
    i.origin = std::move(origin);
    i.evidence_refs = std::move(evidence_refs);
    return i;
}

json to_json(const Inspiration& i)
{
    json j = {{"id", i.id},
              {"text", i.text},
              {"embedding", i.embedding},
              {"utility", i.utility},
              {"template", i.template_name ? json(*i.template_name) : json(nullptr)},
              {"evidence_refs", i.evidence_refs},
              {"origin", {{"subaxis", i.origin.subaxis}, {"round", i.origin.round}}},
              {"zero_credit_generations", i.zero_credit_generations}};
    return j;
}

Inspiration inspiration_from_json(const json& j)
{
    Inspiration i;
    i.id = j.at("id").get<std::string>();
    i.text = j.at("text").get<std::string>();
    i.embedding = j.at("embedding").get<std::vector<double>>();
    i.utility = j.at("utility").get<double>();
    if (!j.at("template").is_null()) {
        i.template_name = j.at("template").get<std::string>();
    }
    i.evidence_refs = j.at("evidence_refs").get<std::vector<int>>();
    i.origin.subaxis = j.at("origin").at("subaxis").get<std::string>();
    i.origin.round = j.at("origin").at("round").get<int>();
    i.zero_credit_generations = j.value("zero_credit_generations", 0);
    return i;
}

} // namespace archevo
