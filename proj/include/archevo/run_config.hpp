#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "archevo/consensus.hpp"
#include "archevo/evaluator.hpp"
#include "archevo/explorer.hpp"
#include "archevo/llm_gateway.hpp"
#include "archevo/selection.hpp"

namespace archevo {

enum class ParentChoice { softmax, uniform };

struct RunConfig {
    // [search]
    int generations = 3;
    int candidates_per_generation = 5;
    std::uint64_t seed = 0;
    int base_channels = 64;
    std::string paper; // path to the design text the experts read
    bool elitism = true;
    bool refresh_every_generation = false;
    ParentChoice parent_choice = ParentChoice::softmax;
    // Inspirations drawn by utility softmax before each action; 0 offers the whole pool.
    int shortlist = 3;
    bool record_timing = false;
    // Stop after this generation without closing the log. Not part of the hash.
    std::optional<int> stop_after;

    // [controller]
    ControllerConfig controller;

    // [consensus]
    ConsensusConfig consensus;
    double gamma = 0.9;
    double credit_kappa = 10.0;
    double temperature = 1.0;

    // [selection]
    double survival_kappa = 0.5;
    BidWeights weights;

    // [provider]
    std::string provider_kind = "mock"; // mock | http
    std::string mock_script;
    ProviderConfig provider;

    // [evaluator]
    std::string evaluator_kind = "surrogate"; // surrogate | external
    int eval_workers = 1;
    SurrogateConfig surrogate;
    AdapterConfig adapter;

    void check() const; // throws Error("INVALID_CONFIG")
};

// Strict INI reader: unknown sections or keys and unparsable values are
// INVALID_CONFIG. Relative paths resolve against `base_dir`.
RunConfig parse_config(std::string_view ini_text, const std::string& base_dir = ".");
// Throws Error("IO_ERROR") when the file cannot be read.
RunConfig load_config(const std::string& path);

// Everything that shapes the run, without stop_after.
nlohmann::json to_json(const RunConfig& c);
std::string config_hash(const RunConfig& c);

} // namespace archevo
