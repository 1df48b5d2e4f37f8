#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "archevo/evaluator.hpp"
#include "archevo/llm_gateway.hpp"
#include "archevo/run_config.hpp"

namespace archevo {

inline constexpr const char* kRunLogVersion = "archevo-runlog/1";

// Line-delimited log. Record types, in order of appearance:
//   header      {version, config_hash, config}
//   consensus   {generation, axes, transcript, inspirations, ...}
//   step        one per controller decision
//   candidate   one per child, evaluated or failed (generation 0 is the base block)
//   generation  selection outcome plus the full state needed to resume
//   end         closing record of a finished run
using RunLog = std::vector<nlohmann::json>;

// Throws Error("IO_ERROR") when unreadable, Error("CORRUPT_LOG") on a line
// that does not parse.
RunLog read_log(const std::string& path);

struct RunOutcome {
    int generations_completed = 0;
    bool finished = false;
    std::uint64_t provider_calls = 0;
    std::uint64_t evaluator_calls = 0;
};

// Runs a fresh search, overwriting `log_path`. Fatal errors: INVALID_CONFIG,
// CONSENSUS_FAILED, IO_ERROR; anything going wrong with one candidate is
// logged and skipped.
RunOutcome run(const RunConfig& cfg, Provider& provider, Evaluator& evaluator, const std::string& paper_text,
               const std::string& log_path);

// Continues the run recorded in `log_path` after its last complete
// generation. Records written after that point are discarded first.
// Errors: INCOMPATIBLE_LOG (version or config hash), CORRUPT_LOG.
RunOutcome resume(const RunConfig& cfg, Provider& provider, Evaluator& evaluator, const std::string& paper_text,
                  const std::string& log_path);

struct SuccessMetrics {
    std::size_t children = 0;
    std::size_t successes = 0;
    double success_rate = 0.0;
    std::optional<double> trials_to_first_success;
    std::optional<double> trials_per_success;
};

// Over evaluated children (generation >= 1). Throws Error("NO_CHILDREN").
SuccessMetrics success_metrics(const RunLog& log);
nlohmann::json to_json(const SuccessMetrics& m);

struct GenerationSummary {
    int generation = 0;
    double best_acc = 0.0;
    double params_millions = 0.0;
    double latency_ms = 0.0;
    double conf = 0.0;
    double best_bid = 0.0;
};

struct StepSeries {
    int step = 0;
    int generation = 0;
    double epsilon = 0.0;
    double variance = 0.0;
    double best_bid = 0.0; // best survivor bid after the step's generation
};

struct Report {
    std::vector<GenerationSummary> generations;
    std::vector<StepSeries> steps;
    std::optional<SuccessMetrics> success;
};

Report build_report(const RunLog& log);

// Writes summary.csv, series.csv and success.json into `out_dir`.
void write_report(const Report& r, const std::string& out_dir);

} // namespace archevo
