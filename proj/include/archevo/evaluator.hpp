#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "archevo/arch_graph.hpp"

namespace archevo {

struct EvaluationResult {
    double acc = 0.0;
    double params_millions = 0.0;
    double gflops = 0.0;
    double latency_ms = 0.0;
    double conf = 0.0;
    std::vector<double> trace; // checkpoint accuracies, last == acc

    friend bool operator==(const EvaluationResult&, const EvaluationResult&) = default;
};

nlohmann::json to_json(const EvaluationResult& r);
// Throws Error("MALFORMED_RESULT") on missing keys or broken invariants.
EvaluationResult evaluation_from_json(const nlohmann::json& j);

using PredictionMatrix = std::vector<std::vector<double>>;

// Mean of row maxima. Throws Error("EMPTY_MATRIX"), Error("INVALID_MATRIX")
// for negative entries or rows not summing to 1 within 1e-6.
double confidence(const PredictionMatrix& p);

struct ParamCount {
    std::uint64_t count = 0;
    double millions = 0.0;
};

// conv: Cin*Cout*k^2/groups, pwconv and linear: Cin*Cout, dwconv: C*k^2,
// bn: 2*C with C the inferred input width (0 when it cannot be inferred).
// Biases are not counted.
ParamCount params_count(const BlockGraph& g);

// Multiply-accumulate based estimate at a fixed spatial size.
double gflops_estimate(const BlockGraph& g, int spatial = 32);

// 0.1 ms per interior node plus 0.5 ms per conv-family node.
double latency_estimate(const BlockGraph& g);

struct SurrogateConfig {
    double base_acc = 0.70;
    double dw_pw_bonus = 0.02;
    double residual_bonus = 0.01;
    int residual_cap = 2;
    double params_budget_m = 1.0;
    double over_budget_penalty = 0.03;
    double noise = 0.01;
    int spatial = 32;
};

// True when some dwconv feeds a pwconv directly.
bool has_dw_pw_chain(const BlockGraph& g);

// Pure function of (structural hash, seed). Throws Error("INVALID_GRAPH")
// with the validation summary.
EvaluationResult surrogate_evaluate(const BlockGraph& g, std::uint64_t seed, const SurrogateConfig& cfg = {});

struct AdapterConfig {
    std::string program;
    std::vector<std::string> extra_args;
    double timeout_s = 600.0;
    int budget_epochs = 1;
};

// Runs `program --graph <p> --out <p> --seed <n> --budget-epochs <n>` and
// reads the result file. Errors: ADAPTER_TIMEOUT, ADAPTER_CRASH (stderr in
// the message), MALFORMED_RESULT, INVALID_CONFIG when no program is set.
EvaluationResult external_evaluate(const BlockGraph& g, std::uint64_t seed, const AdapterConfig& cfg);

class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual EvaluationResult evaluate(const BlockGraph& g, std::uint64_t seed) = 0;
    virtual std::string kind() const = 0;

    std::uint64_t calls() const noexcept { return calls_.load(); }
    void restore_calls(std::uint64_t n) noexcept { calls_ = n; }

protected:
    void count() noexcept { ++calls_; }

private:
    std::atomic<std::uint64_t> calls_{0};
};

class SurrogateEvaluator : public Evaluator {
public:
    explicit SurrogateEvaluator(SurrogateConfig cfg = {}) : cfg_(cfg) {}
    EvaluationResult evaluate(const BlockGraph& g, std::uint64_t seed) override;
    std::string kind() const override { return "surrogate"; }

private:
    SurrogateConfig cfg_;
};

class ExternalEvaluator : public Evaluator {
public:
    explicit ExternalEvaluator(AdapterConfig cfg) : cfg_(std::move(cfg)) {}
    EvaluationResult evaluate(const BlockGraph& g, std::uint64_t seed) override;
    std::string kind() const override { return "external"; }

private:
    AdapterConfig cfg_;
};

struct EvalOutcome {
    std::optional<EvaluationResult> result;
    std::string error_code; // empty on success
    std::string error_message;
};

struct EvalJob {
    const BlockGraph* graph = nullptr;
    std::uint64_t seed = 0;
};

// Evaluates on up to `workers` threads; outcomes come back in job order.
// Failures are captured per job, never thrown.
std::vector<EvalOutcome> evaluate_batch(Evaluator& evaluator, const std::vector<EvalJob>& jobs, int workers);

} // namespace archevo
