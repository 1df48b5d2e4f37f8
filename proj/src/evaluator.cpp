#include "archevo/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "archevo/hashing.hpp"

extern char** environ;

namespace archevo {

using nlohmann::json;
namespace fs = std::filesystem;

json to_json(const EvaluationResult& r)
{
    return {{"acc", r.acc},       {"params_millions", r.params_millions}, {"gflops", r.gflops},
            {"latency_ms", r.latency_ms}, {"conf", r.conf},                       {"trace", r.trace}};
}

EvaluationResult evaluation_from_json(const json& j)
{
    auto fail = [](const std::string& msg) -> EvaluationResult { throw Error("MALFORMED_RESULT", msg); };
    if (!j.is_object()) {
        return fail("result is not an object");
    }
    auto number = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number()) {
            fail(std::string("missing or non-numeric '") + key + "'");
        }
        const double v = j.at(key).get<double>();
        if (!std::isfinite(v)) {
            fail(std::string("'") + key + "' is not finite");
        }
        return v;
    };
    EvaluationResult r;
    r.acc = number("acc");
    r.params_millions = number("params_millions");
    r.gflops = number("gflops");
    r.latency_ms = number("latency_ms");
    r.conf = number("conf");
    if (!j.contains("trace") || !j.at("trace").is_array() || j.at("trace").empty()) {
        return fail("'trace' must be a non-empty list");
    }
    for (const auto& v : j.at("trace")) {
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
            return fail("'trace' holds a non-finite entry");
        }
        r.trace.push_back(v.get<double>());
    }
    if (r.acc < 0.0 || r.acc > 1.0 || r.conf < 0.0 || r.conf > 1.0) {
        return fail("acc and conf must lie in [0, 1]");
    }
    if (r.trace.back() != r.acc) {
        return fail("last trace entry differs from acc");
    }
    return r;
}

double confidence(const PredictionMatrix& p)
{
    if (p.empty()) {
        throw Error("EMPTY_MATRIX", "no prediction rows");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& row = p[i];
        if (row.empty()) {
            throw Error("INVALID_MATRIX", "row " + std::to_string(i) + " is empty");
        }
        double sum = 0.0;
        for (double v : row) {
            if (!(v >= 0.0)) {
                throw Error("INVALID_MATRIX", "row " + std::to_string(i) + " has a negative or NaN entry");
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw Error("INVALID_MATRIX", "row " + std::to_string(i) + " does not sum to 1");
        }
        total += *std::max_element(row.begin(), row.end());
    }
    return total / static_cast<double>(p.size());
}

namespace {

std::uint64_t input_width(const BlockGraph& g, const std::map<NodeId, std::optional<int>>& widths, NodeId id)
{
    const auto preds = g.predecessors(id);
    if (preds.empty()) {
        return 0;
    }
    const auto it = widths.find(preds.front());
    return it != widths.end() && it->second ? static_cast<std::uint64_t>(*it->second) : 0;
}

std::uint64_t node_params(const BlockGraph& g, const OpNode& n, const std::map<NodeId, std::optional<int>>& widths)
{
    const auto in = static_cast<std::uint64_t>(n.attr("in_channels", 0));
    const auto out = static_cast<std::uint64_t>(n.attr("out_channels", 0));
    const auto k = static_cast<std::uint64_t>(n.attr("kernel", 1));
    switch (n.op) {
    case Op::conv:
        return in * out * k * k / static_cast<std::uint64_t>(n.attr("groups", 1));
    case Op::pwconv:
    case Op::linear:
        return in * out;
    case Op::dwconv:
        return in * k * k;
    case Op::bn:
        return 2 * input_width(g, widths, n.id);
    default:
        return 0;
    }
}

} // namespace

ParamCount params_count(const BlockGraph& g)
{
    const auto widths = infer_widths(g);
    ParamCount out;
    for (const auto& n : g.nodes()) {
        out.count += node_params(g, n, widths);
    }
    out.millions = static_cast<double>(out.count) / 1e6;
    return out;
}

double gflops_estimate(const BlockGraph& g, int spatial)
{
    const auto widths = infer_widths(g);
    const double hw = static_cast<double>(spatial) * spatial;
    double macs = 0.0;
    for (const auto& n : g.nodes()) {
        const auto p = static_cast<double>(node_params(g, n, widths));
        macs += is_conv_family(n.op) ? p * hw : p;
    }
    return 2.0 * macs / 1e9;
}

double latency_estimate(const BlockGraph& g)
{
    int nodes = 0;
    int convs = 0;
    for (const auto& n : g.nodes()) {
        if (!is_sentinel(n.op)) {
            ++nodes;
            convs += is_conv_family(n.op) ? 1 : 0;
        }
    }
    return 0.1 * nodes + 0.5 * convs;
}

bool has_dw_pw_chain(const BlockGraph& g)
{
    for (const auto& [a, b] : g.edges()) {
        if (g.node(a).op == Op::dwconv && g.node(b).op == Op::pwconv) {
            return true;
        }
    }
    return false;
}

EvaluationResult surrogate_evaluate(const BlockGraph& g, std::uint64_t seed, const SurrogateConfig& cfg)
{
    const ValidationReport report = validate(g);
    if (!report.ok) {
        throw Error("INVALID_GRAPH", report.summary());
    }
    EvaluationResult r;
    const ParamCount params = params_count(g);
    r.params_millions = params.millions;
    r.gflops = gflops_estimate(g, cfg.spatial);
    r.latency_ms = latency_estimate(g);

    double acc = cfg.base_acc;
    if (has_dw_pw_chain(g)) {
        acc += cfg.dw_pw_bonus;
    }
    const auto hist = op_histogram(g);
    const auto adds = hist.contains("add") ? hist.at("add") : 0;
    acc += cfg.residual_bonus * std::min(adds, cfg.residual_cap);
    if (r.params_millions > cfg.params_budget_m) {
        acc -= cfg.over_budget_penalty;
    }
    const std::uint64_t key = mix_u64(structural_hash(g), seed);
    // Half-open noise interval keeps the bonus ordering strict.
    acc += cfg.noise * (2.0 * unit_from_bits(splitmix64(key)) - 1.0);
    r.acc = std::clamp(acc, 0.0, 1.0);
    r.conf = std::clamp(r.acc + 0.05, 0.0, 1.0);

    constexpr int kPoints = 5;
    for (int i = 0; i < kPoints - 1; ++i) {
        const double remaining = 1.0 - static_cast<double>(i + 1) / kPoints;
        const double jitter = 0.004 * (unit_from_bits(splitmix64(key + 1 + static_cast<std::uint64_t>(i))) - 0.5);
        r.trace.push_back(std::clamp(r.acc * (1.0 - 0.25 * remaining * remaining) + jitter, 0.0, 1.0));
    }
    r.trace.push_back(r.acc);
    return r;
}

namespace {

struct TempDir {
    fs::path path;

    TempDir()
    {
        std::string tmpl = (fs::temp_directory_path() / "archevo-eval-XXXXXX").string();
        if (mkdtemp(tmpl.data()) == nullptr) {
            throw Error("IO_ERROR", "cannot create a temporary directory");
        }
        path = tmpl;
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

EvaluationResult external_evaluate(const BlockGraph& g, std::uint64_t seed, const AdapterConfig& cfg)
{
    if (cfg.program.empty()) {
        throw Error("INVALID_CONFIG", "no adapter program configured");
    }
    TempDir dir;
    const fs::path graph_path = dir.path / "graph.json";
    const fs::path out_path = dir.path / "result.json";
    const fs::path err_path = dir.path / "stderr.txt";
    save_graph(g, graph_path.string());

    std::vector<std::string> args{cfg.program};
    args.insert(args.end(), cfg.extra_args.begin(), cfg.extra_args.end());
    for (const auto& a : {std::string("--graph"), graph_path.string(), std::string("--out"), out_path.string(),
                          std::string("--seed"), std::to_string(seed), std::string("--budget-epochs"),
                          std::to_string(cfg.budget_epochs)}) {
        args.push_back(a);
    }
    std::vector<char*> argv;
    for (auto& a : args) {
        argv.push_back(a.data());
    }
    argv.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, "/dev/null", O_WRONLY, 0);
    posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    pid_t pid = 0;
    const int rc = posix_spawnp(&pid, cfg.program.c_str(), &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) {
        throw Error("ADAPTER_CRASH", "cannot start '" + cfg.program + "': " + std::strerror(rc));
    }

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(cfg.timeout_s);
    int status = 0;
    for (;;) {
        const pid_t done = waitpid(pid, &status, WNOHANG);
        if (done == pid) {
            break;
        }
        if (done < 0) {
            throw Error("ADAPTER_CRASH", "lost track of the adapter process");
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            throw Error("ADAPTER_TIMEOUT", "adapter exceeded " + std::to_string(cfg.timeout_s) + " s");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        const std::string how = WIFEXITED(status) ? "exit status " + std::to_string(WEXITSTATUS(status))
                                                  : "signal " + std::to_string(WTERMSIG(status));
        throw Error("ADAPTER_CRASH", "adapter ended with " + how + "; stderr:\n" + slurp(err_path));
    }
    if (!fs::exists(out_path)) {
        throw Error("MALFORMED_RESULT", "adapter wrote no result file");
    }
    json j;
    try {
        j = json::parse(slurp(out_path));
    } catch (const json::exception& e) {
        throw Error("MALFORMED_RESULT", e.what());
    }
    return evaluation_from_json(j);
}

EvaluationResult SurrogateEvaluator::evaluate(const BlockGraph& g, std::uint64_t seed)
{
    count();
    return surrogate_evaluate(g, seed, cfg_);
}

EvaluationResult ExternalEvaluator::evaluate(const BlockGraph& g, std::uint64_t seed)
{
    count();
    return external_evaluate(g, seed, cfg_);
}

std::vector<EvalOutcome> evaluate_batch(Evaluator& evaluator, const std::vector<EvalJob>& jobs, int workers)
{
    std::vector<EvalOutcome> out(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                out[i].result = evaluator.evaluate(*jobs[i].graph, jobs[i].seed);
            } catch (const Error& e) {
                out[i].error_code = e.code();
                out[i].error_message = e.what();
            } catch (const std::exception& e) {
                out[i].error_code = "EVALUATION_FAILED";
                out[i].error_message = e.what();
            }
        }
    };
    const auto n = static_cast<std::size_t>(std::clamp<int>(workers, 1, 64));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::min(n, jobs.size()); ++t) {
        pool.emplace_back(work);
    }
    work();
    for (auto& t : pool) {
        t.join();
    }
    return out;
}

} // namespace archevo
