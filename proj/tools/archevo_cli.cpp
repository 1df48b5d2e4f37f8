// archevo command-line front end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "archevo/arch_graph.hpp"
#include "archevo/http_provider.hpp"
#include "archevo/mock_provider.hpp"
#include "archevo/orchestrator.hpp"
#include "archevo/struct_div.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kConsensus = 3, kIo = 4 };

int exit_code_for(const std::string& code)
{
    if (code == "INVALID_CONFIG" || code == "INCOMPATIBLE_LOG") {
        return kConfig;
    }
    if (code == "CONSENSUS_FAILED") {
        return kConsensus;
    }
    if (code == "IO_ERROR" || code == "CORRUPT_LOG" || code == "PARSE_ERROR") {
        return kIo;
    }
    return kFailure;
}

std::string read_text(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw archevo::Error("IO_ERROR", "cannot read '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& resume_log,
            const std::string& log_path, std::optional<int> stop_after)
{
    archevo::RunConfig cfg = archevo::load_config(config_path);
    if (seed) {
        cfg.seed = *seed;
    }
    if (stop_after) {
        cfg.stop_after = stop_after;
    }
    cfg.check();
    const std::string paper = read_text(cfg.paper);

    std::unique_ptr<archevo::Provider> provider;
    if (cfg.provider_kind == "mock") {
        provider = std::make_unique<archevo::MockProvider>(archevo::MockScript::load(cfg.mock_script));
    } else {
        provider = std::make_unique<archevo::HttpProvider>(cfg.provider);
    }
    std::unique_ptr<archevo::Evaluator> evaluator;
    if (cfg.evaluator_kind == "surrogate") {
        evaluator = std::make_unique<archevo::SurrogateEvaluator>(cfg.surrogate);
    } else {
        evaluator = std::make_unique<archevo::ExternalEvaluator>(cfg.adapter);
    }

    const auto outcome = resume_log.empty() ? archevo::run(cfg, *provider, *evaluator, paper, log_path)
                                            : archevo::resume(cfg, *provider, *evaluator, paper, resume_log);
    std::printf("generations completed: %d%s\nprovider calls: %llu\nevaluator calls: %llu\nlog: %s\n",
                outcome.generations_completed, outcome.finished ? "" : " (stopped early)",
                static_cast<unsigned long long>(outcome.provider_calls),
                static_cast<unsigned long long>(outcome.evaluator_calls),
                (resume_log.empty() ? log_path : resume_log).c_str());
    return kOk;
}

int cmd_report(const std::string& log_path, const std::string& out_dir)
{
    const auto report = archevo::build_report(archevo::read_log(log_path));
    archevo::write_report(report, out_dir);
    std::printf("%-10s %-9s %-10s %-10s %-7s %-8s\n", "generation", "best_acc", "params_M", "latency_ms", "conf",
                "best_bid");
    for (const auto& g : report.generations) {
        std::printf("%-10d %-9.4f %-10.4f %-10.2f %-7.4f %-8.4f\n", g.generation, g.best_acc, g.params_millions,
                    g.latency_ms, g.conf, g.best_bid);
    }
    if (report.success) {
        std::printf("success rate: %.2f (%zu of %zu)\n", report.success->success_rate, report.success->successes,
                    report.success->children);
    }
    std::printf("report written to %s\n", out_dir.c_str());
    return kOk;
}

int cmd_validate(const std::string& path)
{
    const auto report = archevo::validate(archevo::load_graph(path));
    if (report.ok) {
        std::printf("ok\n");
        return kOk;
    }
    std::printf("%s\n", report.summary().c_str());
    return kFailure;
}

int cmd_diversity(const std::string& a, const std::string& b)
{
    const auto ga = archevo::load_graph(a);
    const auto gb = archevo::load_graph(b);
    const auto s = archevo::similarity_breakdown(ga, gb);
    std::printf("s_op %.6f\ns_depth %.6f\ns_wl %.6f\nsimilarity %.6f\ndiversity %.6f\n", s.s_op, s.s_depth, s.s_wl,
                s.similarity, s.diversity);
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"archevo: evolutionary block search"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string resume_log;
    std::string log_path = "run.jsonl";
    std::optional<int> stop_after;
    auto* run = app.add_subcommand("run", "run or resume a search");
    run->add_option("--config", config_path, "INI configuration")->required();
    run->add_option("--seed", seed, "override the configured seed");
    run->add_option("--resume", resume_log, "continue the run recorded in this log");
    run->add_option("--log", log_path, "where a fresh run writes its log");
    run->add_option("--stop-after", stop_after, "stop after this generation");

    std::string report_log;
    std::string out_dir;
    auto* report = app.add_subcommand("report", "summarize a run log");
    report->add_option("log", report_log)->required();
    report->add_option("--out", out_dir)->required();

    std::string graph_path;
    auto* validate = app.add_subcommand("validate-graph", "check a graph file");
    validate->add_option("path", graph_path)->required();

    std::string graph_a;
    std::string graph_b;
    auto* diversity = app.add_subcommand("diversity", "structural diversity of two graphs");
    diversity->add_option("graphA", graph_a)->required();
    diversity->add_option("graphB", graph_b)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*run) {
            return cmd_run(config_path, seed, resume_log, log_path, stop_after);
        }
        if (*report) {
            return cmd_report(report_log, out_dir);
        }
        if (*validate) {
            return cmd_validate(graph_path);
        }
        return cmd_diversity(graph_a, graph_b);
    } catch (const archevo::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kFailure;
    }
}
