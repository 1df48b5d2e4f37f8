#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "archevo/orchestrator.hpp"
#include "support/run_fixture.hpp"

using namespace archevo;
using nlohmann::json;

namespace {

std::vector<json> of_type(const RunLog& log, const std::string& type)
{
    std::vector<json> out;
    for (const auto& r : log) {
        if (r.at("type") == type) {
            out.push_back(r);
        }
    }
    return out;
}

json child(const std::string& parent, double parent_acc, double acc)
{
    return {{"type", "candidate"}, {"generation", 1},       {"status", "ok"},
            {"parent", parent},    {"parent_acc", parent_acc}, {"eval", {{"acc", acc}}}};
}

std::string error_code(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

} // namespace

TEST(Run, FixtureCompletesQuicklyAndDeterministically)
{
    const auto cfg = gen::fixture_config();
    const auto start = std::chrono::steady_clock::now();
    gen::FixtureRun a(cfg, "det_a.jsonl");
    gen::FixtureRun b(cfg, "det_b.jsonl");
    EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
    EXPECT_TRUE(a.outcome.finished);
    EXPECT_EQ(a.outcome.generations_completed, 3);
    EXPECT_EQ(a.bytes(), b.bytes());
    const auto log = a.records();
    EXPECT_EQ(log.front().at("type"), "header");
    EXPECT_EQ(log.back().at("type"), "end");
    EXPECT_EQ(of_type(log, "step").size(), 15u);
    EXPECT_EQ(of_type(log, "generation").size(), 4u); // base block plus three
}

TEST(Run, SeedChangesTheLog)
{
    auto cfg = gen::fixture_config();
    gen::FixtureRun a(cfg, "seed_a.jsonl");
    cfg.seed = 8;
    gen::FixtureRun b(cfg, "seed_b.jsonl");
    EXPECT_NE(a.bytes(), b.bytes());
}

TEST(Run, ResumeAfterEachGenerationMatchesUninterrupted)
{
    const auto cfg = gen::fixture_config();
    gen::FixtureRun full(cfg, "full.jsonl");
    for (int stop = 0; stop <= 2; ++stop) {
        auto partial_cfg = cfg;
        partial_cfg.stop_after = stop;
        gen::FixtureRun partial(partial_cfg, "partial.jsonl");
        EXPECT_FALSE(partial.outcome.finished);
        EXPECT_EQ(partial.outcome.generations_completed, stop);

        MockProvider provider(MockScript::load(cfg.mock_script));
        SurrogateEvaluator evaluator(cfg.surrogate);
        const auto outcome = resume(cfg, provider, evaluator, gen::slurp(cfg.paper), partial.log_path);
        EXPECT_TRUE(outcome.finished);
        EXPECT_EQ(partial.bytes(), full.bytes()) << "stopped after " << stop;
        EXPECT_EQ(outcome.provider_calls, full.outcome.provider_calls);
        EXPECT_EQ(outcome.evaluator_calls, full.outcome.evaluator_calls);
    }
}

TEST(Run, ResumeDiscardsAPartialGeneration)
{
    const auto cfg = gen::fixture_config();
    gen::FixtureRun full(cfg, "full2.jsonl");
    auto partial_cfg = cfg;
    partial_cfg.stop_after = 1;
    gen::FixtureRun partial(partial_cfg, "partial2.jsonl");
    // Simulate a crash in the middle of generation 2: a few step records made it out.
    const auto lines = full.records();
    std::ofstream out(partial.log_path, std::ios::app);
    std::size_t seen_gen = 0;
    for (const auto& r : lines) {
        if (r.at("type") == "generation") {
            ++seen_gen;
        } else if (seen_gen == 2 && r.at("type") == "step") {
            out << r.dump() << '\n';
        }
    }
    out.close();
    MockProvider provider(MockScript::load(cfg.mock_script));
    SurrogateEvaluator evaluator(cfg.surrogate);
    resume(cfg, provider, evaluator, gen::slurp(cfg.paper), partial.log_path);
    EXPECT_EQ(partial.bytes(), full.bytes());
}

TEST(Run, ResumeErrors)
{
    const auto cfg = gen::fixture_config();
    auto partial_cfg = cfg;
    partial_cfg.stop_after = 2;
    gen::FixtureRun partial(partial_cfg, "broken.jsonl");
    const std::string bytes = partial.bytes();
    const std::string paper = gen::slurp(cfg.paper);
    MockProvider provider(MockScript::load(cfg.mock_script));
    SurrogateEvaluator evaluator(cfg.surrogate);

    std::ofstream(partial.log_path, std::ios::trunc) << bytes.substr(0, bytes.size() - 40);
    EXPECT_EQ(error_code([&] { resume(cfg, provider, evaluator, paper, partial.log_path); }), "CORRUPT_LOG");

    std::ofstream(partial.log_path, std::ios::trunc) << bytes;
    auto other = cfg;
    other.seed = 123;
    EXPECT_EQ(error_code([&] { resume(other, provider, evaluator, paper, partial.log_path); }), "INCOMPATIBLE_LOG");

    std::string old = bytes;
    old.replace(old.find(kRunLogVersion), std::string(kRunLogVersion).size(), "archevo-runlog/0");
    std::ofstream(partial.log_path, std::ios::trunc) << old;
    EXPECT_EQ(error_code([&] { resume(cfg, provider, evaluator, paper, partial.log_path); }), "INCOMPATIBLE_LOG");

    std::ofstream(partial.log_path, std::ios::trunc) << "";
    EXPECT_EQ(error_code([&] { resume(cfg, provider, evaluator, paper, partial.log_path); }), "CORRUPT_LOG");
    EXPECT_EQ(error_code([&] { read_log("/nonexistent/log.jsonl"); }), "IO_ERROR");
}

TEST(Run, GenerationOneSurvivorCarriesDepthwiseConv)
{
    gen::FixtureRun r(gen::fixture_config(), "dw.jsonl");
    const auto log = r.records();
    std::map<std::string, json> graphs;
    for (const auto& c : of_type(log, "candidate")) {
        if (c.at("status") == "ok") {
            graphs[c.at("id")] = c.at("graph");
        }
    }
    const auto gen1 = of_type(log, "generation")[1];
    bool found = false;
    for (const auto& id : gen1.at("survivors")) {
        const auto g = graph_from_json(graphs.at(id.get<std::string>()));
        found |= op_histogram(g).contains("dwconv");
    }
    EXPECT_TRUE(found);
}

TEST(Run, ExplorePromptListsTheWholePool)
{
    auto cfg = gen::fixture_config();
    cfg.shortlist = 2;
    gen::FixtureRun r(cfg, "explore_pool.jsonl");
    const auto log = r.records();
    const auto pool = of_type(log, "consensus")[0].at("inspirations").size();
    ASSERT_GT(pool, static_cast<std::size_t>(cfg.shortlist));

    int explores = 0;
    for (const auto& req : r.provider.requests()) {
        if (req.template_name != "reflect" || req.caller != "explore") {
            continue;
        }
        ++explores;
        const auto& user = req.messages.at(1).content;
        const auto from = user.find("Ideas already on the table:\n");
        ASSERT_NE(from, std::string::npos);
        std::istringstream block(user.substr(from, user.find("\n\n", from) - from));
        std::string line;
        std::getline(block, line);
        std::size_t listed = 0;
        while (std::getline(block, line)) {
            ++listed;
        }
        // novel inspirations from earlier explores only grow the list
        EXPECT_GE(listed, pool);
    }
    EXPECT_GT(explores, 0);
}

TEST(Run, FinalBestBeatsBaseBlock)
{
    gen::FixtureRun r(gen::fixture_config(), "best.jsonl");
    const auto report = build_report(r.records());
    const double base = of_type(r.records(), "candidate").front().at("eval").at("acc").get<double>();
    ASSERT_EQ(report.generations.size(), 3u);
    EXPECT_GT(report.generations.back().best_acc, base);
}

TEST(Run, SingleCandidateWithoutElitismIsAChain)
{
    auto cfg = gen::fixture_config();
    cfg.candidates_per_generation = 1;
    cfg.survival_kappa = 1.0;
    cfg.elitism = false;
    gen::FixtureRun r(cfg, "chain.jsonl");
    const auto cands = of_type(r.records(), "candidate");
    ASSERT_EQ(cands.size(), 4u);
    for (std::size_t i = 1; i < cands.size(); ++i) {
        ASSERT_EQ(cands[i].at("status"), "ok");
        EXPECT_EQ(cands[i].at("parent"), cands[i - 1].at("id"));
    }
    EXPECT_EQ(cands.back().at("lineage").size(), 3u);
}

TEST(Run, LineageIntegrity)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto cfg = gen::fixture_config();
        cfg.seed = seed;
        cfg.refresh_every_generation = seed % 2 == 1;
        gen::FixtureRun r(cfg, "lineage.jsonl");
        std::set<std::string> survivors;
        std::set<std::string> pool;
        for (const auto& rec : r.records()) {
            const auto type = rec.at("type").get<std::string>();
            if (type == "generation") {
                survivors.clear();
                for (const auto& s : rec.at("survivors")) {
                    survivors.insert(s.get<std::string>());
                }
                pool.clear();
                for (const auto& i : rec.at("state").at("pool")) {
                    pool.insert(i.at("id").get<std::string>());
                }
            } else if (type == "consensus") {
                for (const auto& id : rec.at("inspirations")) {
                    pool.insert(id.get<std::string>());
                }
            } else if (type == "step") {
                EXPECT_TRUE(survivors.contains(rec.at("parent").get<std::string>()));
                if (rec.at("novel").get<bool>()) {
                    pool.insert(rec.at("inspiration_id").get<std::string>());
                }
                EXPECT_TRUE(pool.contains(rec.at("inspiration_id").get<std::string>()));
            }
        }
    }
}

TEST(Run, BudgetAccountingMatchesCounters)
{
    gen::FixtureRun r(gen::fixture_config(), "budget.jsonl");
    const auto log = r.records();
    EXPECT_EQ(log.back().at("provider_calls").get<std::uint64_t>(), r.provider.total_calls());
    EXPECT_EQ(log.back().at("evaluator_calls").get<std::uint64_t>(), r.evaluator.calls());
    std::uint64_t explore_calls = 0;
    for (const auto& s : of_type(log, "step")) {
        explore_calls += s.at("provider_called").get<bool>() ? 1 : 0;
    }
    const auto consensus = of_type(log, "consensus").front();
    EXPECT_EQ(r.provider.calls("reflect"), explore_calls);
    EXPECT_EQ(r.provider.calls("expert"), consensus.at("expert_calls").get<std::uint64_t>());
    EXPECT_EQ(r.evaluator.calls(), 16u);
}

// Bids are normalized over each generation's pool, so the comparison is made
// inside one pool: the previous best, re-entered as a parent, is never
// ranked above the new best.
TEST(Run, ElitistBestBidNeverDecreases)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto cfg = gen::fixture_config();
        cfg.seed = seed;
        cfg.survival_kappa = 1.0;
        cfg.elitism = true;
        gen::FixtureRun r(cfg, "elite.jsonl");
        const auto gens = of_type(r.records(), "generation");
        for (std::size_t g = 1; g < gens.size(); ++g) {
            const auto prev_best = gens[g - 1].at("survivors").front().get<std::string>();
            double rescored = -1.0;
            for (const auto& c : gens[g].at("candidates")) {
                if (c.at("id") == prev_best && c.at("role") == "parent") {
                    rescored = c.at("bid").get<double>();
                }
            }
            ASSERT_GE(rescored, 0.0) << "previous best was not re-entered";
            EXPECT_GE(gens[g].at("best_bid").get<double>(), rescored) << "seed " << seed << " generation " << g;
        }
    }
}

TEST(Run, UnusableInspirationsAreRecordedNotFatal)
{
    MockScript s;
    s.push("subtasks", json{{"sub_tasks", {"a", "b"}}});
    for (int i = 0; i < 12; ++i) {
        s.push("expert", json{{"proposal", "something no template knows about"}});
    }
    auto cfg = gen::fixture_config();
    gen::FixtureRun r(cfg, "unbound.jsonl", s);
    EXPECT_TRUE(r.outcome.finished);
    std::size_t failed = 0;
    for (const auto& c : of_type(r.records(), "candidate")) {
        if (c.at("status") == "failed") {
            ++failed;
            EXPECT_EQ(c.at("error").at("code"), "UNBOUND_INSPIRATION");
        }
    }
    EXPECT_EQ(failed, 15u);
    EXPECT_EQ(r.evaluator.calls(), 1u);
}

TEST(Run, ConsensusFailureIsFatal)
{
    MockScript s;
    for (int i = 0; i < 3; ++i) {
        s.push("subtasks", "not json");
    }
    EXPECT_EQ(error_code([&] { gen::FixtureRun r(gen::fixture_config(), "fatal.jsonl", s); }), "CONSENSUS_FAILED");
}

TEST(Report, FixtureShapes)
{
    gen::FixtureRun r(gen::fixture_config(), "report.jsonl");
    const auto log = r.records();
    const auto rep = build_report(log);
    EXPECT_EQ(rep.generations.size(), 3u);
    EXPECT_EQ(rep.steps.size(), of_type(log, "step").size());
    ASSERT_TRUE(rep.success);
    EXPECT_EQ(rep.success->children, 15u);
    const auto dir = gen::temp_path("report_out");
    write_report(rep, dir);
    std::ifstream summary(dir + "/summary.csv");
    std::string line;
    int rows = -1;
    while (std::getline(summary, line)) {
        ++rows;
    }
    EXPECT_EQ(rows, 3);
    EXPECT_TRUE(std::filesystem::exists(dir + "/series.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir + "/success.json"));
}

TEST(SuccessMetrics, TenChildrenFourSuccesses)
{
    RunLog log{{{"type", "header"}}};
    for (int i = 0; i < 10; ++i) {
        log.push_back(child("p" + std::to_string(i % 3), 0.7, i < 4 ? 0.75 : 0.65));
    }
    const auto m = success_metrics(log);
    EXPECT_DOUBLE_EQ(m.success_rate, 0.4);
    EXPECT_DOUBLE_EQ(*m.trials_per_success, 2.5);
}

TEST(SuccessMetrics, FirstSuccessIndex)
{
    RunLog log{child("p", 0.7, 0.6), child("p", 0.7, 0.7), child("p", 0.7, 0.8)};
    EXPECT_EQ(*success_metrics(log).trials_to_first_success, 3.0);
    log.push_back(child("q", 0.5, 0.9));
    EXPECT_EQ(*success_metrics(log).trials_to_first_success, 2.0);
}

TEST(SuccessMetrics, NoSuccessesAndNoChildren)
{
    const auto m = success_metrics({child("p", 0.7, 0.6), child("p", 0.7, 0.5)});
    EXPECT_EQ(m.success_rate, 0.0);
    EXPECT_FALSE(m.trials_per_success);
    EXPECT_FALSE(m.trials_to_first_success);
    EXPECT_EQ(error_code([] { success_metrics({{{"type", "header"}}}); }), "NO_CHILDREN");
}
