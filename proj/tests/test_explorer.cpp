#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "archevo/explorer.hpp"
#include "archevo/mock_provider.hpp"
#include "archevo/rng.hpp"

using namespace archevo;
using nlohmann::json;

namespace {

Inspiration insp(const std::string& text, double utility)
{
    auto i = make_inspiration(text, hash_embedding(text), {"axis", 1});
    i.utility = utility;
    return i;
}

ReplayMemory memory_of(const std::vector<std::pair<std::string, double>>& rows)
{
    ReplayMemory m;
    for (const auto& [id, r] : rows) {
        record(m, id, r, "");
    }
    return m;
}

// Always answers the explore prompt with the same proposal.
class FixedProposal : public Provider {
public:
    int calls = 0;
    std::string complete(const ChatRequest&) override
    {
        ++calls;
        return json{{"proposal", "dw_ffn: depthwise conv inside MLP"}}.dump();
    }
};

} // namespace

TEST(RewardVariance, Examples)
{
    EXPECT_EQ(reward_variance({}, 5), 0.0);
    EXPECT_EQ(reward_variance(memory_of({{"a", 1}, {"a", 1}, {"a", 1}}), 5), 0.0);
    EXPECT_EQ(reward_variance(memory_of({{"a", 0}, {"a", 2}}), 2), 1.0);
    EXPECT_EQ(reward_variance(memory_of({{"a", 7}}), 5), 0.0);
    // Window keeps the most recent entries only.
    EXPECT_EQ(reward_variance(memory_of({{"a", 100}, {"a", 0}, {"a", 2}}), 2), 1.0);
}

TEST(Epsilon, Examples)
{
    ControllerConfig cfg;
    EXPECT_EQ(epsilon(0.0, cfg), cfg.eps_max);
    cfg.lambda = 1.0;
    EXPECT_NEAR(epsilon(std::log(2.0), cfg), 0.275, 1e-15);
    EXPECT_NEAR(epsilon(1e6, cfg), cfg.eps_min, 1e-9);
}

TEST(Epsilon, ClosedFormMonotoneBounded)
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        ControllerConfig cfg;
        cfg.eps_min = u(rng) * 0.5;
        cfg.eps_max = cfg.eps_min + u(rng) * (1.0 - cfg.eps_min);
        cfg.lambda = 0.01 + 10 * u(rng);
        const double var = 5 * u(rng);
        const double direct = cfg.eps_min + (cfg.eps_max - cfg.eps_min) * std::exp(-cfg.lambda * var);
        EXPECT_NEAR(epsilon(var, cfg), direct, 1e-12);
        EXPECT_GE(epsilon(var, cfg), cfg.eps_min);
        EXPECT_LE(epsilon(var, cfg), cfg.eps_max);
        EXPECT_LE(epsilon(var + 0.1, cfg), epsilon(var, cfg));
        // Strict once the decrement is above double resolution at eps_min.
        const double drop = (cfg.eps_max - cfg.eps_min) * (std::exp(-cfg.lambda * var) - std::exp(-cfg.lambda * (var + 0.1)));
        if (drop > 1e-15) {
            EXPECT_LT(epsilon(var + 0.1, cfg), epsilon(var, cfg));
        }
    }
}

TEST(ControllerConfig, Checks)
{
    ControllerConfig cfg;
    EXPECT_NO_THROW(cfg.check());
    cfg.eps_min = 0.6;
    EXPECT_THROW(cfg.check(), Error);
}

TEST(QValue, Examples)
{
    EXPECT_EQ(q_value("x", memory_of({{"a", 1}})), 0.0);
    EXPECT_EQ(q_value("a", memory_of({{"a", 1.0}, {"b", 9}, {"a", 3.0}})), 2.0);
    const double parent = 0.9080;
    const double child = 0.9522;
    auto m = memory_of({{"p8515", child - parent}});
    EXPECT_NEAR(m.front().reward, 0.0442, 1e-12);
    EXPECT_EQ(q_value("p8515", m), child - parent);
}

TEST(QValue, FilterAndMeanOracle)
{
    std::mt19937_64 rng(31);
    const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
    for (int t = 0; t < 1000; ++t) {
        ReplayMemory m;
        const int n = static_cast<int>(rng() % 30);
        for (int i = 0; i < n; ++i) {
            record(m, ids[rng() % 4], std::uniform_real_distribution<double>(-0.05, 0.05)(rng), "");
        }
        for (const auto& id : ids) {
            std::vector<double> hits;
            for (const auto& r : m) {
                if (r.inspiration_id == id) {
                    hits.push_back(r.reward);
                }
            }
            double want = 0.0;
            for (double h : hits) {
                want += h;
            }
            want = hits.empty() ? 0.0 : want / static_cast<double>(hits.size());
            EXPECT_DOUBLE_EQ(q_value(id, m), want);
        }
        EXPECT_EQ(q_value("e", m), 0.0);
    }
}

TEST(Record, StepsAreMonotone)
{
    ReplayMemory m;
    record(m, "a", 0.01, "s");
    EXPECT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].step, 0);
    record(m, "b", -0.02, "t");
    EXPECT_EQ(m[1].step, 1);
    EXPECT_EQ(m[1].reward, -0.02);
    EXPECT_THROW(record(m, "a", std::nan(""), ""), Error);
}

TEST(ChooseAction, ExploitSkipsProvider)
{
    FixedProposal p;
    Gateway gw(p, ProviderConfig{});
    const std::vector<Inspiration> cands{insp("se block after norm", 1.0)};
    const auto c = choose_action({}, cands, {}, 0.275, 0.9, &gw, {});
    EXPECT_EQ(c.mode, Mode::exploit);
    EXPECT_EQ(p.calls, 0);
}

TEST(ChooseAction, ExploreCallsProviderOnce)
{
    FixedProposal p;
    Gateway gw(p, ProviderConfig{});
    const std::vector<Inspiration> cands{insp("se block after norm", 1.0)};
    const auto c = choose_action({}, cands, {}, 0.275, 0.0, &gw, {});
    EXPECT_EQ(c.mode, Mode::explore);
    EXPECT_EQ(p.calls, 1);
    EXPECT_TRUE(c.novel);
    EXPECT_EQ(c.inspiration.template_name, "dw_ffn");
}

TEST(ChooseAction, ExploitTieBreakChain)
{
    auto a = insp("alpha dw_ffn", 1.0);
    auto b = insp("beta dw_ffn", 2.0);
    auto m = memory_of({{a.id, 0.02}, {b.id, 0.02}});
    EXPECT_EQ(choose_action({}, {a, b}, m, 0.0, 0.5, nullptr, {}).inspiration.id, b.id);
    EXPECT_EQ(choose_action({}, {b, a}, m, 0.0, 0.5, nullptr, {}).inspiration.id, b.id);
    b.utility = 1.0;
    const auto& smaller = a.id < b.id ? a : b;
    EXPECT_EQ(exploit_choice({a, b}, m).id, smaller.id);
    EXPECT_EQ(exploit_choice({b, a}, m).id, smaller.id);
}

TEST(ChooseAction, ExploitOrderInvariance)
{
    std::mt19937_64 rng(12);
    for (int t = 0; t < 300; ++t) {
        std::vector<Inspiration> cands;
        ReplayMemory m;
        for (int i = 0; i < 6; ++i) {
            cands.push_back(insp("idea " + std::to_string(i), static_cast<double>(rng() % 3)));
            if (rng() % 2) {
                record(m, cands.back().id, static_cast<double>(rng() % 3) / 100.0, "");
            }
        }
        const auto want = exploit_choice(cands, m).id;
        std::shuffle(cands.begin(), cands.end(), rng);
        EXPECT_EQ(exploit_choice(cands, m).id, want);
    }
}

TEST(ChooseAction, UnboundProposalFallsBackToUtility)
{
    MockScript s;
    s.push("reflect", json{{"proposal", "paint the building blue"}});
    MockProvider mock(s);
    Gateway gw(mock, ProviderConfig{});
    const std::vector<Inspiration> cands{insp("se block", 0.5), insp("gating unit", 3.0)};
    const auto c = choose_action({}, cands, {}, 1.0, 0.1, &gw, {});
    EXPECT_EQ(c.mode, Mode::explore);
    EXPECT_EQ(c.inspiration.text, "gating unit");
    EXPECT_FALSE(c.fallback.empty());
}

TEST(ChooseAction, ProviderFailureDegradesToExploit)
{
    MockScript s;
    for (int i = 0; i < 3; ++i) {
        s.push("reflect", "not json");
    }
    MockProvider mock(s);
    Gateway gw(mock, ProviderConfig{});
    const std::vector<Inspiration> cands{insp("se block", 0.5)};
    const auto c = choose_action({}, cands, {}, 1.0, 0.1, &gw, {});
    EXPECT_EQ(c.mode, Mode::exploit);
    EXPECT_EQ(c.fallback, "SCHEMA_VIOLATION");
    EXPECT_TRUE(c.provider_called);
}

TEST(ChooseAction, ExploreRateMatchesEpsilon)
{
    FixedProposal p;
    Gateway gw(p, ProviderConfig{});
    ControllerConfig cfg;
    cfg.lambda = 1.0;
    const double eps = epsilon(std::log(2.0), cfg);
    RunRng rng(77);
    const std::vector<Inspiration> cands{insp("se block", 0.5)};
    int explore = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        if (choose_action({}, cands, {}, eps, rng.uniform(), &gw, {}).mode == Mode::explore) {
            ++explore;
        }
    }
    const double se = std::sqrt(eps * (1 - eps) / n);
    EXPECT_LE(std::abs(explore / static_cast<double>(n) - eps), 3 * se);
    EXPECT_EQ(p.calls, explore);
}

TEST(Summary, TemplateForms)
{
    EXPECT_EQ(template_summary(StepOutcome{4, "dw_ffn", 0.03, ""}), "step 4: dw_ffn → Δacc +0.0300");
    EXPECT_EQ(template_summary(std::nullopt), "step 0: initialization");
    MockProvider mock(MockScript{});
    Gateway gw(mock, ProviderConfig{});
    EXPECT_EQ(reflect_summary({}, StepOutcome{4, "dw_ffn", 0.03, ""}, &gw), "step 4: dw_ffn → Δacc +0.0300");
    EXPECT_EQ(mock.total_calls(), 0u);
}

TEST(Summary, ProviderTextTruncatedTo60Words)
{
    std::string text;
    for (int i = 0; i < 200; ++i) {
        text += "word ";
    }
    MockScript s;
    s.push("summary", json{{"summary", text}});
    MockProvider mock(s);
    Gateway gw(mock, ProviderConfig{});
    EXPECT_EQ(word_count(reflect_summary({}, StepOutcome{1, "x", 0.0, ""}, &gw)), 60u);
}

TEST(ReflectiveState, Bounded)
{
    ReflectiveState s;
    for (int i = 0; i < 25; ++i) {
        s.push("s" + std::to_string(i), i);
    }
    EXPECT_EQ(s.summaries.size(), 10u);
    EXPECT_EQ(s.summaries.front(), "s15");
    EXPECT_EQ(ReflectiveState::from_json(s.to_json()).summaries, s.summaries);
}
