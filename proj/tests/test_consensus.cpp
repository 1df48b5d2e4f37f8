#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "archevo/consensus.hpp"
#include "archevo/mock_provider.hpp"
#include "support/scripts.hpp"

using namespace archevo;
using nlohmann::json;

namespace {

Inspiration insp(const std::string& text, double utility = 0.0, const std::string& axis = "a")
{
    auto i = make_inspiration(text, hash_embedding(text), {axis, 1});
    i.utility = utility;
    return i;
}

// Unit vector in the plane of e0/e1 at the given angle, so pairwise cosine
// distances are chosen exactly.
Inspiration at_angle(const std::string& name, double angle)
{
    auto i = insp(name);
    i.embedding.assign(kEmbeddingDim, 0.0);
    i.embedding[0] = std::cos(angle);
    i.embedding[1] = std::sin(angle);
    return i;
}

const std::string kPaper = "Blocks mix channels. Depthwise filters are cheap. Gates help.";

} // namespace

TEST(Subaxes, TwoAxesTwoExperts)
{
    MockScript s;
    s.push("subtasks", json{{"tasks", {"detection"}}, {"sub_tasks", {"a", "b"}}, {"keywords", {"se"}}});
    MockProvider mock(s);
    Gateway gw(mock, {});
    const auto axes = extract_subaxes(kPaper, gw);
    ASSERT_EQ(axes.size(), 2u);
    EXPECT_EQ(axes[1].name, "b");
    EXPECT_EQ(axes[1].keywords, std::vector<std::string>{"se"});
}

TEST(Subaxes, SixTruncatedToFourWithWarning)
{
    MockScript s;
    s.push("subtasks", json{{"sub_tasks", {"a", "b", "c", "d", "e", "f"}},
                            {"keywords", {"k1", "k2", "k3", "k4", "k5", "k6"}}});
    MockProvider mock(s);
    Gateway gw(mock, {});
    std::vector<std::string> warnings;
    const auto axes = extract_subaxes(kPaper, gw, &warnings);
    EXPECT_EQ(axes.size(), 4u);
    EXPECT_EQ(axes[0].keywords.size(), 5u);
    EXPECT_EQ(warnings.size(), 2u);
}

TEST(Subaxes, MalformedThriceIsSchemaViolation)
{
    MockScript s;
    for (int i = 0; i < 3; ++i) {
        s.push("subtasks", "{oops");
    }
    MockProvider mock(s);
    Gateway gw(mock, {});
    try {
        extract_subaxes(kPaper, gw);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "SCHEMA_VIOLATION");
    }
}

TEST(Expert, ScriptedProposalBindsTemplate)
{
    MockScript s;
    s.push("expert", json{{"proposal", "dw_ffn: depthwise conv inside MLP"}});
    MockProvider mock(s);
    Gateway gw(mock, {});
    const auto p = expert_propose({"mixing", {}}, "[1] x.", {}, gw, 1);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->text, "dw_ffn: depthwise conv inside MLP");
    EXPECT_EQ(p->template_name, "dw_ffn");
    EXPECT_TRUE(p->evidence_refs.empty());
    EXPECT_EQ(p->origin.subaxis, "mixing");
}

TEST(Expert, LongProposalTruncatedBeforeHashing)
{
    std::string text;
    for (int i = 0; i < 55; ++i) {
        text += "w" + std::to_string(i) + " ";
    }
    MockScript s;
    s.push("expert", json{{"proposal", text}});
    MockProvider mock(s);
    Gateway gw(mock, {});
    std::vector<std::string> warnings;
    const auto p = expert_propose({"mixing", {}}, "[1] x.", {}, gw, 1, &warnings);
    ASSERT_TRUE(p);
    EXPECT_EQ(word_count(p->text), 40u);
    EXPECT_EQ(p->id, inspiration_id(truncate_words(text, 40)));
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(Expert, FailureContributesNothing)
{
    MockScript s;
    for (int i = 0; i < 3; ++i) {
        s.push("expert", "nope");
    }
    MockProvider mock(s);
    Gateway gw(mock, {});
    EXPECT_FALSE(expert_propose({"mixing", {}}, "[1] x.", {}, gw, 1));
}

TEST(Merge, LocalSemantics)
{
    EXPECT_EQ(merge({insp("same idea"), insp("Same   IDEA")}, nullptr, 1).size(), 1u);
    std::vector<Inspiration> six;
    for (int i = 0; i < 6; ++i) {
        six.push_back(insp("idea " + std::to_string(i)));
    }
    const auto m = merge(six, nullptr, 1);
    ASSERT_EQ(m.size(), 4u);
    EXPECT_EQ(m[3].text, "idea 3");
    EXPECT_TRUE(merge({}, nullptr, 1).empty());
}

TEST(Merge, ProviderMergeAndFallback)
{
    MockScript s;
    s.push("merge", json{{"inspirations", {"idea 1", "combined idea", "combined idea"}}});
    for (int i = 0; i < 3; ++i) {
        s.push("merge", "bad");
    }
    MockProvider mock(s);
    Gateway gw(mock, {});
    const auto m = merge({insp("idea 0", 0, "x"), insp("idea 1", 0, "y")}, &gw, 2);
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[0].origin.subaxis, "y");
    EXPECT_EQ(m[1].origin.subaxis, "merged");
    const auto f = merge({insp("idea 0"), insp("idea 1")}, &gw, 3);
    EXPECT_EQ(f.size(), 2u);
}

TEST(Jaccard, Examples)
{
    const auto a = insp("a");
    const auto b = insp("b");
    const auto c = insp("c");
    const auto d = insp("d");
    EXPECT_EQ(jaccard({a, b}, {b, a}), 1.0);
    EXPECT_EQ(jaccard({a}, {b}), 0.0);
    EXPECT_EQ(jaccard({a, b, c}, {b, c, d}), 0.5);
    EXPECT_EQ(jaccard({}, {}), 1.0);
    EXPECT_EQ(jaccard({a, b}, {c}), jaccard({c}, {a, b}));
}

TEST(MeanQuality, Examples)
{
    const auto a = insp("a");
    const auto b = insp("b");
    ReplayMemory m;
    EXPECT_EQ(mean_quality({a, b}, m), 0.0);
    record(m, a.id, 0.01, "");
    record(m, b.id, 0.03, "");
    EXPECT_NEAR(mean_quality({a, b}, m), 0.02, 1e-15);
    EXPECT_EQ(mean_quality({a}, m), 0.01);
    EXPECT_THROW(mean_quality({}, m), Error);
}

TEST(Redundancy, Examples)
{
    EXPECT_EQ(redundancy_filter({insp("x y"), insp("x y")}, 0.1).size(), 1u);
    EXPECT_EQ(redundancy_filter({insp("x y"), insp("x y")}, 0.0).size(), 2u);
    // d(0,1) = 0.05, d(0,2) = d(1,2) ~ 0.5.
    const double a1 = std::acos(0.95);
    const auto kept = redundancy_filter({at_angle("p0", 0.0), at_angle("p1", a1), at_angle("p2", a1 + std::acos(0.5))}, 0.1);
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0].text, "p0");
    EXPECT_EQ(kept[1].text, "p2");
}

TEST(Redundancy, GreedyProperty)
{
    std::mt19937_64 rng(6);
    for (int t = 0; t < 200; ++t) {
        std::vector<Inspiration> items;
        for (int i = 0; i < 10; ++i) {
            items.push_back(at_angle("p" + std::to_string(i), std::uniform_real_distribution<double>(0, 3.14)(rng)));
        }
        const double delta = std::uniform_real_distribution<double>(0, 0.5)(rng);
        const auto kept = redundancy_filter(items, delta);
        for (std::size_t i = 0; i < kept.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                double dot = 0;
                for (int k = 0; k < 2; ++k) {
                    dot += kept[i].embedding[k] * kept[j].embedding[k];
                }
                EXPECT_GE(1 - dot, delta);
            }
        }
        EXPECT_EQ(kept.front().text, "p0");
    }
}

TEST(RunConsensus, StableScriptStopsAtTmin)
{
    MockProvider mock(gen::stable_script(6));
    Gateway gw(mock, {});
    const auto r = run_consensus(kPaper, gw, {}, ConsensusConfig{});
    EXPECT_EQ(r.rounds, 2);
    EXPECT_EQ(r.expert_calls, 2u * 3u);
    EXPECT_EQ(mock.calls("expert"), 6u);
    EXPECT_EQ(r.transcript[1].jaccard, 1.0);
    EXPECT_EQ(r.transcript[1].delta_mu, 0.0);
    EXPECT_TRUE(r.transcript[1].converged);
    EXPECT_FALSE(r.transcript[0].converged);
    EXPECT_EQ(r.inspirations.size(), 3u);
}

TEST(RunConsensus, DriftingScriptRunsToTmax)
{
    MockProvider mock(gen::drifting_script(6));
    Gateway gw(mock, {});
    const auto r = run_consensus(kPaper, gw, {}, ConsensusConfig{});
    EXPECT_EQ(r.rounds, 6);
    EXPECT_EQ(r.expert_calls, 18u);
    EXPECT_EQ(mock.calls("expert"), 18u);
    EXPECT_EQ(r.inspirations.front().origin.round, 6);
}

TEST(RunConsensus, SingleRoundBound)
{
    ConsensusConfig cfg;
    cfg.t_min = 1;
    cfg.t_max = 1;
    MockProvider mock(gen::drifting_script(1));
    Gateway gw(mock, {});
    EXPECT_EQ(run_consensus(kPaper, gw, {}, cfg).rounds, 1);
}

TEST(RunConsensus, CallBudgetWithProviderMerge)
{
    auto s = gen::drifting_script(4);
    for (int i = 0; i < 4; ++i) {
        s.push("merge", json{{"inspirations", {"merged r" + std::to_string(i)}}});
    }
    ConsensusConfig cfg;
    cfg.t_max = 4;
    MockProvider mock(s);
    Gateway gw(mock, {});
    const auto r = run_consensus(kPaper, gw, {}, cfg);
    EXPECT_EQ(r.rounds, 4);
    EXPECT_LE(mock.calls("expert"), static_cast<std::uint64_t>(cfg.t_max) * 3);
    EXPECT_LE(mock.calls("merge"), static_cast<std::uint64_t>(cfg.t_max));
    EXPECT_EQ(r.merge_calls, 4u);
}

TEST(RunConsensus, TerminatesWhenEveryExpertFails)
{
    MockScript s;
    s.push("subtasks", json{{"sub_tasks", {"a", "b"}}});
    for (int i = 0; i < 6 * 2 * 3; ++i) {
        s.push("expert", "garbage");
    }
    MockProvider mock(s);
    Gateway gw(mock, {});
    const auto r = run_consensus(kPaper, gw, {}, ConsensusConfig{});
    // Empty sets are stable, so the run stops at t_min.
    EXPECT_EQ(r.rounds, 2);
    EXPECT_TRUE(r.inspirations.empty());
}

TEST(Utility, Examples)
{
    std::vector<Inspiration> pool{insp("a", 2.0)};
    update_utility(pool, {}, 1.0, 10.0);
    EXPECT_EQ(pool[0].utility, 2.0);
    update_utility(pool, {{{pool[0].id}, 0.04}}, 0.5, 10.0);
    EXPECT_NEAR(pool[0].utility, 1.4, 1e-15);
    std::vector<Inspiration> many{insp("a", 1.0), insp("b", -2.0)};
    update_utility(many, {}, 0.9, 10.0);
    EXPECT_NEAR(many[0].utility, 0.9, 1e-15);
    EXPECT_NEAR(many[1].utility, -1.8, 1e-15);
}

TEST(Aging, KeepsLastOfEachAxis)
{
    std::mt19937_64 rng(44);
    for (int t = 0; t < 200; ++t) {
        std::vector<Inspiration> pool;
        for (int i = 0; i < 8; ++i) {
            pool.push_back(insp("idea " + std::to_string(i), (rng() % 2) * 0.005, "axis" + std::to_string(rng() % 3)));
        }
        std::set<std::string> axes;
        for (auto& i : pool) {
            axes.insert(i.origin.subaxis);
        }
        for (int g = 0; g < 5; ++g) {
            age_pool(pool, {});
        }
        std::set<std::string> after;
        for (auto& i : pool) {
            after.insert(i.origin.subaxis);
        }
        EXPECT_EQ(axes, after);
    }
}

TEST(Aging, DropsOnlyAfterThreeUncreditedGenerations)
{
    std::vector<Inspiration> pool{insp("low", 0.0, "a"), insp("other", 5.0, "a")};
    EXPECT_TRUE(age_pool(pool, {}).empty());
    EXPECT_TRUE(age_pool(pool, {}).empty());
    EXPECT_EQ(age_pool(pool, {}).size(), 1u);
    EXPECT_EQ(pool.size(), 1u);
    EXPECT_EQ(pool[0].text, "other");
}

TEST(Retrieval, Probabilities)
{
    const auto p = retrieval_probabilities({insp("a", 0.0), insp("b", std::log(3.0))}, 1.0);
    EXPECT_NEAR(p[0], 0.25, 1e-15);
    EXPECT_NEAR(p[1], 0.75, 1e-15);
    const auto cold = retrieval_probabilities({insp("a", 0.0), insp("b", 1.0)}, 1e-4);
    EXPECT_EQ(cold[1], 1.0);
}

TEST(Retrieval, UniformChiSquare)
{
    std::vector<Inspiration> pool;
    for (int i = 0; i < 5; ++i) {
        pool.push_back(insp("idea " + std::to_string(i), 0.7));
    }
    RunRng rng(5);
    std::vector<int> counts(5, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        ++counts[retrieval_sample(pool, 1.0, rng)];
    }
    double chi = 0;
    for (int c : counts) {
        chi += (c - n / 5.0) * (c - n / 5.0) / (n / 5.0);
    }
    EXPECT_LT(chi, 18.47); // 4 dof, p = 0.001
    EXPECT_EQ(rng.draws(), static_cast<std::uint64_t>(n));
}

TEST(Retrieval, DeterministicAndEmptyPool)
{
    std::vector<Inspiration> pool{insp("a", 0.1), insp("b", 0.5), insp("c", 0.2)};
    RunRng r1(9);
    RunRng r2(9);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(retrieval_sample(pool, 0.5, r1), retrieval_sample(pool, 0.5, r2));
    }
    RunRng r3(1);
    EXPECT_THROW(retrieval_sample({}, 1.0, r3), Error);
}
