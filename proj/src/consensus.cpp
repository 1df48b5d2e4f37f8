#include "archevo/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace archevo {

using nlohmann::json;

namespace {

void warn(std::vector<std::string>* sink, const std::string& message)
{
    if (sink != nullptr) {
        sink->push_back(message);
    }
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b)
{
    double dot = 0.0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
        dot += a[i] * b[i];
    }
    return 1.0 - dot;
}

} // namespace

void ConsensusConfig::check() const
{
    if (!(0.0 <= tau_j && tau_j <= 1.0) || !(tau_q >= 0.0)) {
        throw Error("INVALID_CONFIG", "tau_j must lie in [0,1] and tau_q must be >= 0");
    }
    if (t_min < 1 || t_min > t_max) {
        throw Error("INVALID_CONFIG", "need 1 <= t_min <= t_max");
    }
    if (!(0.0 <= delta && delta <= 2.0)) {
        throw Error("INVALID_CONFIG", "delta must lie in [0,2]");
    }
}

std::vector<SubAxis> extract_subaxes(const std::string& paper_text, Gateway& gateway,
                                     std::vector<std::string>* warnings)
{
    if (paper_text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw Error("EMPTY_PAPER", "paper text is empty");
    }
    const json reply = gateway.call_json("subtasks", {{"paper_numbered", number_sentences(paper_text)}});
    auto names = reply.at("sub_tasks").get<std::vector<std::string>>();
    std::vector<std::string> keywords;
    if (reply.contains("keywords") && !reply.at("keywords").is_null()) {
        keywords = reply.at("keywords").get<std::vector<std::string>>();
    }
    if (names.size() > kMaxSubAxes) {
        warn(warnings, "sub_tasks had " + std::to_string(names.size()) + " entries; kept the first 4");
        names.resize(kMaxSubAxes);
    }
    if (keywords.size() > kMaxKeywords) {
        warn(warnings, "keywords had " + std::to_string(keywords.size()) + " entries; kept the first 5");
        keywords.resize(kMaxKeywords);
    }
    std::vector<SubAxis> axes;
    for (auto& n : names) {
        axes.push_back({std::move(n), keywords});
    }
    return axes;
}

std::string format_inspirations(const std::vector<Inspiration>& items)
{
    if (items.empty()) {
        return "(none)";
    }
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += std::to_string(i + 1) + ". " + items[i].text + "\n";
    }
    out.pop_back();
    return out;
}

std::optional<Inspiration> expert_propose(const SubAxis& axis, const std::string& paper_numbered,
                                          const std::vector<Inspiration>& current, Gateway& gateway, int round,
                                          std::vector<std::string>* warnings)
{
    std::string field = axis.name;
    if (!axis.keywords.empty()) {
        field += " (related motifs:";
        for (const auto& k : axis.keywords) {
            field += " " + k + (&k == &axis.keywords.back() ? ")" : ",");
        }
    }
    json reply;
    try {
        reply = gateway.call_json(
            "expert", {{"field", field}, {"paper_numbered", paper_numbered}, {"current_insp", format_inspirations(current)}},
            axis.name);
    } catch (const Error& e) {
        if (!is_provider_failure(e.code())) {
            throw;
        }
        warn(warnings, "expert \"" + axis.name + "\" contributed nothing: " + e.code());
        return std::nullopt;
    }
    bool cut = false;
    std::string text = truncate_words(reply.at("proposal").get<std::string>(), kMaxInspirationWords, &cut);
    if (cut) {
        warn(warnings, "expert \"" + axis.name + "\" proposal truncated to 40 words");
    }
    std::vector<int> refs;
    if (reply.contains("evidence_refs") && !reply.at("evidence_refs").is_null()) {
        refs = reply.at("evidence_refs").get<std::vector<int>>();
    }
    return make_inspiration(text, gateway.embed(text), {axis.name, round}, std::move(refs));
}

std::vector<Inspiration> local_merge(const std::vector<Inspiration>& proposals)
{
    std::vector<Inspiration> out;
    for (const auto& p : proposals) {
        if (out.size() == kMaxMerged) {
            break;
        }
        if (std::none_of(out.begin(), out.end(), [&](const auto& o) { return o.id == p.id; })) {
            out.push_back(p);
        }
    }
    return out;
}

std::vector<Inspiration> merge(const std::vector<Inspiration>& proposals, Gateway* gateway, int round,
                               std::vector<std::string>* warnings)
{
    if (proposals.empty()) {
        return {};
    }
    if (gateway == nullptr || !gateway->supports("merge", "")) {
        return local_merge(proposals);
    }
    json items = json::array();
    for (const auto& p : proposals) {
        items.push_back({{"field", p.origin.subaxis}, {"proposal", p.text}, {"evidence_refs", p.evidence_refs}});
    }
    json reply;
    try {
        reply = gateway->call_json("merge", {{"proposals", items.dump(2)}});
    } catch (const Error& e) {
        if (!is_provider_failure(e.code())) {
            throw;
        }
        warn(warnings, "merge reply unusable (" + e.code() + "); used local merge");
        return local_merge(proposals);
    }
    std::vector<Inspiration> out;
    for (const auto& raw : reply.at("inspirations")) {
        if (out.size() == kMaxMerged) {
            warn(warnings, "merge returned more than 4 items; kept the first 4");
            break;
        }
        bool cut = false;
        std::string text = truncate_words(raw.get<std::string>(), kMaxInspirationWords, &cut);
        if (text.empty()) {
            continue;
        }
        if (cut) {
            warn(warnings, "merged item truncated to 40 words");
        }
        const std::string id = inspiration_id(text);
        if (std::any_of(out.begin(), out.end(), [&](const auto& o) { return o.id == id; })) {
            continue;
        }
        auto source = std::find_if(proposals.begin(), proposals.end(), [&](const auto& p) { return p.id == id; });
        if (source != proposals.end()) {
            out.push_back(*source);
        } else {
            out.push_back(make_inspiration(text, gateway->embed(text), {"merged", round}));
        }
    }
    return out;
}

double jaccard(const std::vector<Inspiration>& a, const std::vector<Inspiration>& b)
{
    std::set<std::string> sa;
    std::set<std::string> sb;
    for (const auto& i : a) {
        sa.insert(i.id);
    }
    for (const auto& i : b) {
        sb.insert(i.id);
    }
    if (sa.empty() && sb.empty()) {
        return 1.0;
    }
    std::size_t common = 0;
    for (const auto& id : sa) {
        common += sb.count(id);
    }
    return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

double mean_quality(const std::vector<Inspiration>& s, const ReplayMemory& memory)
{
    if (s.empty()) {
        throw Error("EMPTY_SET", "mean quality of an empty set is undefined");
    }
    double sum = 0.0;
    for (const auto& i : s) {
        sum += q_value(i.id, memory);
    }
    return sum / static_cast<double>(s.size());
}

std::vector<Inspiration> redundancy_filter(const std::vector<Inspiration>& proposals, double delta)
{
    std::vector<Inspiration> kept;
    for (const auto& p : proposals) {
        const bool far = std::all_of(kept.begin(), kept.end(),
                                     [&](const auto& k) { return cosine_distance(p.embedding, k.embedding) >= delta; });
        if (far) {
            kept.push_back(p);
        }
    }
    return kept;
}

ConsensusResult run_consensus(const std::string& paper_text, Gateway& gateway, const ReplayMemory& memory,
                              const ConsensusConfig& cfg)
{
    cfg.check();
    std::vector<std::string> warnings;
    auto axes = extract_subaxes(paper_text, gateway, &warnings);
    auto out = run_consensus(axes, paper_text, gateway, memory, cfg);
    out.warnings.insert(out.warnings.begin(), warnings.begin(), warnings.end());
    return out;
}

ConsensusResult run_consensus(const std::vector<SubAxis>& axes, const std::string& paper_text, Gateway& gateway,
                              const ReplayMemory& memory, const ConsensusConfig& cfg)
{
    cfg.check();
    ConsensusResult out;
    out.axes = axes;
    const std::string numbered = number_sentences(paper_text);

    std::vector<Inspiration> prev;
    double mu_prev = 0.0;
    for (int t = 1; t <= cfg.t_max; ++t) {
        RoundRecord rec;
        rec.round = t;
        std::vector<std::function<std::optional<Inspiration>()>> jobs;
        std::vector<std::vector<std::string>> job_notes(out.axes.size());
        for (std::size_t k = 0; k < out.axes.size(); ++k) {
            jobs.push_back([&, k] { return expert_propose(out.axes[k], numbered, prev, gateway, t, &job_notes[k]); });
        }
        const auto results = gateway.dispatch(jobs);
        out.expert_calls += jobs.size();
        std::vector<Inspiration> proposals;
        for (std::size_t k = 0; k < results.size(); ++k) {
            rec.notes.insert(rec.notes.end(), job_notes[k].begin(), job_notes[k].end());
            if (results[k]) {
                rec.proposals.push_back(results[k]->text);
                proposals.push_back(*results[k]);
            }
        }
        const auto filtered = redundancy_filter(proposals, cfg.delta);
        if (filtered.size() < proposals.size()) {
            rec.notes.push_back("redundancy filter dropped " + std::to_string(proposals.size() - filtered.size()));
        }
        if (!filtered.empty() && gateway.supports("merge", "")) {
            ++out.merge_calls;
        }
        auto current = merge(filtered, &gateway, t, &rec.notes);
        for (const auto& i : current) {
            rec.merged.push_back(i.text);
        }
        rec.jaccard = jaccard(current, prev);
        const double mu = current.empty() ? 0.0 : mean_quality(current, memory);
        rec.mean_quality = mu;
        rec.delta_mu = std::abs(mu - mu_prev) / (std::abs(mu_prev) + kQualityGuard);
        rec.converged = rec.jaccard >= cfg.tau_j && rec.delta_mu <= cfg.tau_q && t >= cfg.t_min;
        out.transcript.push_back(rec);
        out.rounds = t;
        prev = std::move(current);
        mu_prev = mu;
        if (rec.converged) {
            break;
        }
    }
    out.inspirations = std::move(prev);
    for (const auto& r : out.transcript) {
        out.warnings.insert(out.warnings.end(), r.notes.begin(), r.notes.end());
    }
    return out;
}

void update_utility(std::vector<Inspiration>& pool, const std::vector<CreditShare>& survivors, double gamma,
                    double credit_kappa)
{
    for (auto& i : pool) {
        double credit = 0.0;
        for (const auto& s : survivors) {
            if (std::find(s.lineage.begin(), s.lineage.end(), i.id) != s.lineage.end()) {
                credit += s.reward;
            }
        }
        i.utility = gamma * i.utility + credit_kappa * credit;
    }
}

std::vector<std::string> age_pool(std::vector<Inspiration>& pool, const std::set<std::string>& credited)
{
    std::map<std::string, int> per_axis;
    for (auto& i : pool) {
        i.zero_credit_generations = credited.count(i.id) ? 0 : i.zero_credit_generations + 1;
        ++per_axis[i.origin.subaxis];
    }
    std::vector<std::string> removed;
    std::vector<Inspiration> kept;
    for (auto& i : pool) {
        const bool stale = i.utility < kAgingFloor && i.zero_credit_generations >= kAgingGenerations;
        if (stale && per_axis[i.origin.subaxis] > 1) {
            --per_axis[i.origin.subaxis];
            removed.push_back(i.id);
        } else {
            kept.push_back(std::move(i));
        }
    }
    pool = std::move(kept);
    return removed;
}

std::vector<double> retrieval_probabilities(const std::vector<Inspiration>& pool, double temperature)
{
    if (pool.empty()) {
        throw Error("EMPTY_POOL", "cannot sample from an empty pool");
    }
    if (!(temperature > 0.0)) {
        throw Error("INVALID_CONFIG", "temperature must be positive");
    }
    double top = pool.front().utility;
    for (const auto& i : pool) {
        top = std::max(top, i.utility);
    }
    std::vector<double> w;
    double sum = 0.0;
    for (const auto& i : pool) {
        w.push_back(std::exp((i.utility - top) / temperature));
        sum += w.back();
    }
    for (double& x : w) {
        x /= sum;
    }
    return w;
}

std::size_t sample_index(const std::vector<double>& weights, double draw)
{
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    double acc = 0.0;
    const double target = draw * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (target < acc) {
            return i;
        }
    }
    // Rounding can leave target == total; return the last non-zero weight.
    for (std::size_t i = weights.size(); i-- > 0;) {
        if (weights[i] > 0.0) {
            return i;
        }
    }
    return 0;
}

std::size_t retrieval_sample(const std::vector<Inspiration>& pool, double temperature, RunRng& rng)
{
    const auto p = retrieval_probabilities(pool, temperature);
    return sample_index(p, rng.uniform());
}

json to_json(const SubAxis& a)
{
    return {{"name", a.name}, {"keywords", a.keywords}};
}

SubAxis subaxis_from_json(const json& j)
{
    return {j.at("name").get<std::string>(), j.at("keywords").get<std::vector<std::string>>()};
}

json to_json(const RoundRecord& r)
{
    return {{"round", r.round},       {"proposals", r.proposals},       {"merged", r.merged},
            {"jaccard", r.jaccard},   {"mean_quality", r.mean_quality}, {"delta_mu", r.delta_mu},
            {"converged", r.converged}, {"notes", r.notes}};
}

} // namespace archevo
