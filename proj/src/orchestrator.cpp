#include "archevo/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "archevo/consensus.hpp"
#include "archevo/hashing.hpp"
#include "archevo/rng.hpp"
#include "archevo/struct_div.hpp"
#include "archevo/transforms.hpp"

namespace archevo {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// An evaluated candidate that may be selected or re-entered as a parent.
struct Member {
    std::string id;
    int generation = 0;
    std::string parent;
    std::string inspiration_id;
    std::vector<std::string> lineage;
    BlockGraph graph;
    EvaluationResult eval;
    ObjectiveVector objectives;
    double sigma = 0.0;
    double reward = 0.0;
    double bid = 0.0;
    int front = 0;
};

json member_json(const Member& m)
{
    return {{"id", m.id},
            {"generation", m.generation},
            {"parent", m.parent},
            {"inspiration_id", m.inspiration_id},
            {"lineage", m.lineage},
            {"graph", to_json(m.graph)},
            {"eval", to_json(m.eval)},
            {"objectives", to_json(m.objectives)},
            {"sigma", m.sigma},
            {"reward", m.reward},
            {"bid", m.bid},
            {"front", m.front}};
}

Member member_from_json(const json& j)
{
    Member m;
    m.id = j.at("id").get<std::string>();
    m.generation = j.at("generation").get<int>();
    m.parent = j.at("parent").get<std::string>();
    m.inspiration_id = j.at("inspiration_id").get<std::string>();
    m.lineage = j.at("lineage").get<std::vector<std::string>>();
    m.graph = graph_from_json(j.at("graph"));
    m.eval = evaluation_from_json(j.at("eval"));
    m.objectives = objectives_from_json(j.at("objectives"));
    m.sigma = j.at("sigma").get<double>();
    m.reward = j.at("reward").get<double>();
    m.bid = j.at("bid").get<double>();
    m.front = j.at("front").get<int>();
    return m;
}

struct RunState {
    int generation = 0; // last completed
    int step = 0;       // controller decisions so far
    int next_candidate = 1;
    std::vector<Inspiration> pool;
    ReplayMemory memory;
    ReflectiveState reflect;
    std::vector<Member> survivors; // best bid first
    std::vector<SubAxis> axes;     // extracted once, reused on refresh
    double base_acc = 0.0;
};

json state_json(const RunState& s, const RunRng& rng, const Provider& provider, const Gateway& gw,
                const Evaluator& ev)
{
    json pool = json::array();
    for (const auto& i : s.pool) {
        pool.push_back(to_json(i));
    }
    json memory = json::array();
    for (const auto& r : s.memory) {
        memory.push_back(to_json(r));
    }
    json survivors = json::array();
    for (const auto& m : s.survivors) {
        survivors.push_back(member_json(m));
    }
    json axes = json::array();
    for (const auto& a : s.axes) {
        axes.push_back(to_json(a));
    }
    return {{"generation", s.generation},
            {"step", s.step},
            {"next_candidate", s.next_candidate},
            {"pool", pool},
            {"memory", memory},
            {"reflect", s.reflect.to_json()},
            {"survivors", survivors},
            {"axes", axes},
            {"base_acc", s.base_acc},
            {"rng", {{"seed", rng.seed()}, {"draws", rng.draws()}}},
            {"provider", provider.checkpoint()},
            {"gateway_calls", gw.call_counts()},
            {"evaluator_calls", ev.calls()}};
}

RunState restore_state(const json& j, RunRng& rng, Provider& provider, Gateway& gw, Evaluator& ev)
{
    RunState s;
    s.generation = j.at("generation").get<int>();
    s.step = j.at("step").get<int>();
    s.next_candidate = j.at("next_candidate").get<int>();
    for (const auto& i : j.at("pool")) {
        s.pool.push_back(inspiration_from_json(i));
    }
    for (const auto& r : j.at("memory")) {
        s.memory.push_back(reflection_from_json(r));
    }
    s.reflect = ReflectiveState::from_json(j.at("reflect"));
    for (const auto& m : j.at("survivors")) {
        s.survivors.push_back(member_from_json(m));
    }
    for (const auto& a : j.at("axes")) {
        s.axes.push_back(subaxis_from_json(a));
    }
    s.base_acc = j.at("base_acc").get<double>();
    rng.restore(j.at("rng").at("seed").get<std::uint64_t>(), j.at("rng").at("draws").get<std::uint64_t>());
    provider.restore(j.at("provider"));
    gw.restore_call_counts(j.at("gateway_calls").get<std::map<std::string, std::uint64_t>>());
    ev.restore_calls(j.at("evaluator_calls").get<std::uint64_t>());
    return s;
}

std::uint64_t eval_seed(std::uint64_t run_seed, int candidate)
{
    return splitmix64(mix_u64(run_seed, static_cast<std::uint64_t>(candidate)));
}

std::vector<double> softmax(const std::vector<double>& scores, double temperature)
{
    const double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> w;
    double sum = 0.0;
    for (double s : scores) {
        w.push_back(std::exp((s - top) / temperature));
        sum += w.back();
    }
    for (double& x : w) {
        x /= sum;
    }
    return w;
}

// Single writer; every record is one line.
class LogWriter {
public:
    LogWriter(const std::string& path, bool append)
        : out_(path, append ? std::ios::app : std::ios::trunc)
    {
        if (!out_) {
            throw Error("IO_ERROR", "cannot open run log '" + path + "'");
        }
    }

    void write(const json& record)
    {
        out_ << record.dump() << '\n';
        if (!out_) {
            throw Error("IO_ERROR", "failed writing the run log");
        }
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

class Runner {
public:
    Runner(const RunConfig& cfg, Provider& provider, Evaluator& evaluator, const std::string& paper_text)
        : cfg_(cfg), provider_(provider), evaluator_(evaluator), gw_(provider, cfg.provider), rng_(cfg.seed),
          paper_(paper_text)
    {
        ctx_.paper_numbered = number_sentences(paper_text);
    }

    RunOutcome fresh(LogWriter& log)
    {
        cfg_.check();
        log.write({{"type", "header"},
                   {"version", kRunLogVersion},
                   {"config_hash", config_hash(cfg_)},
                   {"config", to_json(cfg_)}});
        seed_generation(log);
        return loop(log);
    }

    RunOutcome resume_from(const json& state, LogWriter& log)
    {
        state_ = restore_state(state, rng_, provider_, gw_, evaluator_);
        return loop(log);
    }

private:
    void seed_generation(LogWriter& log)
    {
        Member root;
        root.id = "c0";
        root.graph = resnet_basic_block(cfg_.base_channels);
        root.eval = evaluator_.evaluate(root.graph, eval_seed(cfg_.seed, 0));
        root.objectives = objectives_of(root.eval, structural_diversity(&root.graph, nullptr));
        root.sigma = estimate_sigma(root.eval.trace);
        const auto sel = select_survivors({{root.objectives, root.sigma}}, cfg_.weights, cfg_.survival_kappa);
        root.bid = sel.scored[0].bid;
        state_.base_acc = root.eval.acc;
        state_.reflect.parent_id = root.id;
        log.write(candidate_record(root, 0, -1, "ok", "", ""));
        state_.survivors = {root};
        log.write(generation_record(0, {{root, true}}, sel, 0.0));
        log.flush();
    }

    static ObjectiveVector objectives_of(const EvaluationResult& e, double div)
    {
        return {e.acc, e.params_millions, e.latency_ms, div, e.conf};
    }

    RunOutcome loop(LogWriter& log)
    {
        RunOutcome out;
        for (int g = state_.generation + 1; g <= cfg_.generations; ++g) {
            if (cfg_.stop_after && state_.generation >= *cfg_.stop_after) {
                break;
            }
            const auto start = std::chrono::steady_clock::now();
            run_generation(g, log);
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            log.write(finish_generation(g, ms));
            log.flush();
        }
        out.generations_completed = state_.generation;
        out.finished = state_.generation >= cfg_.generations;
        if (out.finished) {
            log.write({{"type", "end"},
                       {"generations", state_.generation},
                       {"provider_calls", gw_.total_calls()},
                       {"evaluator_calls", evaluator_.calls()}});
            log.flush();
        }
        out.provider_calls = gw_.total_calls();
        out.evaluator_calls = evaluator_.calls();
        return out;
    }

    void refresh_pool(int g, LogWriter& log)
    {
        ConsensusResult res;
        try {
            res = state_.axes.empty() ? run_consensus(paper_, gw_, state_.memory, cfg_.consensus)
                                      : run_consensus(state_.axes, paper_, gw_, state_.memory, cfg_.consensus);
        } catch (const Error& e) {
            if (e.code() == "SCHEMA_VIOLATION" || e.code() == "EMPTY_PAPER") {
                throw Error("CONSENSUS_FAILED", e.what());
            }
            throw;
        }
        state_.axes = res.axes;
        std::set<std::string> known;
        for (const auto& i : state_.pool) {
            known.insert(i.id);
        }
        json axes = json::array();
        for (const auto& a : res.axes) {
            axes.push_back(to_json(a));
        }
        json transcript = json::array();
        for (const auto& r : res.transcript) {
            transcript.push_back(to_json(r));
        }
        json added = json::array();
        for (auto& i : res.inspirations) {
            if (known.insert(i.id).second) {
                added.push_back(i.id);
                state_.pool.push_back(i);
            }
        }
        log.write({{"type", "consensus"},
                   {"generation", g},
                   {"axes", axes},
                   {"rounds", res.rounds},
                   {"transcript", transcript},
                   {"inspirations", added},
                   {"expert_calls", res.expert_calls},
                   {"merge_calls", res.merge_calls},
                   {"warnings", res.warnings}});
        if (state_.pool.empty()) {
            throw Error("CONSENSUS_FAILED", "consensus produced no inspirations");
        }
    }

    struct Slot {
        int candidate = 0;
        int step = 0;
        std::size_t parent = 0; // index into survivors
        Inspiration inspiration;
        std::optional<BlockGraph> graph;
        std::string error_code;
        std::string error_message;
    };

    std::size_t pick_parent()
    {
        const double draw = rng_.uniform();
        const auto& sv = state_.survivors;
        if (cfg_.parent_choice == ParentChoice::uniform) {
            return std::min(sv.size() - 1, static_cast<std::size_t>(draw * static_cast<double>(sv.size())));
        }
        std::vector<double> bids;
        for (const auto& m : sv) {
            bids.push_back(m.bid);
        }
        return sample_index(softmax(bids, cfg_.temperature), draw);
    }

    std::vector<Inspiration> shortlist()
    {
        if (cfg_.shortlist == 0) {
            return state_.pool;
        }
        std::vector<Inspiration> out;
        std::set<std::string> seen;
        for (int k = 0; k < cfg_.shortlist; ++k) {
            const auto& pick = state_.pool[retrieval_sample(state_.pool, cfg_.temperature, rng_)];
            if (seen.insert(pick.id).second) {
                out.push_back(pick);
            }
        }
        return out;
    }

    void run_generation(int g, LogWriter& log)
    {
        if (g == 1 || cfg_.refresh_every_generation) {
            refresh_pool(g, log);
        }
        Gateway* reflect_gw = gw_.supports("reflect", "explore") ? &gw_ : nullptr;

        // Decisions, in slot order. Draw order per slot: parent, shortlist, epsilon.
        slots_.clear();
        for (int k = 0; k < cfg_.candidates_per_generation; ++k) {
            Slot slot;
            slot.candidate = state_.next_candidate++;
            slot.step = state_.step++;
            const double var = reward_variance(state_.memory, cfg_.controller.window_m);
            const double eps = epsilon(cfg_.controller.variance_scale * var, cfg_.controller);
            slot.parent = pick_parent();
            const auto offered = shortlist();
            const double draw = rng_.uniform();
            // Exploration reads the whole pool; the shortlist only narrows exploitation.
            const bool exploring = draw < eps && reflect_gw != nullptr;
            const ActionChoice choice = choose_action(state_.reflect, exploring ? state_.pool : offered,
                                                      state_.memory, eps, draw, reflect_gw, ctx_);
            slot.inspiration = choice.inspiration;
            if (choice.novel) {
                slot.inspiration.origin.round = g;
                state_.pool.push_back(slot.inspiration);
            }
            const Member& parent = state_.survivors[slot.parent];
            if (!slot.inspiration.template_name) {
                slot.error_code = "UNBOUND_INSPIRATION";
                slot.error_message = "inspiration names no known template";
            } else {
                try {
                    slot.graph = apply_transform(parent.graph, *find_template(*slot.inspiration.template_name));
                } catch (const TransformError& e) {
                    slot.error_code = e.code();
                    slot.error_message = e.what();
                }
            }
            json offered_ids = json::array();
            for (const auto& i : offered) {
                offered_ids.push_back(i.id);
            }
            log.write({{"type", "step"},
                       {"generation", g},
                       {"slot", k},
                       {"step", slot.step},
                       {"candidate", "c" + std::to_string(slot.candidate)},
                       {"parent", parent.id},
                       {"variance", var},
                       {"epsilon", eps},
                       {"draw", draw},
                       {"mode", mode_name(choice.mode)},
                       {"offered", offered_ids},
                       {"inspiration_id", slot.inspiration.id},
                       {"inspiration", slot.inspiration.text},
                       {"template", slot.inspiration.template_name ? json(*slot.inspiration.template_name) : json()},
                       {"provider_called", choice.provider_called},
                       {"novel", choice.novel},
                       {"fallback", choice.fallback}});
            slots_.push_back(std::move(slot));
        }

        // Evaluation fans out; results come back in slot order.
        std::vector<EvalJob> jobs;
        std::vector<std::size_t> job_slot;
        for (std::size_t k = 0; k < slots_.size(); ++k) {
            if (slots_[k].graph) {
                jobs.push_back({&*slots_[k].graph, eval_seed(cfg_.seed, slots_[k].candidate)});
                job_slot.push_back(k);
            }
        }
        const auto outcomes = evaluate_batch(evaluator_, jobs, cfg_.eval_workers);
        for (std::size_t j = 0; j < outcomes.size(); ++j) {
            auto& slot = slots_[job_slot[j]];
            if (!outcomes[j].result) {
                slot.error_code = outcomes[j].error_code;
                slot.error_message = outcomes[j].error_message;
            } else {
                results_[job_slot[j]] = *outcomes[j].result;
            }
        }

        children_.clear();
        for (std::size_t k = 0; k < slots_.size(); ++k) {
            auto& slot = slots_[k];
            const Member& parent = state_.survivors[slot.parent];
            const auto tmpl = slot.inspiration.template_name.value_or("");
            if (!slot.error_code.empty()) {
                Member failed;
                failed.id = "c" + std::to_string(slot.candidate);
                failed.generation = g;
                failed.parent = parent.id;
                failed.inspiration_id = slot.inspiration.id;
                log.write(candidate_record(failed, slot.step, -1, "failed", slot.error_code, slot.error_message));
                continue;
            }
            Member m;
            m.id = "c" + std::to_string(slot.candidate);
            m.generation = g;
            m.parent = parent.id;
            m.inspiration_id = slot.inspiration.id;
            m.lineage = parent.lineage;
            m.lineage.push_back(slot.inspiration.id);
            m.graph = *slot.graph;
            m.eval = results_.at(k);
            m.reward = m.eval.acc - parent.eval.acc;
            m.objectives = objectives_of(m.eval, structural_diversity(&m.graph, &parent.graph));
            m.sigma = estimate_sigma(m.eval.trace);
            const int mem_step = state_.memory.empty() ? 0 : state_.memory.back().step + 1;
            char acc[32];
            std::snprintf(acc, sizeof acc, "acc %.4f from %.4f", m.eval.acc, parent.eval.acc);
            const std::string summary =
                reflect_summary(state_.reflect, StepOutcome{mem_step, tmpl, m.reward, acc}, &gw_);
            record(state_.memory, m.inspiration_id, m.reward, summary);
            state_.reflect.push(summary, m.reward);
            log.write(candidate_record(m, slot.step, mem_step, "ok", "", ""));
            children_.push_back(std::move(m));
        }
        results_.clear();
    }

    json candidate_record(const Member& m, int step, int memory_step, const std::string& status,
                          const std::string& code, const std::string& message)
    {
        json j = {{"type", "candidate"},
                  {"id", m.id},
                  {"generation", m.generation},
                  {"step", step},
                  {"parent", m.parent},
                  {"inspiration_id", m.inspiration_id},
                  {"status", status}};
        if (status == "ok") {
            j["lineage"] = m.lineage;
            j["graph_hash"] = hex64(structural_hash(m.graph));
            j["graph"] = to_json(m.graph);
            j["eval"] = to_json(m.eval);
            j["objectives"] = to_json(m.objectives);
            j["sigma"] = m.sigma;
            j["reward"] = m.reward;
            j["memory_step"] = memory_step;
            if (m.generation > 0) {
                j["parent_acc"] = m.eval.acc - m.reward;
            }
        } else {
            j["error"] = {{"code", code}, {"message", message}};
        }
        return j;
    }

    json generation_record(int g, const std::vector<std::pair<Member, bool>>& entrants, const SelectionResult& sel,
                           double wall_ms)
    {
        json cands = json::array();
        for (std::size_t i = 0; i < entrants.size(); ++i) {
            const auto& [m, is_child] = entrants[i];
            cands.push_back({{"id", m.id},
                             {"role", is_child ? "child" : "parent"},
                             {"front", sel.scored[i].front},
                             {"bid", sel.scored[i].bid},
                             {"survived", sel.scored[i].survived}});
        }
        json survivors = json::array();
        for (const auto& m : state_.survivors) {
            survivors.push_back(m.id);
        }
        state_.generation = g;
        json j = {{"type", "generation"},
                  {"generation", g},
                  {"candidates", cands},
                  {"survivors", survivors},
                  {"best_bid", state_.survivors.front().bid},
                  {"provider_calls", gw_.total_calls()},
                  {"evaluator_calls", evaluator_.calls()},
                  {"state", state_json(state_, rng_, provider_, gw_, evaluator_)}};
        if (cfg_.record_timing) {
            j["wall_ms"] = wall_ms;
        }
        return j;
    }

    json finish_generation(int g, double wall_ms)
    {
        std::vector<std::pair<Member, bool>> entrants;
        if (cfg_.elitism) {
            for (const auto& m : state_.survivors) {
                entrants.emplace_back(m, false);
            }
        }
        for (const auto& m : children_) {
            entrants.emplace_back(m, true);
        }
        SelectionResult sel;
        if (!entrants.empty()) {
            std::vector<SelectionInput> inputs;
            for (const auto& [m, _] : entrants) {
                inputs.push_back({m.objectives, m.sigma});
            }
            sel = select_survivors(inputs, cfg_.weights, cfg_.survival_kappa);
            std::vector<Member> next;
            for (std::size_t idx : sel.survivors) {
                Member m = entrants[idx].first;
                m.bid = sel.scored[idx].bid;
                m.front = sel.scored[idx].front;
                next.push_back(std::move(m));
            }
            // Credit flows to the inspirations behind this generation's surviving children.
            std::vector<CreditShare> shares;
            std::set<std::string> credited;
            for (std::size_t idx : sel.survivors) {
                if (entrants[idx].second) {
                    const auto& m = entrants[idx].first;
                    shares.push_back({m.lineage, m.reward});
                    credited.insert(m.lineage.begin(), m.lineage.end());
                }
            }
            update_utility(state_.pool, shares, cfg_.gamma, cfg_.credit_kappa);
            age_pool(state_.pool, credited);
            state_.survivors = std::move(next);
        }
        state_.reflect.generation = g;
        state_.reflect.parent_id = state_.survivors.front().id;
        return generation_record(g, entrants, sel, wall_ms);
    }

    RunConfig cfg_;
    Provider& provider_;
    Evaluator& evaluator_;
    Gateway gw_;
    RunRng rng_;
    std::string paper_;
    ExploreContext ctx_;
    RunState state_;
    std::vector<Slot> slots_;
    std::map<std::size_t, EvaluationResult> results_;
    std::vector<Member> children_;
};

} // namespace

RunLog read_log(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("IO_ERROR", "cannot read run log '" + path + "'");
    }
    RunLog out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception&) {
            throw Error("CORRUPT_LOG", path + ":" + std::to_string(n) + " is not a complete record");
        }
        if (!out.back().is_object() || !out.back().contains("type")) {
            throw Error("CORRUPT_LOG", path + ":" + std::to_string(n) + " has no record type");
        }
    }
    return out;
}

RunOutcome run(const RunConfig& cfg, Provider& provider, Evaluator& evaluator, const std::string& paper_text,
               const std::string& log_path)
{
    cfg.check();
    Runner runner(cfg, provider, evaluator, paper_text);
    LogWriter log(log_path, false);
    return runner.fresh(log);
}

RunOutcome resume(const RunConfig& cfg, Provider& provider, Evaluator& evaluator, const std::string& paper_text,
                  const std::string& log_path)
{
    cfg.check();
    const RunLog records = read_log(log_path);
    if (records.empty() || records.front().at("type") != "header") {
        throw Error("CORRUPT_LOG", "run log has no header");
    }
    const json& header = records.front();
    if (header.value("version", "") != kRunLogVersion) {
        throw Error("INCOMPATIBLE_LOG", "log version '" + header.value("version", "") + "' is not supported");
    }
    if (header.value("config_hash", "") != config_hash(cfg)) {
        throw Error("INCOMPATIBLE_LOG", "log was written with a different configuration");
    }
    std::size_t last = records.size();
    for (std::size_t i = records.size(); i-- > 0;) {
        if (records[i].at("type") == "generation") {
            last = i;
            break;
        }
    }
    if (last == records.size()) {
        throw Error("CORRUPT_LOG", "no complete generation to resume from");
    }
    if (!records[last].contains("state")) {
        throw Error("CORRUPT_LOG", "generation record carries no state");
    }

    // Keep the first last+1 lines and drop anything after them.
    std::ifstream in(log_path);
    std::string kept;
    std::string line;
    for (std::size_t i = 0; i <= last && std::getline(in, line); ++i) {
        kept += line + '\n';
    }
    in.close();
    {
        std::ofstream out(log_path, std::ios::trunc);
        out << kept;
        if (!out) {
            throw Error("IO_ERROR", "cannot rewrite run log '" + log_path + "'");
        }
    }

    Runner runner(cfg, provider, evaluator, paper_text);
    LogWriter log(log_path, true);
    try {
        return runner.resume_from(records[last].at("state"), log);
    } catch (const json::exception& e) {
        throw Error("CORRUPT_LOG", std::string("generation state is unreadable: ") + e.what());
    }
}

SuccessMetrics success_metrics(const RunLog& log)
{
    SuccessMetrics m;
    // Outcome sequence per parent, in log order.
    std::map<std::string, std::vector<bool>> by_parent;
    std::vector<std::string> parents;
    for (const auto& r : log) {
        if (r.at("type") != "candidate" || r.at("generation").get<int>() < 1 || r.at("status") != "ok") {
            continue;
        }
        const double acc = r.at("eval").at("acc").get<double>();
        const bool success = acc > r.at("parent_acc").get<double>();
        const auto parent = r.at("parent").get<std::string>();
        if (!by_parent.contains(parent)) {
            parents.push_back(parent);
        }
        by_parent[parent].push_back(success);
        ++m.children;
        m.successes += success ? 1 : 0;
    }
    if (m.children == 0) {
        throw Error("NO_CHILDREN", "log holds no evaluated child");
    }
    m.success_rate = static_cast<double>(m.successes) / static_cast<double>(m.children);
    if (m.successes > 0) {
        m.trials_per_success = static_cast<double>(m.children) / static_cast<double>(m.successes);
    }
    double sum = 0.0;
    int with_success = 0;
    for (const auto& p : parents) {
        const auto& seq = by_parent[p];
        const auto it = std::find(seq.begin(), seq.end(), true);
        if (it != seq.end()) {
            sum += static_cast<double>(it - seq.begin() + 1);
            ++with_success;
        }
    }
    if (with_success > 0) {
        m.trials_to_first_success = sum / with_success;
    }
    return m;
}

json to_json(const SuccessMetrics& m)
{
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"children", m.children},
            {"successes", m.successes},
            {"success_rate", m.success_rate},
            {"trials_to_first_success", opt(m.trials_to_first_success)},
            {"trials_per_success", opt(m.trials_per_success)}};
}

Report build_report(const RunLog& log)
{
    Report r;
    std::map<int, GenerationSummary> gens;
    std::map<int, double> best_bid;
    for (const auto& rec : log) {
        const auto type = rec.at("type").get<std::string>();
        if (type == "candidate" && rec.at("status") == "ok" && rec.at("generation").get<int>() >= 1) {
            const int g = rec.at("generation").get<int>();
            const auto& e = rec.at("eval");
            const double acc = e.at("acc").get<double>();
            auto [it, fresh] = gens.try_emplace(g);
            if (fresh || acc > it->second.best_acc) {
                it->second = {g, acc, e.at("params_millions").get<double>(), e.at("latency_ms").get<double>(),
                              e.at("conf").get<double>(), 0.0};
            }
        } else if (type == "generation") {
            best_bid[rec.at("generation").get<int>()] = rec.at("best_bid").get<double>();
        }
    }
    for (auto& [g, s] : gens) {
        s.best_bid = best_bid.count(g) ? best_bid[g] : 0.0;
        r.generations.push_back(s);
    }
    for (const auto& rec : log) {
        if (rec.at("type") == "step") {
            const int g = rec.at("generation").get<int>();
            r.steps.push_back({rec.at("step").get<int>(), g, rec.at("epsilon").get<double>(),
                               rec.at("variance").get<double>(), best_bid.count(g) ? best_bid[g] : 0.0});
        }
    }
    try {
        r.success = success_metrics(log);
    } catch (const Error&) {
        r.success.reset();
    }
    return r;
}

void write_report(const Report& r, const std::string& out_dir)
{
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    auto open = [&](const std::string& name) {
        std::ofstream f(fs::path(out_dir) / name);
        if (!f) {
            throw Error("IO_ERROR", "cannot write " + (fs::path(out_dir) / name).string());
        }
        return f;
    };
    {
        auto f = open("summary.csv");
        f << "generation,best_acc,params_millions,latency_ms,conf,best_bid\n";
        f.precision(10);
        for (const auto& g : r.generations) {
            f << g.generation << ',' << g.best_acc << ',' << g.params_millions << ',' << g.latency_ms << ','
              << g.conf << ',' << g.best_bid << '\n';
        }
    }
    {
        auto f = open("series.csv");
        f << "step,generation,epsilon,variance,best_bid\n";
        f.precision(10);
        for (const auto& s : r.steps) {
            f << s.step << ',' << s.generation << ',' << s.epsilon << ',' << s.variance << ',' << s.best_bid << '\n';
        }
    }
    {
        auto f = open("success.json");
        f << (r.success ? to_json(*r.success) : json(nullptr)).dump(2) << '\n';
    }
}

} // namespace archevo
