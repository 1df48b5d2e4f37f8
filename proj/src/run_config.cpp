#include "archevo/run_config.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "archevo/hashing.hpp"

namespace archevo {

using nlohmann::json;
namespace pt = boost::property_tree;
namespace fs = std::filesystem;

void RunConfig::check() const
{
    auto bad = [](const std::string& msg) { throw Error("INVALID_CONFIG", msg); };
    if (generations < 1) {
        bad("generations must be at least 1");
    }
    if (candidates_per_generation < 1) {
        bad("candidates_per_generation must be at least 1");
    }
    if (base_channels < 1) {
        bad("base_channels must be positive");
    }
    if (shortlist < 0) {
        bad("shortlist must be >= 0");
    }
    if (stop_after && *stop_after < 0) {
        bad("stop_after must be >= 0");
    }
    controller.check();
    consensus.check();
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        bad("gamma must lie in (0, 1]");
    }
    if (!(credit_kappa > 0.0)) {
        bad("credit_kappa must be positive");
    }
    if (!(temperature > 0.0)) {
        bad("temperature must be positive");
    }
    if (!(survival_kappa > 0.0 && survival_kappa <= 1.0)) {
        bad("kappa must lie in (0, 1]");
    }
    for (double w : {weights.lambda_p, weights.lambda_l, weights.gamma_d, weights.rho_c, weights.beta}) {
        if (!(w >= 0.0)) {
            bad("bid weights must be non-negative");
        }
    }
    if (provider_kind != "mock" && provider_kind != "http") {
        bad("provider kind must be mock or http");
    }
    if (provider_kind == "mock" && mock_script.empty()) {
        bad("the mock provider needs a script");
    }
    if (evaluator_kind != "surrogate" && evaluator_kind != "external") {
        bad("evaluator kind must be surrogate or external");
    }
    if (evaluator_kind == "external" && adapter.program.empty()) {
        bad("the external evaluator needs an adapter program");
    }
    if (eval_workers < 1) {
        bad("workers must be at least 1");
    }
    if (paper.empty()) {
        bad("search.paper is required");
    }
}

namespace {

template <class T>
T convert(const std::string& where, const std::string& raw)
{
    std::istringstream in(raw);
    T v{};
    in >> v;
    if (in.fail() || !(in >> std::ws).eof()) {
        throw Error("INVALID_CONFIG", where + ": cannot parse '" + raw + "'");
    }
    return v;
}

bool to_bool(const std::string& where, const std::string& raw)
{
    if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") {
        return true;
    }
    if (raw == "false" || raw == "0" || raw == "no" || raw == "off") {
        return false;
    }
    throw Error("INVALID_CONFIG", where + ": expected a boolean, got '" + raw + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& where, const std::string& raw)>;

template <class T>
Setter field(T RunConfig::*member)
{
    return [member](RunConfig& c, const std::string& w, const std::string& raw) { c.*member = convert<T>(w, raw); };
}

template <class S, class T>
Setter nested(S RunConfig::*outer, T S::*member)
{
    return [outer, member](RunConfig& c, const std::string& w, const std::string& raw) {
        (c.*outer).*member = convert<T>(w, raw);
    };
}

Setter flag(bool RunConfig::*member)
{
    return [member](RunConfig& c, const std::string& w, const std::string& raw) { c.*member = to_bool(w, raw); };
}

Setter text(std::string RunConfig::*member)
{
    return [member](RunConfig& c, const std::string&, const std::string& raw) { c.*member = raw; };
}

const std::map<std::string, std::map<std::string, Setter>>& setters()
{
    static const std::map<std::string, std::map<std::string, Setter>> table{
        {"search",
         {{"generations", field(&RunConfig::generations)},
          {"candidates_per_generation", field(&RunConfig::candidates_per_generation)},
          {"seed", field(&RunConfig::seed)},
          {"base_channels", field(&RunConfig::base_channels)},
          {"paper", text(&RunConfig::paper)},
          {"elitism", flag(&RunConfig::elitism)},
          {"refresh_every_generation", flag(&RunConfig::refresh_every_generation)},
          {"parent_choice",
           [](RunConfig& c, const std::string& w, const std::string& raw) {
               if (raw == "softmax") {
                   c.parent_choice = ParentChoice::softmax;
               } else if (raw == "uniform") {
                   c.parent_choice = ParentChoice::uniform;
               } else {
                   throw Error("INVALID_CONFIG", w + ": expected softmax or uniform");
               }
           }},
          {"shortlist", field(&RunConfig::shortlist)},
          {"record_timing", flag(&RunConfig::record_timing)},
          {"stop_after",
           [](RunConfig& c, const std::string& w, const std::string& raw) { c.stop_after = convert<int>(w, raw); }}}},
        {"controller",
         {{"eps_min", nested(&RunConfig::controller, &ControllerConfig::eps_min)},
          {"eps_max", nested(&RunConfig::controller, &ControllerConfig::eps_max)},
          {"lambda", nested(&RunConfig::controller, &ControllerConfig::lambda)},
          {"window_m", nested(&RunConfig::controller, &ControllerConfig::window_m)},
          {"variance_scale", nested(&RunConfig::controller, &ControllerConfig::variance_scale)}}},
        {"consensus",
         {{"tau_j", nested(&RunConfig::consensus, &ConsensusConfig::tau_j)},
          {"tau_q", nested(&RunConfig::consensus, &ConsensusConfig::tau_q)},
          {"t_min", nested(&RunConfig::consensus, &ConsensusConfig::t_min)},
          {"t_max", nested(&RunConfig::consensus, &ConsensusConfig::t_max)},
          {"delta", nested(&RunConfig::consensus, &ConsensusConfig::delta)},
          {"gamma", field(&RunConfig::gamma)},
          {"credit_kappa", field(&RunConfig::credit_kappa)},
          {"temperature", field(&RunConfig::temperature)}}},
        {"selection",
         {{"kappa", field(&RunConfig::survival_kappa)},
          {"lambda_p", nested(&RunConfig::weights, &BidWeights::lambda_p)},
          {"lambda_l", nested(&RunConfig::weights, &BidWeights::lambda_l)},
          {"gamma_d", nested(&RunConfig::weights, &BidWeights::gamma_d)},
          {"rho_c", nested(&RunConfig::weights, &BidWeights::rho_c)},
          {"beta", nested(&RunConfig::weights, &BidWeights::beta)}}},
        {"provider",
         {{"kind", text(&RunConfig::provider_kind)},
          {"script", text(&RunConfig::mock_script)},
          {"endpoint", nested(&RunConfig::provider, &ProviderConfig::endpoint)},
          {"embedding_endpoint", nested(&RunConfig::provider, &ProviderConfig::embedding_endpoint)},
          {"model", nested(&RunConfig::provider, &ProviderConfig::model)},
          {"api_key_env", nested(&RunConfig::provider, &ProviderConfig::api_key_env)},
          {"context_tokens", nested(&RunConfig::provider, &ProviderConfig::context_tokens)},
          {"temperature", nested(&RunConfig::provider, &ProviderConfig::temperature)},
          {"top_p", nested(&RunConfig::provider, &ProviderConfig::top_p)},
          {"max_tokens", nested(&RunConfig::provider, &ProviderConfig::max_tokens)},
          {"retries", nested(&RunConfig::provider, &ProviderConfig::retries)},
          {"timeout_seconds", nested(&RunConfig::provider, &ProviderConfig::timeout_seconds)},
          {"max_in_flight", nested(&RunConfig::provider, &ProviderConfig::max_in_flight)},
          {"audit_log", nested(&RunConfig::provider, &ProviderConfig::audit_log)}}},
        {"evaluator",
         {{"kind", text(&RunConfig::evaluator_kind)},
          {"workers", field(&RunConfig::eval_workers)},
          {"adapter", nested(&RunConfig::adapter, &AdapterConfig::program)},
          {"timeout_s", nested(&RunConfig::adapter, &AdapterConfig::timeout_s)},
          {"budget_epochs", nested(&RunConfig::adapter, &AdapterConfig::budget_epochs)},
          {"base_acc", nested(&RunConfig::surrogate, &SurrogateConfig::base_acc)},
          {"dw_pw_bonus", nested(&RunConfig::surrogate, &SurrogateConfig::dw_pw_bonus)},
          {"residual_bonus", nested(&RunConfig::surrogate, &SurrogateConfig::residual_bonus)},
          {"residual_cap", nested(&RunConfig::surrogate, &SurrogateConfig::residual_cap)},
          {"params_budget_m", nested(&RunConfig::surrogate, &SurrogateConfig::params_budget_m)},
          {"over_budget_penalty", nested(&RunConfig::surrogate, &SurrogateConfig::over_budget_penalty)},
          {"noise", nested(&RunConfig::surrogate, &SurrogateConfig::noise)},
          {"spatial", nested(&RunConfig::surrogate, &SurrogateConfig::spatial)}}},
    };
    return table;
}

std::string resolve(const std::string& base_dir, const std::string& p)
{
    if (p.empty() || fs::path(p).is_absolute()) {
        return p;
    }
    return (fs::path(base_dir) / p).lexically_normal().string();
}

} // namespace

RunConfig parse_config(std::string_view ini_text, const std::string& base_dir)
{
    pt::ptree tree;
    try {
        std::istringstream in{std::string(ini_text)};
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw Error("INVALID_CONFIG", e.what());
    }
    RunConfig c;
    const auto& table = setters();
    for (const auto& [section, entries] : tree) {
        const auto sit = table.find(section);
        if (sit == table.end()) {
            throw Error("INVALID_CONFIG", "unknown section [" + section + "]");
        }
        if (!entries.data().empty() && entries.empty()) {
            throw Error("INVALID_CONFIG", "'" + section + "' is outside any section");
        }
        for (const auto& [key, value] : entries) {
            const auto kit = sit->second.find(key);
            if (kit == sit->second.end()) {
                throw Error("INVALID_CONFIG", "unknown key " + section + "." + key);
            }
            kit->second(c, section + "." + key, value.data());
        }
    }
    c.paper = resolve(base_dir, c.paper);
    c.mock_script = resolve(base_dir, c.mock_script);
    if (c.adapter.program.find('/') != std::string::npos) {
        c.adapter.program = resolve(base_dir, c.adapter.program);
    }
    c.check();
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("IO_ERROR", "cannot read config '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), fs::path(path).parent_path().string());
}

json to_json(const RunConfig& c)
{
    const auto& w = c.weights;
    const auto& s = c.surrogate;
    return {
        {"search",
         {{"generations", c.generations},
          {"candidates_per_generation", c.candidates_per_generation},
          {"seed", c.seed},
          {"base_channels", c.base_channels},
          {"paper", c.paper},
          {"elitism", c.elitism},
          {"refresh_every_generation", c.refresh_every_generation},
          {"parent_choice", c.parent_choice == ParentChoice::softmax ? "softmax" : "uniform"},
          {"shortlist", c.shortlist},
          {"record_timing", c.record_timing}}},
        {"controller",
         {{"eps_min", c.controller.eps_min},
          {"eps_max", c.controller.eps_max},
          {"lambda", c.controller.lambda},
          {"window_m", c.controller.window_m},
          {"variance_scale", c.controller.variance_scale}}},
        {"consensus",
         {{"tau_j", c.consensus.tau_j},
          {"tau_q", c.consensus.tau_q},
          {"t_min", c.consensus.t_min},
          {"t_max", c.consensus.t_max},
          {"delta", c.consensus.delta},
          {"gamma", c.gamma},
          {"credit_kappa", c.credit_kappa},
          {"temperature", c.temperature}}},
        {"selection",
         {{"kappa", c.survival_kappa},
          {"lambda_p", w.lambda_p},
          {"lambda_l", w.lambda_l},
          {"gamma_d", w.gamma_d},
          {"rho_c", w.rho_c},
          {"beta", w.beta}}},
        {"provider",
         {{"kind", c.provider_kind},
          {"script", c.mock_script},
          {"endpoint", c.provider.endpoint},
          {"embedding_endpoint", c.provider.embedding_endpoint},
          {"model", c.provider.model},
          {"context_tokens", c.provider.context_tokens},
          {"temperature", c.provider.temperature},
          {"top_p", c.provider.top_p},
          {"max_tokens", c.provider.max_tokens},
          {"retries", c.provider.retries}}},
        {"evaluator",
         {{"kind", c.evaluator_kind},
          {"adapter", c.adapter.program},
          {"budget_epochs", c.adapter.budget_epochs},
          {"base_acc", s.base_acc},
          {"dw_pw_bonus", s.dw_pw_bonus},
          {"residual_bonus", s.residual_bonus},
          {"residual_cap", s.residual_cap},
          {"params_budget_m", s.params_budget_m},
          {"over_budget_penalty", s.over_budget_penalty},
          {"noise", s.noise},
          {"spatial", s.spatial}}},
    };
}

std::string config_hash(const RunConfig& c)
{
    return hex64(fnv1a(to_json(c).dump()));
}

} // namespace archevo
