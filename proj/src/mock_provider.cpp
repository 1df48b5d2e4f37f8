#include "archevo/mock_provider.hpp"

#include <fstream>

namespace archevo {

using nlohmann::json;

MockScript MockScript::from_json(const json& j)
{
    MockScript s;
    const json& queues = j.contains("queues") ? j.at("queues") : j;
    if (!queues.is_object()) {
        throw Error("PARSE_ERROR", "mock script must map template keys to reply lists");
    }
    for (const auto& [key, list] : queues.items()) {
        if (!list.is_array()) {
            throw Error("PARSE_ERROR", "mock queue \"" + key + "\" is not a list");
        }
        for (const auto& reply : list) {
            s.push(key, reply);
        }
    }
    return s;
}

MockScript MockScript::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("IO_ERROR", "cannot open mock script " + path);
    }
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw Error("PARSE_ERROR", "mock script " + path + " is not valid JSON");
    }
    return from_json(j);
}

void MockScript::push(const std::string& key, const json& reply)
{
    queues[key].push_back(reply.is_string() ? reply.get<std::string>() : reply.dump());
}

std::string MockProvider::key_for(const std::string& template_name, const std::string& caller) const
{
    if (!caller.empty()) {
        auto qualified = template_name + ":" + caller;
        if (script_.queues.count(qualified)) {
            return qualified;
        }
    }
    return template_name;
}

std::string MockProvider::complete(const ChatRequest& request)
{
    std::lock_guard lock(mu_);
    const auto key = key_for(request.template_name, request.caller);
    ++calls_[request.template_name];
    requests_.push_back(request);
    auto q = script_.queues.find(key);
    auto& pos = consumed_[key];
    if (q == script_.queues.end() || pos >= q->second.size()) {
        throw Error("SCRIPT_EXHAUSTED", "no scripted reply left for \"" + key + "\"");
    }
    const std::string& reply = q->second[pos++];
    auto parsed = json::parse(reply, nullptr, false);
    if (parsed.is_object() && parsed.contains("__error__")) {
        throw Error(parsed.at("__error__").get<std::string>(), "scripted failure for \"" + key + "\"");
    }
    return reply;
}

bool MockProvider::supports(const std::string& template_name, const std::string& caller) const
{
    return script_.queues.count(key_for(template_name, caller)) > 0;
}

std::uint64_t MockProvider::calls(const std::string& template_name) const
{
    std::lock_guard lock(mu_);
    auto it = calls_.find(template_name);
    return it == calls_.end() ? 0 : it->second;
}

std::uint64_t MockProvider::total_calls() const
{
    std::lock_guard lock(mu_);
    std::uint64_t n = 0;
    for (const auto& [_, c] : calls_) {
        n += c;
    }
    return n;
}

json MockProvider::checkpoint() const
{
    std::lock_guard lock(mu_);
    return {{"consumed", consumed_}, {"calls", calls_}};
}

void MockProvider::restore(const json& state)
{
    std::lock_guard lock(mu_);
    consumed_ = state.at("consumed").get<std::map<std::string, std::size_t>>();
    calls_ = state.at("calls").get<std::map<std::string, std::uint64_t>>();
}

} // namespace archevo
