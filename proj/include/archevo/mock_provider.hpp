#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "archevo/llm_gateway.hpp"

namespace archevo {

// Canned replies keyed by "template:caller" or plain "template". A string
// entry is sent verbatim; any other JSON value is sent as its compact dump.
// An object {"__error__": CODE} makes that call throw Error(CODE).
struct MockScript {
    std::map<std::string, std::vector<std::string>> queues;

    static MockScript from_json(const nlohmann::json& j);
    static MockScript load(const std::string& path);
    void push(const std::string& key, const nlohmann::json& reply);
};

class MockProvider : public Provider {
public:
    explicit MockProvider(MockScript script) : script_(std::move(script)) {}

    // Throws Error("SCRIPT_EXHAUSTED") when the queue for the call is empty.
    std::string complete(const ChatRequest& request) override;
    bool supports(const std::string& template_name, const std::string& caller) const override;
    bool ordered_dispatch() const override { return true; }

    std::uint64_t calls(const std::string& template_name) const;
    std::uint64_t total_calls() const;
    const std::vector<ChatRequest>& requests() const noexcept { return requests_; }

    // Queue positions and counters, for resume.
    nlohmann::json checkpoint() const override;
    void restore(const nlohmann::json& state) override;

private:
    std::string key_for(const std::string& template_name, const std::string& caller) const;

    MockScript script_;
    mutable std::mutex mu_;
    std::map<std::string, std::size_t> consumed_;
    std::map<std::string, std::uint64_t> calls_;
    std::vector<ChatRequest> requests_;
};

} // namespace archevo
