#pragma once

#include <functional>
#include <string>

#include "archevo/llm_gateway.hpp"

namespace archevo {

// Chat-completions over HTTP(S). The API key is read from the environment
// variable named by cfg.api_key_env at construction time.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(ProviderConfig cfg);

    std::string complete(const ChatRequest& request) override;
    std::optional<std::vector<double>> embed(const std::string& text) override;

    // Overridable for tests; defaults to std::this_thread::sleep_for.
    std::function<void(double seconds)> sleep;

private:
    struct Response {
        int status = 0;
        std::string body;
    };
    Response post(const std::string& url, const std::string& body);

    ProviderConfig cfg_;
    std::string api_key_;
};

} // namespace archevo
