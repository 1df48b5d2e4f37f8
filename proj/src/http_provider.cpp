#include "archevo/http_provider.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace archevo {

using nlohmann::json;

HttpProvider::HttpProvider(ProviderConfig cfg) : cfg_(std::move(cfg))
{
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) {
        api_key_ = key;
    }
    sleep = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

HttpProvider::Response HttpProvider::post(const std::string& url, const std::string& body)
{
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, url_re)) {
        throw Error("TRANSPORT", "malformed endpoint URL " + url);
    }
    httplib::Client client(m[1].str());
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    client.set_write_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key_);
    }
    const std::string path = m[2].matched ? m[2].str() : "/";
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
        throw Error("TRANSPORT", "request to " + m[1].str() + " failed: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
}

std::string HttpProvider::complete(const ChatRequest& request)
{
    const std::string payload = request_payload(request);
    double backoff = 1.0;
    for (int attempt = 0;; ++attempt) {
        auto res = post(cfg_.endpoint, payload);
        if (res.status == 429 || res.status == 503) {
            if (attempt + 1 >= std::max(1, cfg_.retries)) {
                throw Error("RATE_LIMITED", "provider kept refusing with HTTP " + std::to_string(res.status));
            }
            sleep(backoff);
            backoff *= 2;
            continue;
        }
        if (res.status < 200 || res.status >= 300) {
            throw Error("TRANSPORT", "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 500));
        }
        auto j = json::parse(res.body, nullptr, false);
        if (j.is_discarded()) {
            throw Error("TRANSPORT", "reply body is not JSON");
        }
        try {
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw Error("TRANSPORT", "reply has no choices[0].message.content");
        }
    }
}

std::optional<std::vector<double>> HttpProvider::embed(const std::string& text)
{
    if (cfg_.embedding_endpoint.empty()) {
        return std::nullopt;
    }
    const json payload = {{"model", cfg_.model}, {"input", text}};
    auto res = post(cfg_.embedding_endpoint, payload.dump());
    if (res.status < 200 || res.status >= 300) {
        throw Error("TRANSPORT", "embedding request failed with HTTP " + std::to_string(res.status));
    }
    auto j = json::parse(res.body, nullptr, false);
    try {
        return j.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception&) {
        throw Error("TRANSPORT", "embedding reply has no data[0].embedding");
    }
}

} // namespace archevo
