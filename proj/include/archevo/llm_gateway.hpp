#pragma once

#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "archevo/error.hpp"

namespace archevo {

struct ProviderConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string embedding_endpoint; // empty: hashing fallback
    std::string model = "gpt-4o";
    std::string api_key_env = "ARCHEVO_API_KEY";
    int context_tokens = 4096;
    double temperature = 0.7;
    double top_p = 0.9;
    int max_tokens = 512;
    int retries = 3; // total attempts per call
    int timeout_seconds = 60;
    int max_in_flight = 4;
    std::string audit_log; // JSONL mirror of requests/responses; empty disables
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string template_name;
    std::string caller; // logical caller, e.g. an expert's sub-axis
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.7;
    double top_p = 0.9;
    int max_tokens = 512;
};

// Wire payload in chat-completions shape. Byte-identical for equal requests.
std::string request_payload(const ChatRequest& r);

class Provider {
public:
    virtual ~Provider() = default;

    // Returns the assistant text. Throws Error with code TRANSPORT or RATE_LIMITED.
    virtual std::string complete(const ChatRequest& request) = 0;

    // A live embedding, or nullopt to use the hashing fallback.
    virtual std::optional<std::vector<double>> embed(const std::string&) { return std::nullopt; }

    // Whether this provider has an answer source for the template at all.
    // Callers with a local fallback (merge, summaries) check this first.
    virtual bool supports(const std::string& /*template_name*/, const std::string& /*caller*/) const { return true; }

    // Scripted providers need calls in a fixed order; concurrent fan-out is
    // then executed sequentially in index order.
    virtual bool ordered_dispatch() const { return false; }

    // Replayable position for resume; stateless providers return null.
    virtual nlohmann::json checkpoint() const { return nullptr; }
    virtual void restore(const nlohmann::json& /*state*/) {}
};

struct PromptTemplate {
    std::string name;
    std::string system;
    std::string user;

    std::vector<std::string> placeholders() const;
};

// Templates: subtasks, expert, reflect, merge, summary.
const PromptTemplate& prompt_template(std::string_view name);

using Bindings = std::map<std::string, std::string>;

// Throws Error("UNBOUND_PLACEHOLDER").
std::string fill(const std::string& text, const Bindings& bindings);
ChatRequest render(const PromptTemplate& t, const Bindings& bindings, const ProviderConfig& cfg,
                   const std::string& caller = {});

// "[1] First sentence.\n[2] Second ..." split on a period followed by whitespace.
std::string number_sentences(std::string_view text);

// Strips code fences and returns the first balanced {...} that parses.
std::optional<nlohmann::json> extract_json_object(std::string_view body);

enum class FieldKind { string, string_list, int_list };

struct FieldRule {
    std::string key;
    FieldKind kind = FieldKind::string;
    bool required = true;
};

struct JsonSchema {
    std::string name;
    std::vector<FieldRule> fields;

    // Description of the first violation, or nullopt when the object conforms.
    std::optional<std::string> check(const nlohmann::json& j) const;
};

const JsonSchema& schema_for(std::string_view template_name);

class SchemaViolation : public Error {
public:
    SchemaViolation(const std::string& message, std::vector<std::string> bodies)
        : Error("SCHEMA_VIOLATION", message), bodies_(std::move(bodies)) {}

    const std::vector<std::string>& bodies() const noexcept { return bodies_; }

private:
    std::vector<std::string> bodies_;
};

// Counting semaphore that admits waiters strictly in arrival order.
class FairLimiter {
public:
    explicit FairLimiter(int permits) : permits_(permits < 1 ? 1 : permits) {}

    void acquire();
    void release();
    int peak() const;

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    int permits_;
    int in_flight_ = 0;
    int peak_ = 0;
    std::uint64_t next_ticket_ = 0;
    std::uint64_t serving_ = 0;
};

inline constexpr int kEmbeddingDim = 256;

// Token feature hashing into kEmbeddingDim bins, L2-normalized.
// Throws Error("EMPTY_TEXT") when the text has no alphanumeric token.
std::vector<double> hash_embedding(std::string_view text);

// First `limit` whitespace-separated words; `truncated` reports a cut.
std::string truncate_words(std::string_view text, std::size_t limit, bool* truncated = nullptr);
std::size_t word_count(std::string_view text);

class Gateway {
public:
    Gateway(Provider& provider, ProviderConfig cfg);

    // Render, call, extract, validate; retries with the violation appended.
    nlohmann::json call_json(const std::string& template_name, const Bindings& bindings,
                             const std::string& caller = {});

    std::vector<double> embed(const std::string& text);

    bool supports(const std::string& template_name, const std::string& caller = {}) const
    {
        return provider_.supports(template_name, caller);
    }

    // Runs jobs concurrently (or in order for scripted providers) and returns
    // results in job order. The first exception in job order is rethrown.
    template <class T>
    std::vector<T> dispatch(const std::vector<std::function<T()>>& jobs);

    // Provider round-trips (including retries), by template name.
    std::map<std::string, std::uint64_t> call_counts() const;
    std::uint64_t total_calls() const;
    void restore_call_counts(const std::map<std::string, std::uint64_t>& counts);

    const ProviderConfig& config() const noexcept { return cfg_; }
    FairLimiter& limiter() noexcept { return limiter_; }

private:
    std::string round_trip(const ChatRequest& request);
    void audit(const ChatRequest& request, const std::string& response, const std::string& error);

    Provider& provider_;
    ProviderConfig cfg_;
    FairLimiter limiter_;
    mutable std::mutex mu_;
    std::map<std::string, std::uint64_t> calls_;
};

template <class T>
std::vector<T> Gateway::dispatch(const std::vector<std::function<T()>>& jobs)
{
    std::vector<std::optional<T>> slots(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    auto run = [&](std::size_t i) {
        try {
            slots[i].emplace(jobs[i]());
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    if (provider_.ordered_dispatch() || jobs.size() < 2) {
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            run(i);
        }
    } else {
        std::vector<std::thread> workers;
        workers.reserve(jobs.size());
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            workers.emplace_back(run, i);
        }
        for (auto& w : workers) {
            w.join();
        }
    }
    std::vector<T> out;
    out.reserve(jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (errors[i]) {
            std::rethrow_exception(errors[i]);
        }
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

} // namespace archevo
