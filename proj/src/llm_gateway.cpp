#include "archevo/llm_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "archevo/hashing.hpp"

namespace archevo {

using nlohmann::json;

std::string request_payload(const ChatRequest& r)
{
    json messages = json::array();
    for (const auto& m : r.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    json j = {{"model", r.model},
              {"messages", messages},
              {"temperature", r.temperature},
              {"top_p", r.top_p},
              {"max_tokens", r.max_tokens}};
    return j.dump();
}

namespace {

const std::regex& placeholder_re()
{
    static const std::regex re(R"(\{([a-z_]+)\})");
    return re;
}

const char* const kJsonOnly = "Reply with one JSON object and no other text.";

const std::string kExpertUser =
    "Suggest one small, self-contained change to the block that targets {field}. It should drop into an "
    "existing network without touching the rest of the model. If an idea already on the table is close, "
    "sharpen or combine it instead of repeating it.\n\n"
    "Paper, one numbered sentence per line:\n{paper_numbered}\n\n"
    "Ideas already on the table:\n{current_insp}\n\n"
    "JSON keys:\n"
    "  \"proposal\": the change in 40 words or fewer, e.g. \"depthwise 3x3 then pointwise projection\"\n"
    "  \"rationale\": 40 words or fewer on the expected benefit\n"
    "  \"evidence_refs\": list of sentence numbers from the paper that back it up";

std::map<std::string, PromptTemplate, std::less<>> build_templates()
{
    std::map<std::string, PromptTemplate, std::less<>> t;
    t["subtasks"] = {
        "subtasks",
        std::string("You read vision papers and pull out what they imply for block design. ") + kJsonOnly,
        "List the design levers in the paper below that would change how a network block is built. "
        "Leave out datasets, schedules and training tricks.\n\n"
        "Paper, one numbered sentence per line:\n{paper_numbered}\n\n"
        "JSON keys:\n"
        "  \"tasks\": list of the vision problems the paper addresses\n"
        "  \"sub_tasks\": list of at most 4 design dimensions, e.g. \"receptive field\" or \"normalization placement\"\n"
        "  \"keywords\": list of at most 5 concrete operators or motifs the paper relies on"};
    t["expert"] = {"expert", std::string("You are the specialist for one design dimension: {field}. ") + kJsonOnly,
                   kExpertUser};
    t["reflect"] = {"reflect",
                    std::string("You are the specialist for one design dimension: {field}. ") + kJsonOnly,
                    kExpertUser +
                        "\n\nNotes from earlier search steps, newest last:\n{reflections}\n"
                        "Lean away from changes the notes show losing accuracy."};
    t["merge"] = {"merge", std::string("You consolidate proposals from several specialists. ") + kJsonOnly,
                  "The specialists' answers follow as a JSON array. Fold together proposals that describe the "
                  "same change, drop repeats, and keep what remains varied.\n\n"
                  "Proposals:\n{proposals}\n\n"
                  "JSON keys:\n"
                  "  \"inspirations\": list of at most 4 design ideas, each 40 words or fewer"};
    t["summary"] = {"summary", std::string("You keep short notes on an architecture search. ") + kJsonOnly,
                    "Step {step} applied \"{inspiration}\"; accuracy moved by {reward}. Outcome: {outcome}\n\n"
                    "Earlier notes:\n{reflections}\n\n"
                    "JSON keys:\n"
                    "  \"summary\": at most 60 words on what this step means for the next one"};
    return t;
}

std::map<std::string, JsonSchema, std::less<>> build_schemas()
{
    std::map<std::string, JsonSchema, std::less<>> s;
    s["subtasks"] = {"subtasks",
                     {{"tasks", FieldKind::string_list, false},
                      {"sub_tasks", FieldKind::string_list, true},
                      {"keywords", FieldKind::string_list, false}}};
    const JsonSchema proposal{"expert",
                              {{"proposal", FieldKind::string, true},
                               {"rationale", FieldKind::string, false},
                               {"evidence_refs", FieldKind::int_list, false}}};
    s["expert"] = proposal;
    s["reflect"] = proposal;
    s["reflect"].name = "reflect";
    s["merge"] = {"merge", {{"inspirations", FieldKind::string_list, true}}};
    s["summary"] = {"summary", {{"summary", FieldKind::string, true}}};
    return s;
}

std::string collapse_spaces(std::string_view text)
{
    std::string out;
    bool space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
        } else {
            if (space) {
                out.push_back(' ');
                space = false;
            }
            out.push_back(c);
        }
    }
    return out;
}

std::string redact(std::string text, const std::string& secret)
{
    if (secret.empty()) {
        return text;
    }
    for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
        text.replace(pos, secret.size(), "[REDACTED]");
    }
    return text;
}

} // namespace

std::vector<std::string> PromptTemplate::placeholders() const
{
    std::set<std::string> seen;
    for (const auto* part : {&system, &user}) {
        for (std::sregex_iterator it(part->begin(), part->end(), placeholder_re()), end; it != end; ++it) {
            seen.insert((*it)[1]);
        }
    }
    return {seen.begin(), seen.end()};
}

const PromptTemplate& prompt_template(std::string_view name)
{
    static const auto templates = build_templates();
    auto it = templates.find(name);
    if (it == templates.end()) {
        throw Error("UNKNOWN_TEMPLATE", std::string(name));
    }
    return it->second;
}

const JsonSchema& schema_for(std::string_view template_name)
{
    static const auto schemas = build_schemas();
    auto it = schemas.find(template_name);
    if (it == schemas.end()) {
        throw Error("UNKNOWN_TEMPLATE", std::string(template_name));
    }
    return it->second;
}

std::string fill(const std::string& text, const Bindings& bindings)
{
    std::string out;
    auto last = text.cbegin();
    for (std::sregex_iterator it(text.begin(), text.end(), placeholder_re()), end; it != end; ++it) {
        const auto& m = *it;
        auto b = bindings.find(m[1]);
        if (b == bindings.end()) {
            throw Error("UNBOUND_PLACEHOLDER", "no binding for {" + m[1].str() + "}");
        }
        out.append(last, m[0].first);
        out += b->second;
        last = m[0].second;
    }
    out.append(last, text.cend());
    return out;
}

ChatRequest render(const PromptTemplate& t, const Bindings& bindings, const ProviderConfig& cfg,
                   const std::string& caller)
{
    ChatRequest r;
    r.template_name = t.name;
    r.caller = caller;
    r.model = cfg.model;
    r.temperature = cfg.temperature;
    r.top_p = cfg.top_p;
    r.max_tokens = cfg.max_tokens;
    r.messages = {{"system", fill(t.system, bindings)}, {"user", fill(t.user, bindings)}};
    return r;
}

std::string number_sentences(std::string_view text)
{
    std::vector<std::string> sentences;
    std::string current;
    for (std::size_t i = 0; i < text.size(); ++i) {
        current.push_back(text[i]);
        const bool boundary =
            text[i] == '.' && (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])));
        if (boundary) {
            if (auto s = collapse_spaces(current); !s.empty()) {
                sentences.push_back(s);
            }
            current.clear();
        }
    }
    if (auto s = collapse_spaces(current); !s.empty()) {
        sentences.push_back(s);
    }
    std::string out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i > 0) {
            out.push_back('\n');
        }
        out += "[" + std::to_string(i + 1) + "] " + sentences[i];
    }
    return out;
}

std::optional<json> extract_json_object(std::string_view body)
{
    // Fences need no special handling: the scan starts at each '{' in turn.
    for (std::size_t start = body.find('{'); start != std::string_view::npos; start = body.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < body.size(); ++i) {
            const char c = body[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}' && --depth == 0) {
                auto parsed = json::parse(body.substr(start, i - start + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object()) {
                    return parsed;
                }
                break;
            }
        }
    }
    return std::nullopt;
}

std::optional<std::string> JsonSchema::check(const json& j) const
{
    if (!j.is_object()) {
        return "top level must be an object";
    }
    for (const auto& f : fields) {
        auto it = j.find(f.key);
        if (it == j.end() || it->is_null()) {
            if (f.required) {
                return "missing required key \"" + f.key + "\"";
            }
            continue;
        }
        switch (f.kind) {
        case FieldKind::string:
            if (!it->is_string() || it->get<std::string>().find_first_not_of(" \t\n") == std::string::npos) {
                return "key \"" + f.key + "\" must be a non-empty string";
            }
            break;
        case FieldKind::string_list:
            if (!it->is_array() || !std::all_of(it->begin(), it->end(), [](const json& e) { return e.is_string(); })) {
                return "key \"" + f.key + "\" must be a list of strings";
            }
            break;
        case FieldKind::int_list:
            if (!it->is_array() ||
                !std::all_of(it->begin(), it->end(), [](const json& e) { return e.is_number_integer(); })) {
                return "key \"" + f.key + "\" must be a list of integers";
            }
            break;
        }
    }
    return std::nullopt;
}

void FairLimiter::acquire()
{
    std::unique_lock lock(mu_);
    const auto ticket = next_ticket_++;
    cv_.wait(lock, [&] { return serving_ == ticket && in_flight_ < permits_; });
    ++serving_;
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
    cv_.notify_all();
}

void FairLimiter::release()
{
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_all();
}

int FairLimiter::peak() const
{
    std::lock_guard lock(mu_);
    return peak_;
}

std::vector<double> hash_embedding(std::string_view text)
{
    static constexpr std::uint64_t kSeed = fnv1a("archevo/embedding/v1");
    std::vector<double> v(kEmbeddingDim, 0.0);
    std::string token;
    bool any = false;
    auto flush = [&] {
        if (!token.empty()) {
            v[fnv1a(token, kSeed) % kEmbeddingDim] += 1.0;
            token.clear();
            any = true;
        }
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            token.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    if (!any) {
        throw Error("EMPTY_TEXT", "cannot embed text without tokens");
    }
    double norm = 0.0;
    for (double x : v) {
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) {
        x /= norm;
    }
    return v;
}

std::string truncate_words(std::string_view text, std::size_t limit, bool* truncated)
{
    std::istringstream in{std::string(text)};
    std::vector<std::string> words;
    for (std::string w; in >> w;) {
        words.push_back(w);
    }
    if (truncated != nullptr) {
        *truncated = words.size() > limit;
    }
    if (words.size() <= limit) {
        return collapse_spaces(text);
    }
    std::string out;
    for (std::size_t i = 0; i < limit; ++i) {
        out += (i ? " " : "") + words[i];
    }
    return out;
}

std::size_t word_count(std::string_view text)
{
    std::istringstream in{std::string(text)};
    std::size_t n = 0;
    for (std::string w; in >> w;) {
        ++n;
    }
    return n;
}

Gateway::Gateway(Provider& provider, ProviderConfig cfg)
    : provider_(provider), cfg_(std::move(cfg)), limiter_(cfg_.max_in_flight)
{
}

json Gateway::call_json(const std::string& template_name, const Bindings& bindings, const std::string& caller)
{
    const auto& schema = schema_for(template_name);
    const ChatRequest base = render(prompt_template(template_name), bindings, cfg_, caller);
    std::vector<std::string> bodies;
    std::string problem;
    const int attempts = std::max(1, cfg_.retries);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        ChatRequest req = base;
        if (attempt > 0) {
            req.messages.back().content +=
                "\n\nYour previous reply was rejected (" + problem + "). " + std::string(kJsonOnly);
        }
        bodies.push_back(round_trip(req));
        auto obj = extract_json_object(bodies.back());
        if (!obj) {
            problem = "no JSON object found";
            continue;
        }
        if (auto v = schema.check(*obj)) {
            problem = *v;
            continue;
        }
        return *obj;
    }
    throw SchemaViolation(template_name + " reply rejected after " + std::to_string(attempts) +
                              " attempts: " + problem,
                          std::move(bodies));
}

std::vector<double> Gateway::embed(const std::string& text)
{
    auto fallback = hash_embedding(text); // also enforces EMPTY_TEXT
    if (auto live = provider_.embed(text)) {
        double norm = 0.0;
        for (double x : *live) {
            norm += x * x;
        }
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& x : *live) {
                x /= norm;
            }
            return *live;
        }
    }
    return fallback;
}

std::string Gateway::round_trip(const ChatRequest& request)
{
    struct Permit {
        FairLimiter& l;
        explicit Permit(FairLimiter& lim) : l(lim) { l.acquire(); }
        ~Permit() { l.release(); }
    } permit(limiter_);
    {
        std::lock_guard lock(mu_);
        ++calls_[request.template_name];
    }
    try {
        std::string body = provider_.complete(request);
        audit(request, body, {});
        return body;
    } catch (const Error& e) {
        audit(request, {}, e.what());
        throw;
    }
}

void Gateway::audit(const ChatRequest& request, const std::string& response, const std::string& error)
{
    if (cfg_.audit_log.empty()) {
        return;
    }
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    const std::string secret = key != nullptr ? key : "";
    json line = {{"template", request.template_name},
                 {"caller", request.caller},
                 {"request", redact(request_payload(request), secret)},
                 {"response", redact(response, secret)}};
    if (!error.empty()) {
        line["error"] = redact(error, secret);
    }
    std::lock_guard lock(mu_);
    std::ofstream out(cfg_.audit_log, std::ios::app);
    out << line.dump() << '\n';
}

std::map<std::string, std::uint64_t> Gateway::call_counts() const
{
    std::lock_guard lock(mu_);
    return calls_;
}

std::uint64_t Gateway::total_calls() const
{
    std::lock_guard lock(mu_);
    std::uint64_t n = 0;
    for (const auto& [_, c] : calls_) {
        n += c;
    }
    return n;
}

void Gateway::restore_call_counts(const std::map<std::string, std::uint64_t>& counts)
{
    std::lock_guard lock(mu_);
    calls_ = counts;
}

} // namespace archevo
