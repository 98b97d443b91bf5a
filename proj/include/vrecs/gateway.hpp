#pragma once

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vrecs/errors.hpp"
#include "vrecs/prompt.hpp"
#include "vrecs/util.hpp"

namespace vrecs::gateway {

using Millis = std::chrono::milliseconds;

// ---------------------------------------------------------------------------
// time

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::chrono::steady_clock::time_point now() const = 0;
    virtual void sleep_for(Millis d) = 0;
};

class SteadyClock final : public Clock {
public:
    std::chrono::steady_clock::time_point now() const override { return std::chrono::steady_clock::now(); }
    void sleep_for(Millis d) override { std::this_thread::sleep_for(d); }
};

/// Manually advanced clock; sleeping advances time instantly and is recorded.
class VirtualClock final : public Clock {
public:
    std::chrono::steady_clock::time_point now() const override {
        std::lock_guard lock(mu_);
        return now_;
    }

    void sleep_for(Millis d) override {
        std::lock_guard lock(mu_);
        now_ += d;
        sleeps_.push_back(d);
    }

    void advance(Millis d) {
        std::lock_guard lock(mu_);
        now_ += d;
    }

    std::vector<Millis> sleeps() const {
        std::lock_guard lock(mu_);
        return sleeps_;
    }

private:
    mutable std::mutex mu_;
    std::chrono::steady_clock::time_point now_{};
    std::vector<Millis> sleeps_;
};

// ---------------------------------------------------------------------------
// mock backend

struct MockRule {
    enum class Kind { prompt_sha256, contains, regex };
    Kind kind = Kind::contains;
    std::string pattern;
    std::string response;
};

/// Deterministic prompt → response routing. Exact prompt-hash rules are
/// consulted first, then substring/regex rules, which must be disjoint.
class MockScript {
public:
    MockScript() = default;

    explicit MockScript(std::vector<MockRule> rules) {
        for (auto& r : rules) add(std::move(r));
    }

    void add(MockRule rule) {
        if (rule.kind == MockRule::Kind::prompt_sha256) {
            by_hash_[rule.pattern] = std::move(rule.response);
            return;
        }
        if (rule.kind == MockRule::Kind::regex) regexes_.emplace_back(rule.pattern);
        else regexes_.emplace_back();
        rules_.push_back(std::move(rule));
    }

    void add_exact(std::string_view prompt, std::string response) {
        add({MockRule::Kind::prompt_sha256, util::sha256_hex(prompt), std::move(response)});
    }

    const std::string& match(std::string_view prompt) const {
        if (!by_hash_.empty()) {
            if (auto it = by_hash_.find(util::sha256_hex(prompt)); it != by_hash_.end()) return it->second;
        }
        const std::string* hit = nullptr;
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            bool ok = rules_[i].kind == MockRule::Kind::regex
                          ? std::regex_search(prompt.begin(), prompt.end(), regexes_[i])
                          : prompt.find(rules_[i].pattern) != std::string_view::npos;
            if (!ok) continue;
            if (hit) throw InvalidArgument("mock script patterns overlap on prompt");
            hit = &rules_[i].response;
        }
        if (!hit) throw UnmatchedPrompt("no mock rule matches the prompt");
        return *hit;
    }

    std::size_t size() const { return by_hash_.size() + rules_.size(); }

    nlohmann::json to_json() const {
        nlohmann::json rules = nlohmann::json::array();
        for (const auto& [hash, response] : by_hash_) rules.push_back({{"prompt_sha256", hash}, {"response", response}});
        for (const auto& r : rules_) {
            rules.push_back({{r.kind == MockRule::Kind::regex ? "regex" : "contains", r.pattern}, {"response", r.response}});
        }
        return {{"rules", std::move(rules)}};
    }

    /// Accepts {"rules":[{"contains"|"regex"|"prompt_sha256": ..., "response": ...}]}
    /// or a flat {"substring": "response"} object.
    static MockScript from_json(const nlohmann::json& j) {
        MockScript s;
        if (j.contains("rules")) {
            for (const auto& r : j.at("rules")) {
                MockRule rule;
                if (r.contains("prompt_sha256")) {
                    rule.kind = MockRule::Kind::prompt_sha256;
                    rule.pattern = r.at("prompt_sha256").get<std::string>();
                } else if (r.contains("regex")) {
                    rule.kind = MockRule::Kind::regex;
                    rule.pattern = r.at("regex").get<std::string>();
                } else {
                    rule.pattern = r.at("contains").get<std::string>();
                }
                rule.response = r.at("response").get<std::string>();
                s.add(std::move(rule));
            }
            return s;
        }
        for (const auto& [k, v] : j.items()) s.add({MockRule::Kind::contains, k, v.get<std::string>()});
        return s;
    }

private:
    std::map<std::string, std::string> by_hash_;
    std::vector<MockRule> rules_;
    std::vector<std::regex> regexes_;
};

// ---------------------------------------------------------------------------
// configuration and results

struct BackendConfig {
    std::string base_url;
    std::string model_name;
    std::string api_key_ref;  // name of the environment variable holding the key
    double temperature = 0.0;
    int max_tokens = 1024;
    Millis timeout{60'000};
    int max_retries = 3;
    int rate_limit = 60;  // requests per minute, <= 0 disables
    std::shared_ptr<const MockScript> mock;

    bool is_mock() const { return mock != nullptr; }
};

inline BackendConfig mock_backend(MockScript script, std::string model_name = "mock") {
    BackendConfig c;
    c.base_url = "mock://";
    c.model_name = std::move(model_name);
    c.rate_limit = 0;
    c.mock = std::make_shared<const MockScript>(std::move(script));
    return c;
}

struct Completion {
    std::string text;
    std::string backend;
    std::chrono::duration<double, std::milli> latency{0};
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    bool cached = false;
    int retries = 0;
};

// ---------------------------------------------------------------------------
// transport

struct HttpReply {
    int status = 0;
    std::string body;
    bool transport_error = false;
    std::string error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpReply post(const std::string& url, const httplib::Headers& headers, const std::string& body,
                           Millis timeout) = 0;
};

class HttplibTransport final : public Transport {
public:
    HttpReply post(const std::string& url, const httplib::Headers& headers, const std::string& body,
                   Millis timeout) override {
        static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
        std::smatch m;
        if (!std::regex_match(url, m, url_re)) return {0, "", true, "unsupported URL " + url};
        httplib::Client client(m[1].str());
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
        auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        std::string path = m[2].matched ? m[2].str() : "/";
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) return {0, "", true, httplib::to_string(res.error())};
        return {res->status, res->body, false, ""};
    }
};

// ---------------------------------------------------------------------------
// cache

/// Content-addressed JSON-lines store. Entries are appended and reloaded at
/// construction; a truncated trailing line is ignored.
class CompletionCache {
public:
    struct Entry {
        std::string text;
        std::size_t prompt_tokens = 0;
        std::size_t completion_tokens = 0;
    };

    CompletionCache() = default;

    explicit CompletionCache(std::filesystem::path path) : path_(std::move(path)) {
        if (!std::filesystem::exists(*path_)) return;
        for (const auto& line : util::split_lines(util::read_file(*path_))) {
            if (util::trim(line).empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("key") || !j.contains("text")) continue;
            entries_[j["key"].get<std::string>()] = {j["text"].get<std::string>(), j.value("prompt_tokens", 0u),
                                                     j.value("completion_tokens", 0u)};
        }
    }

    static std::string key(std::string_view template_hash, std::string_view model, double temperature,
                           std::string_view prompt) {
        nlohmann::json k = nlohmann::json::array({template_hash, model, temperature, prompt});
        return util::sha256_hex(k.dump());
    }

    std::optional<Entry> lookup(const std::string& key) const {
        std::lock_guard lock(mu_);
        if (auto it = entries_.find(key); it != entries_.end()) return it->second;
        return std::nullopt;
    }

    void store(const std::string& key, const std::string& model, const Entry& e) {
        std::lock_guard lock(mu_);
        if (!entries_.emplace(key, e).second) return;
        if (path_) {
            nlohmann::json j = {{"key", key},
                                {"model", model},
                                {"text", e.text},
                                {"prompt_tokens", e.prompt_tokens},
                                {"completion_tokens", e.completion_tokens}};
            util::append_line(*path_, j.dump());
        }
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    std::optional<std::filesystem::path> path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// rate limiting

/// Sliding 60-second window: at most `per_minute` dispatches in any window.
class RateLimiter {
public:
    RateLimiter(int per_minute, std::shared_ptr<Clock> clock) : limit_(per_minute), clock_(std::move(clock)) {}

    void acquire() {
        if (limit_ <= 0) return;
        std::lock_guard lock(mu_);
        const auto window = std::chrono::seconds(60);
        for (;;) {
            auto now = clock_->now();
            while (!sent_.empty() && now - sent_.front() >= window) sent_.pop_front();
            if (static_cast<int>(sent_.size()) < limit_) {
                sent_.push_back(now);
                return;
            }
            auto wait = std::chrono::ceil<Millis>(sent_.front() + window - now);
            clock_->sleep_for(std::max(wait, Millis{1}));
        }
    }

private:
    int limit_;
    std::shared_ptr<Clock> clock_;
    std::mutex mu_;
    std::deque<std::chrono::steady_clock::time_point> sent_;
};

// ---------------------------------------------------------------------------
// gateway

struct GatewayOptions {
    std::optional<std::filesystem::path> cache_path;  // usually cache/completions.jsonl
    int concurrency = 4;
    Millis backoff_base{500};
    double backoff_factor = 2.0;
};

inline std::size_t approx_tokens(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        bool space = util::is_space(c);
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

/// Chat-completion client for one backend. Thread-safe; in-flight requests
/// are bounded by `GatewayOptions::concurrency`.
class Gateway {
public:
    explicit Gateway(BackendConfig config, GatewayOptions options = {},
                     std::shared_ptr<Transport> transport = std::make_shared<HttplibTransport>(),
                     std::shared_ptr<Clock> clock = std::make_shared<SteadyClock>())
        : config_(std::move(config)),
          options_(std::move(options)),
          transport_(std::move(transport)),
          clock_(std::move(clock)),
          limiter_(config_.rate_limit, clock_),
          slots_(std::max(1, options_.concurrency)),
          cache_(options_.cache_path ? CompletionCache(*options_.cache_path) : CompletionCache()) {
        if (config_.timeout <= Millis{0}) throw InvalidArgument("timeout must be positive");
        if (config_.temperature < 0) throw InvalidArgument("temperature must be >= 0");
        if (config_.max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
    }

    const BackendConfig& config() const noexcept { return config_; }
    const CompletionCache& cache() const noexcept { return cache_; }

    Completion complete(const prompt::PromptText& prompt) { return complete(prompt.text, prompt.template_hash); }

    Completion complete(std::string_view prompt, std::string_view template_hash = {}) {
        const auto key = CompletionCache::key(template_hash, config_.model_name, config_.temperature, prompt);
        if (auto hit = cache_.lookup(key)) {
            Completion c;
            c.text = hit->text;
            c.backend = config_.model_name;
            c.prompt_tokens = hit->prompt_tokens;
            c.completion_tokens = hit->completion_tokens;
            c.cached = true;
            return c;
        }

        slots_.acquire();
        struct Release {
            std::counting_semaphore<1024>& s;
            ~Release() { s.release(); }
        } release{slots_};

        Completion c = config_.is_mock() ? complete_mock(prompt) : complete_http(prompt);
        cache_.store(key, config_.model_name, {c.text, c.prompt_tokens, c.completion_tokens});
        return c;
    }

    /// Backoff before retry number `attempt` (0-based).
    Millis backoff(int attempt) const {
        double ms = static_cast<double>(options_.backoff_base.count());
        for (int i = 0; i < attempt; ++i) ms *= options_.backoff_factor;
        return Millis{static_cast<Millis::rep>(ms)};
    }

private:
    Completion complete_mock(std::string_view prompt) {
        Completion c;
        c.text = config_.mock->match(prompt);
        c.backend = config_.model_name;
        c.prompt_tokens = approx_tokens(prompt);
        c.completion_tokens = approx_tokens(c.text);
        return c;
    }

    std::string redact(std::string msg, const std::string& secret) const {
        if (secret.empty()) return msg;
        for (auto pos = msg.find(secret); pos != std::string::npos; pos = msg.find(secret, pos)) {
            msg.replace(pos, secret.size(), "***");
        }
        return msg;
    }

    Completion complete_http(std::string_view prompt) {
        std::string api_key;
        if (!config_.api_key_ref.empty()) {
            const char* v = std::getenv(config_.api_key_ref.c_str());
            if (!v) throw AuthError("environment variable " + config_.api_key_ref + " is not set");
            api_key = v;
        }
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

        nlohmann::json body = {{"model", config_.model_name},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                               {"temperature", config_.temperature},
                               {"max_tokens", config_.max_tokens}};
        const std::string payload = body.dump();
        std::string url = config_.base_url;
        while (!url.empty() && url.back() == '/') url.pop_back();
        url += "/chat/completions";

        const auto started = clock_->now();
        std::string last_error;
        for (int attempt = 0;; ++attempt) {
            limiter_.acquire();
            auto reply = transport_->post(url, headers, payload, config_.timeout);
            bool transient = false;
            if (reply.transport_error) {
                transient = true;
                last_error = "transport error: " + reply.error;
            } else if (reply.status == 401 || reply.status == 403) {
                throw AuthError(redact("backend " + config_.model_name + " rejected credentials (HTTP " +
                                           std::to_string(reply.status) + ")",
                                       api_key));
            } else if (reply.status == 429 || reply.status >= 500) {
                transient = true;
                last_error = "HTTP " + std::to_string(reply.status);
            } else if (reply.status >= 200 && reply.status < 300) {
                Completion c = decode(reply.body, api_key);
                c.latency = clock_->now() - started;
                c.retries = attempt;
                return c;
            } else {
                throw BackendUnavailable(redact("backend " + config_.model_name + " returned HTTP " +
                                                    std::to_string(reply.status) + ": " + reply.body.substr(0, 200),
                                                api_key));
            }
            if (transient && attempt >= config_.max_retries) {
                throw BackendUnavailable(redact("backend " + config_.model_name + " unavailable after " +
                                                    std::to_string(attempt + 1) + " attempts (" + last_error + ")",
                                                api_key));
            }
            auto delay = backoff(attempt);
            spdlog::warn("backend {}: {} (attempt {}/{}), retrying in {} ms", config_.model_name,
                         redact(last_error, api_key), attempt + 1, config_.max_retries + 1, delay.count());
            clock_->sleep_for(delay);
        }
    }

    Completion decode(const std::string& body, const std::string& api_key) const {
        auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) throw ResponseMalformed("backend returned a non-JSON body");
        try {
            Completion c;
            c.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
            c.backend = j.value("model", config_.model_name);
            if (j.contains("usage")) {
                c.prompt_tokens = j["usage"].value("prompt_tokens", 0u);
                c.completion_tokens = j["usage"].value("completion_tokens", 0u);
            } else {
                c.completion_tokens = approx_tokens(c.text);
            }
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw ResponseMalformed(redact(std::string("unexpected completion payload: ") + e.what(), api_key));
        }
    }

    BackendConfig config_;
    GatewayOptions options_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<Clock> clock_;
    RateLimiter limiter_;
    std::counting_semaphore<1024> slots_;
    CompletionCache cache_;
};

}  // namespace vrecs::gateway
