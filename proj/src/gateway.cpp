#include "expcot/gateway.hpp"

#include "expcot/errors.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <thread>

namespace expcot {

std::string role_name(Role role) {
    switch (role) {
    case Role::System:
        return "system";
    case Role::User:
        return "user";
    case Role::Assistant:
        return "assistant";
    }
    return "unknown";
}

Role role_from_name(const std::string& name) {
    if (name == "system") {
        return Role::System;
    }
    if (name == "user") {
        return Role::User;
    }
    if (name == "assistant") {
        return Role::Assistant;
    }
    throw Error("unknown chat role: " + name);
}

void DialogueMemory::append(ChatMessage msg) {
    if (msg.content.empty()) {
        throw Error("chat message content must be non-empty");
    }
    if (msg.role == Role::System) {
        if (!messages_.empty()) {
            throw Error("system message only allowed at the start of a dialogue");
        }
    } else {
        const Role last = messages_.empty() ? Role::System : messages_.back().role;
        const Role expected = (last == Role::User) ? Role::Assistant : Role::User;
        if (msg.role != expected) {
            throw Error("dialogue roles must alternate user/assistant; got " +
                        role_name(msg.role) + " after " + role_name(last));
        }
    }
    messages_.push_back(std::move(msg));
}

nlohmann::json DialogueMemory::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : messages_) {
        arr.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    return nlohmann::json{{"sample_id", sample_id_}, {"messages", arr}};
}

void GenerationConfig::validate() const {
    if (temperature < 0.0) {
        throw ConfigError("temperature must be >= 0");
    }
    if (max_output_tokens <= 0) {
        throw ConfigError("max_output_tokens must be positive");
    }
    if (retry_limit < 0 || retry_limit > 10) {
        throw ConfigError("retry_limit must be in [0, 10]");
    }
    if (timeout.count() <= 0) {
        throw ConfigError("timeout must be positive");
    }
}

namespace {

nlohmann::json messages_to_json(const std::vector<ChatMessage>& messages) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : messages) {
        arr.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    return arr;
}

struct UrlParts {
    std::string host_port; // scheme://host:port
    std::string path;
};

UrlParts split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint URL must include a scheme: " + url);
    }
    auto path_begin = url.find('/', scheme_end + 3);
    if (path_begin == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_begin), url.substr(path_begin)};
}

bool retryable_status(int status) {
    return status == 429 || status >= 500;
}

} // namespace

HttpChatBackend::HttpChatBackend(std::string endpoint, std::string model, std::string api_key)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), api_key_(std::move(api_key)) {}

std::string HttpChatBackend::complete(const std::vector<ChatMessage>& messages,
                                      const GenerationConfig& cfg, const CallContext& ctx) {
    const UrlParts url = split_url(endpoint_);

    httplib::Client client(url.host_port);
    client.set_connection_timeout(cfg.timeout.count(), 0);
    client.set_read_timeout(cfg.timeout.count(), 0);
    client.set_write_timeout(cfg.timeout.count(), 0);

    httplib::Headers headers;
    if (!api_key_.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key_);
    }

    const nlohmann::json payload = {
        {"model", model_},
        {"messages", messages_to_json(messages)},
        {"temperature", cfg.temperature},
        {"max_tokens", cfg.max_output_tokens},
    };

    auto res = client.Post(url.path, headers, payload.dump(), "application/json");
    if (!res) {
        throw TransportError(ctx.sample_id, ctx.stage,
                             "connection failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        const std::string what = "HTTP " + std::to_string(res->status) + ": " + res->body;
        if (retryable_status(res->status)) {
            throw TransportError(ctx.sample_id, ctx.stage, what);
        }
        // auth/validation errors will not heal on retry
        throw ConfigError("[" + ctx.sample_id + "/" + ctx.stage + "] " + what);
    }

    try {
        const nlohmann::json body = nlohmann::json::parse(res->body);
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(ctx.sample_id, ctx.stage,
                             std::string("malformed response: ") + e.what());
    }
}

namespace {

std::string script_key(const std::string& sample_id, const std::string& stage, int round) {
    return sample_id + "|" + stage + "|" + std::to_string(round);
}

} // namespace

void ScriptedBackend::script(const std::string& sample_id, const std::string& stage, int round,
                             std::string response) {
    keyed_[script_key(sample_id, stage, round)] = std::move(response);
}

void ScriptedBackend::script_stage(const std::string& stage, int round, std::string response) {
    keyed_[script_key("", stage, round)] = std::move(response);
}

void ScriptedBackend::push_default(std::string response) {
    default_queue_.push_back(std::move(response));
}

std::string ScriptedBackend::complete(const std::vector<ChatMessage>&, const GenerationConfig&,
                                      const CallContext& ctx) {
    const std::string keys[4] = {
        script_key(ctx.sample_id, ctx.stage, ctx.round),
        script_key(ctx.sample_id, ctx.stage, kAnyRound),
        script_key("", ctx.stage, ctx.round),
        script_key("", ctx.stage, kAnyRound),
    };
    {
        std::lock_guard<std::mutex> lock(mutex_);
        ++calls_served_;
    }
    for (const auto& key : keys) {
        auto it = keyed_.find(key);
        if (it != keyed_.end()) {
            return it->second;
        }
    }
    std::lock_guard<std::mutex> lock(mutex_);
    if (!default_queue_.empty()) {
        std::string response = std::move(default_queue_.front());
        default_queue_.pop_front();
        return response;
    }
    throw TransportError(ctx.sample_id, ctx.stage,
                         "scripted backend exhausted (round " + std::to_string(ctx.round) + ")");
}

int ScriptedBackend::calls_served() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return calls_served_;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_script_file(
    const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open mock script: " + file.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad mock script " + file.string() + ": " + e.what());
    }
    auto backend = std::make_shared<ScriptedBackend>();
    for (const auto& entry : doc.value("keyed", nlohmann::json::array())) {
        backend->script(entry.value("sample_id", ""), entry.at("stage").get<std::string>(),
                        entry.value("round", kAnyRound), entry.at("response").get<std::string>());
    }
    for (const auto& resp : doc.value("default_queue", nlohmann::json::array())) {
        backend->push_default(resp.get<std::string>());
    }
    return backend;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_transcript(
    const std::filesystem::path& file) {
    auto backend = std::make_shared<ScriptedBackend>();
    for (const auto& entry : TranscriptLog::read_all(file)) {
        backend->script(entry.sample_id, entry.stage, entry.round, entry.response);
    }
    return backend;
}

RateLimiter::RateLimiter(double requests_per_second, double burst_capacity)
    : tokens_(burst_capacity),
      capacity_(burst_capacity),
      refill_per_second_(requests_per_second),
      last_refill_(std::chrono::steady_clock::now()) {
    if (requests_per_second <= 0 || burst_capacity < 1) {
        throw ConfigError("rate limiter needs requests_per_second > 0 and burst >= 1");
    }
}

void RateLimiter::refill_locked() {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_refill_).count();
    last_refill_ = now;
    tokens_ = std::min(capacity_, tokens_ + elapsed * refill_per_second_);
}

bool RateLimiter::try_acquire() {
    std::lock_guard<std::mutex> lock(mutex_);
    refill_locked();
    if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return true;
    }
    return false;
}

void RateLimiter::acquire() {
    for (;;) {
        double deficit;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            refill_locked();
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            deficit = 1.0 - tokens_;
        }
        const auto wait = std::chrono::duration<double>(deficit / refill_per_second_);
        std::this_thread::sleep_for(
            std::min(std::chrono::duration<double>(0.05), wait));
    }
}

namespace {

std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto millis =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() %
        1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<int>(millis));
    return buf;
}

} // namespace

TranscriptLog::TranscriptLog(const std::filesystem::path& file) : path_(file) {
    if (file.has_parent_path()) {
        std::filesystem::create_directories(file.parent_path());
    }
    out_ = std::make_unique<std::ofstream>(file, std::ios::app);
    if (!*out_) {
        throw ConfigError("cannot open transcript log for append: " + file.string());
    }
}

TranscriptLog::~TranscriptLog() = default;

void TranscriptLog::append(const CallContext& ctx, const std::vector<ChatMessage>& request,
                           const std::string& response, int attempt_count) {
    const nlohmann::json entry = {
        {"sample_id", ctx.sample_id},
        {"stage", ctx.stage},
        {"round", ctx.round},
        {"request_messages", messages_to_json(request)},
        {"response", response},
        {"timestamp", iso8601_now()},
        {"attempt_count", attempt_count},
    };
    std::lock_guard<std::mutex> lock(mutex_);
    *out_ << entry.dump() << "\n";
    out_->flush();
}

std::vector<TranscriptLog::Entry> TranscriptLog::read_all(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open transcript: " + file.string());
    }
    std::vector<Entry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const nlohmann::json j = nlohmann::json::parse(line);
        Entry e;
        e.sample_id = j.at("sample_id").get<std::string>();
        e.stage = j.at("stage").get<std::string>();
        e.round = j.at("round").get<int>();
        for (const auto& m : j.at("request_messages")) {
            e.request_messages.push_back(ChatMessage{
                role_from_name(m.at("role").get<std::string>()),
                m.at("content").get<std::string>(),
            });
        }
        e.response = j.at("response").get<std::string>();
        e.timestamp = j.at("timestamp").get<std::string>();
        e.attempt_count = j.at("attempt_count").get<int>();
        entries.push_back(std::move(e));
    }
    return entries;
}

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<TranscriptLog> transcript,
                 GatewayOptions options)
    : backend_(std::move(backend)),
      transcript_(std::move(transcript)),
      limiter_(options.requests_per_second, options.burst_capacity),
      options_(options) {
    if (!backend_ || !transcript_) {
        throw ConfigError("gateway needs both a backend and a transcript log");
    }
}

ChatMessage Gateway::complete(const DialogueMemory& memory, const GenerationConfig& cfg,
                              const CallContext& ctx) {
    cfg.validate();
    if (!memory.ends_with_user()) {
        throw Error("[" + ctx.sample_id + "/" + ctx.stage +
                    "] dialogue must end with a user message before completion");
    }

    thread_local std::mt19937_64 jitter_rng(std::random_device{}());

    const int max_attempts = 1 + cfg.retry_limit;
    std::string last_error;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        limiter_.acquire();
        try {
            std::string response = backend_->complete(memory.messages(), cfg, ctx);
            if (response.empty()) {
                throw TransportError(ctx.sample_id, ctx.stage, "empty completion");
            }
            transcript_->append(ctx, memory.messages(), response, attempt);
            return ChatMessage{Role::Assistant, std::move(response)};
        } catch (const TransportError& e) {
            last_error = e.what();
            if (attempt == max_attempts) {
                break;
            }
            // exponential backoff with jitter in [0.5, 1.5) of the base step
            const double jitter =
                0.5 + (static_cast<double>(jitter_rng() >> 11) / 9007199254740992.0);
            const auto delay = std::chrono::duration_cast<std::chrono::milliseconds>(
                options_.backoff_base * (1 << (attempt - 1)) * jitter);
            std::this_thread::sleep_for(delay);
        }
    }
    throw TransportError(ctx.sample_id, ctx.stage,
                         "gave up after " + std::to_string(max_attempts) +
                             " attempt(s): " + last_error);
}

} // namespace expcot
