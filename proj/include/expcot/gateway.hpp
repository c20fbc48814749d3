#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace expcot {

enum class Role {
    System,
    User,
    Assistant,
};

std::string role_name(Role role);
Role role_from_name(const std::string& name);

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

// Append-only conversation transcript for one sample. Roles must alternate
// user/assistant after at most one leading system message.
class DialogueMemory {
public:
    explicit DialogueMemory(std::string sample_id) : sample_id_(std::move(sample_id)) {}

    void append(ChatMessage msg);
    DialogueMemory fork() const { return *this; }

    const std::vector<ChatMessage>& messages() const { return messages_; }
    const std::string& sample_id() const { return sample_id_; }
    bool ends_with_user() const {
        return !messages_.empty() && messages_.back().role == Role::User;
    }

    nlohmann::json to_json() const;

private:
    std::string sample_id_;
    std::vector<ChatMessage> messages_;
};

struct GenerationConfig {
    double temperature = 0.7;
    int max_output_tokens = 1024;
    int retry_limit = 3; // retries after the first attempt, at most 10
    std::chrono::seconds timeout{60};

    void validate() const;
};

// Provenance attached to every backend call; keys the scripted mock and the
// transcript log.
struct CallContext {
    std::string sample_id;
    std::string stage;
    int round = 1;
};

// One chat completion transport. Implementations must be safe for
// concurrent complete() calls.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    // Returns the assistant text for one request or throws TransportError.
    virtual std::string complete(const std::vector<ChatMessage>& messages,
                                 const GenerationConfig& cfg, const CallContext& ctx) = 0;
};

// Generic chat-completion HTTP backend (OpenAI-compatible wire format).
class HttpChatBackend : public ChatBackend {
public:
    HttpChatBackend(std::string endpoint, std::string model, std::string api_key);

    std::string complete(const std::vector<ChatMessage>& messages, const GenerationConfig& cfg,
                         const CallContext& ctx) override;

private:
    std::string endpoint_; // e.g. http://host:port/v1/chat/completions
    std::string model_;
    std::string api_key_;
};

// Deterministic scripted backend for tests and replays. Lookup order:
//   (sample_id, stage, round) -> (sample_id, stage, any round)
//   -> (stage, round) -> (stage, any round) -> default queue.
// Responses resolved through keys are a pure function of the call context,
// so batch outputs are independent of scheduling order.
class ScriptedBackend : public ChatBackend {
public:
    static constexpr int kAnyRound = 0;

    void script(const std::string& sample_id, const std::string& stage, int round,
                std::string response);
    void script_stage(const std::string& stage, int round, std::string response);
    void push_default(std::string response);

    static std::shared_ptr<ScriptedBackend> from_script_file(const std::filesystem::path& file);
    // Rebuilds the keyed script from a transcript log, serving each recorded
    // response for its (sample_id, stage, round).
    static std::shared_ptr<ScriptedBackend> from_transcript(const std::filesystem::path& file);

    std::string complete(const std::vector<ChatMessage>& messages, const GenerationConfig& cfg,
                         const CallContext& ctx) override;

    int calls_served() const;

private:
    std::map<std::string, std::string> keyed_;
    mutable std::mutex mutex_;
    std::deque<std::string> default_queue_;
    int calls_served_ = 0;
};

// Shared token bucket. acquire() blocks until a token is available.
class RateLimiter {
public:
    RateLimiter(double requests_per_second, double burst_capacity);

    void acquire();
    bool try_acquire();

private:
    void refill_locked();

    std::mutex mutex_;
    double tokens_;
    double capacity_;
    double refill_per_second_;
    std::chrono::steady_clock::time_point last_refill_;
};

// Append-only JSON Lines record stream, one object per request/response:
// {sample_id, stage, round, request_messages, response, timestamp,
//  attempt_count}. Safe for concurrent append.
class TranscriptLog {
public:
    explicit TranscriptLog(const std::filesystem::path& file);
    ~TranscriptLog();

    void append(const CallContext& ctx, const std::vector<ChatMessage>& request,
                const std::string& response, int attempt_count);

    const std::filesystem::path& path() const { return path_; }

    struct Entry {
        std::string sample_id;
        std::string stage;
        int round = 0;
        std::vector<ChatMessage> request_messages;
        std::string response;
        std::string timestamp;
        int attempt_count = 0;
    };
    static std::vector<Entry> read_all(const std::filesystem::path& file);

private:
    std::filesystem::path path_;
    std::mutex mutex_;
    std::unique_ptr<std::ofstream> out_;
};

struct GatewayOptions {
    double requests_per_second = 10.0;
    double burst_capacity = 20.0;
    std::chrono::milliseconds backoff_base{250};
};

// Uniform completion front end: rate limiting, bounded retries with
// exponential backoff, and transcript persistence around one ChatBackend.
class Gateway {
public:
    Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<TranscriptLog> transcript,
            GatewayOptions options = {});

    // memory must end with a user message. The returned assistant message is
    // not appended; the caller owns the memory. The request/response pair is
    // written to the transcript before returning.
    ChatMessage complete(const DialogueMemory& memory, const GenerationConfig& cfg,
                         const CallContext& ctx);

    TranscriptLog& transcript() { return *transcript_; }

private:
    std::shared_ptr<ChatBackend> backend_;
    std::shared_ptr<TranscriptLog> transcript_;
    RateLimiter limiter_;
    GatewayOptions options_;
};

} // namespace expcot
