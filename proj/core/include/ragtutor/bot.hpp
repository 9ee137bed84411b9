#pragma once

#include "ragtutor/error.hpp"
#include "ragtutor/rag.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

namespace httplib {
class Client;
}

namespace ragtutor {

struct RuntimeConfig;

/// Telegram caps one message at this many characters.
inline constexpr std::size_t kTelegramMessageLimit = 4096;

struct IncomingMessage {
    std::int64_t update_id = 0;
    std::int64_t chat_id = 0;
    std::string text;
    std::chrono::system_clock::time_point received_at{};
};

struct PollResult {
    std::vector<IncomingMessage> messages;
    std::int64_t next_offset = 0;
};

/// 429 from the Bot API; wait retry_after before trying again.
class RateLimitedError : public TransportError {
public:
    RateLimitedError(const std::string& what, std::chrono::seconds retry_after)
        : TransportError(what), retry_after_(retry_after) {}
    std::chrono::seconds retry_after() const noexcept { return retry_after_; }

private:
    std::chrono::seconds retry_after_;
};

struct BackoffPolicy {
    std::chrono::milliseconds base{1000};
    std::chrono::milliseconds cap{60000};

    /// base * 2^(failures-1), capped. failures counts from 1.
    std::chrono::milliseconds delay(int failures) const;
};

/// Sleep for `d` or until stop is requested. Returns false if interrupted.
bool sleep_interruptible(std::chrono::milliseconds d, std::stop_token stop);

/// Single-attempt calls to the Bot API subset we need. The token only ever
/// appears in request paths; no error message or log line contains it.
class TelegramClient {
public:
    TelegramClient(std::string api_base, std::string token);
    ~TelegramClient();

    TelegramClient(const TelegramClient&) = delete;
    TelegramClient& operator=(const TelegramClient&) = delete;

    /// getUpdates long poll. Non-text updates are skipped but still move the
    /// offset. Throws AuthError on 401, RateLimitedError on 429,
    /// TransportError or ProtocolError otherwise.
    PollResult get_updates(std::int64_t offset, int timeout_s);

    /// sendMessage with a text of at most kTelegramMessageLimit characters.
    void send_message(std::int64_t chat_id, std::string_view text);

    /// Abort a long poll in progress (from another thread).
    void cancel();

private:
    std::string method_path(std::string_view method) const;

    std::string base_path_;
    std::string token_;
    std::unique_ptr<httplib::Client> poll_client_;
    std::unique_ptr<httplib::Client> send_client_;
    std::mutex send_mu_;
};

/// Long-poll until a fetch succeeds, backing off between failures; the
/// offset never moves on failure. AuthError propagates. If `stop` fires
/// first, returns no messages and the offset unchanged.
PollResult poll_updates(TelegramClient& client, std::int64_t offset, int timeout_s, const BackoffPolicy& backoff,
                        std::stop_token stop = {});

struct SendPolicy {
    int max_retries = 3;
    BackoffPolicy backoff{};
};

struct DeliveryReport {
    std::size_t parts = 0;
    std::size_t delivered = 0;
    int retries = 0;
    bool dropped = false;
};

/// Split at the last whitespace before `limit` characters (a part keeps
/// that whitespace at its end); hard split when a part has no whitespace.
/// Concatenating the parts gives back `text`.
std::vector<std::string> split_message(std::string_view text, std::size_t limit = kTelegramMessageLimit);

/// Send `text` as one or more parts. A 429 waits the server's retry_after;
/// other failures back off. After max_retries failed retries on a part the
/// rest of the message is dropped and logged. Throws ArgumentError on empty text.
DeliveryReport send_reply(TelegramClient& client, std::int64_t chat_id, std::string_view text,
                          const SendPolicy& policy = {}, std::stop_token stop = {});

/// Answer text followed by a "Sources:" list when there are citations.
std::string format_reply(const Answer& answer);

using QuestionHandler = std::function<Answer(const std::string& question)>;

struct BotOptions {
    int poll_timeout_s = 30;
    BackoffPolicy poll_backoff{};
    SendPolicy send{};
    std::string greeting =
        "Hello! I am the course assistant. Ask me a question about the course material and I will "
        "answer from the lecture slides and textbook, citing the sources I used.";
    std::string apology = "Sorry, something went wrong while answering your question. Please try again later.";
};

/// Polling loop plus one worker that answers queued messages in FIFO order,
/// so at most one generation runs at a time.
class Bot {
public:
    Bot(TelegramClient& client, QuestionHandler handler, BotOptions options = {});

    /// Blocks until `stop` is requested (or AuthError). On stop the
    /// message being answered is finished and sent; queued ones are dropped.
    void run(std::stop_token stop);

    std::int64_t next_offset() const;
    std::size_t handled() const;

private:
    void worker_loop(std::stop_token stop);
    void handle(const IncomingMessage& message, std::stop_token stop);

    TelegramClient& client_;
    QuestionHandler handler_;
    BotOptions options_;

    mutable std::mutex mu_;
    std::condition_variable_any queue_cv_;
    std::deque<IncomingMessage> queue_;
    std::int64_t next_offset_ = 0;
    std::size_t handled_ = 0;
};

/// Wire a bot to the RAG pipeline and run it until `stop`.
void serve(const RuntimeConfig& config, const VectorIndex& index, const EmbeddingProvider& provider,
           GenerationBackend& backend, std::stop_token stop, BotOptions options = {});

} // namespace ragtutor
