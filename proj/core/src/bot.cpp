#include "ragtutor/bot.hpp"

#include "http_util.hpp"
#include "ragtutor/config.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <thread>

namespace ragtutor {
namespace {

std::chrono::seconds retry_after_of(const httplib::Response& res) {
    long long seconds = 1;
    try {
        const auto body = nlohmann::json::parse(res.body);
        seconds = body.at("parameters").at("retry_after").get<long long>();
    } catch (const nlohmann::json::exception&) {
        if (res.has_header("Retry-After")) {
            try {
                seconds = std::stoll(res.get_header_value("Retry-After"));
            } catch (const std::exception&) {
            }
        }
    }
    return std::chrono::seconds(std::max(0LL, seconds));
}

[[noreturn]] void throw_for_status(const httplib::Response& res, std::string_view method) {
    const std::string where(method);
    if (res.status == 401) throw AuthError(where + ": bot token rejected (HTTP 401)");
    if (res.status == 429) {
        const auto wait = retry_after_of(res);
        throw RateLimitedError(where + ": rate limited, retry after " + std::to_string(wait.count()) + "s", wait);
    }
    throw TransportError(where + ": HTTP " + std::to_string(res.status));
}

nlohmann::json parse_ok_body(const std::string& body, std::string_view method) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        throw ProtocolError(std::string(method) + ": response is not JSON");
    }
    if (!doc.is_object() || !doc.value("ok", false)) {
        throw ProtocolError(std::string(method) + ": response not ok");
    }
    return doc;
}

} // namespace

std::chrono::milliseconds BackoffPolicy::delay(int failures) const {
    if (failures < 1) return std::chrono::milliseconds::zero();
    auto d = base;
    for (int i = 1; i < failures && d < cap; ++i) d *= 2;
    return std::min(d, cap);
}

bool sleep_interruptible(std::chrono::milliseconds d, std::stop_token stop) {
    if (d <= std::chrono::milliseconds::zero()) return !stop.stop_requested();
    std::mutex mu;
    std::condition_variable_any cv;
    std::unique_lock lock(mu);
    return !cv.wait_for(lock, stop, d, [] { return false; }) && !stop.stop_requested();
}

TelegramClient::TelegramClient(std::string api_base, std::string token) : token_(std::move(token)) {
    if (token_.empty()) throw ArgumentError("Telegram bot token is not configured (TELEGRAM_BOT_TOKEN)");
    const auto url = detail::split_url(api_base);
    base_path_ = url.base_path;
    // Long polls hold the connection for timeout_s; leave generous slack.
    poll_client_ = detail::make_client(url, std::chrono::seconds(120));
    send_client_ = detail::make_client(url, std::chrono::seconds(30));
}

TelegramClient::~TelegramClient() = default;

std::string TelegramClient::method_path(std::string_view method) const {
    return detail::join_path(base_path_, "/bot" + token_ + "/" + std::string(method));
}

PollResult TelegramClient::get_updates(std::int64_t offset, int timeout_s) {
    const nlohmann::json request = {
        {"offset", offset}, {"timeout", timeout_s}, {"allowed_updates", nlohmann::json::array({"message"})}};
    auto res = poll_client_->Post(method_path("getUpdates"), request.dump(), "application/json");
    if (!res) throw TransportError("getUpdates: " + httplib::to_string(res.error()));
    if (res->status != 200) throw_for_status(*res, "getUpdates");

    const auto doc = parse_ok_body(res->body, "getUpdates");
    if (!doc.contains("result") || !doc["result"].is_array()) {
        throw ProtocolError("getUpdates: result is not an array");
    }

    PollResult out;
    out.next_offset = offset;
    const auto now = std::chrono::system_clock::now();
    for (const auto& update : doc["result"]) {
        if (!update.is_object() || !update.contains("update_id") || !update["update_id"].is_number_integer()) {
            throw ProtocolError("getUpdates: update without an integer update_id");
        }
        const auto id = update["update_id"].get<std::int64_t>();
        out.next_offset = std::max(out.next_offset, id + 1);

        const auto msg = update.find("message");
        if (msg == update.end() || !msg->is_object()) continue;
        const auto text = msg->find("text");
        if (text == msg->end() || !text->is_string()) continue;
        const auto chat = msg->find("chat");
        if (chat == msg->end() || !chat->is_object() || !chat->contains("id") || !(*chat)["id"].is_number_integer()) {
            continue;
        }
        out.messages.push_back({id, (*chat)["id"].get<std::int64_t>(), text->get<std::string>(), now});
    }
    return out;
}

void TelegramClient::send_message(std::int64_t chat_id, std::string_view text) {
    const nlohmann::json request = {{"chat_id", chat_id}, {"text", text}};
    std::lock_guard lock(send_mu_);
    auto res = send_client_->Post(method_path("sendMessage"), request.dump(), "application/json");
    if (!res) throw TransportError("sendMessage: " + httplib::to_string(res.error()));
    if (res->status != 200) throw_for_status(*res, "sendMessage");
    parse_ok_body(res->body, "sendMessage");
}

void TelegramClient::cancel() {
    poll_client_->stop();
}

PollResult poll_updates(TelegramClient& client, std::int64_t offset, int timeout_s, const BackoffPolicy& backoff,
                        std::stop_token stop) {
    int failures = 0;
    while (!stop.stop_requested()) {
        std::chrono::milliseconds wait{};
        try {
            auto result = client.get_updates(offset, timeout_s);
            result.next_offset = std::max(result.next_offset, offset);
            return result;
        } catch (const AuthError&) {
            throw;
        } catch (const RateLimitedError& e) {
            ++failures;
            wait = std::max<std::chrono::milliseconds>(e.retry_after(), backoff.delay(failures));
            spdlog::warn("{}", e.what());
        } catch (const Error& e) {
            ++failures;
            wait = backoff.delay(failures);
            if (stop.stop_requested()) break;
            spdlog::warn("poll failed ({}), retrying in {} ms", e.what(), wait.count());
        }
        if (!sleep_interruptible(wait, stop)) break;
    }
    return PollResult{{}, offset};
}

std::vector<std::string> split_message(std::string_view text, std::size_t limit) {
    if (limit == 0) throw ArgumentError("message limit must be positive");
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };

    std::vector<std::string> parts;
    while (!text.empty()) {
        // Byte offset just past `limit` code points, and the last whitespace before it.
        std::size_t chars = 0;
        std::size_t cut = text.size();
        std::size_t last_space = std::string_view::npos;
        for (std::size_t i = 0; i < text.size(); ++i) {
            if ((static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) continue;
            if (chars == limit) {
                cut = i;
                break;
            }
            ++chars;
            if (is_space(text[i])) last_space = i;
        }
        if (cut == text.size()) {
            parts.emplace_back(text);
            break;
        }
        const std::size_t end = last_space != std::string_view::npos ? last_space + 1 : cut;
        parts.emplace_back(text.substr(0, end));
        text.remove_prefix(end);
    }
    return parts;
}

DeliveryReport send_reply(TelegramClient& client, std::int64_t chat_id, std::string_view text,
                          const SendPolicy& policy, std::stop_token stop) {
    if (text.empty()) throw ArgumentError("reply text must not be empty");
    const auto parts = split_message(text);

    DeliveryReport report;
    report.parts = parts.size();
    for (const auto& part : parts) {
        int failures = 0;
        while (true) {
            std::chrono::milliseconds wait{};
            try {
                client.send_message(chat_id, part);
                ++report.delivered;
                break;
            } catch (const RateLimitedError& e) {
                ++failures;
                wait = std::chrono::duration_cast<std::chrono::milliseconds>(e.retry_after());
                spdlog::warn("{}", e.what());
            } catch (const Error& e) {
                ++failures;
                wait = policy.backoff.delay(failures);
                spdlog::warn("send to chat {} failed: {}", chat_id, e.what());
            }
            if (failures > policy.max_retries || !sleep_interruptible(wait, stop)) {
                spdlog::error("dropping reply to chat {} after {} failed attempt(s)", chat_id, failures);
                report.dropped = true;
                return report;
            }
            ++report.retries;
        }
    }
    return report;
}

std::string format_reply(const Answer& answer) {
    std::string out = answer.text.empty() ? std::string("(no answer generated)") : answer.text;
    if (!answer.citations.empty()) {
        out += "\n\nSources:\n";
        out += format_citations(answer.citations);
        while (!out.empty() && out.back() == '\n') out.pop_back();
    }
    return out;
}

Bot::Bot(TelegramClient& client, QuestionHandler handler, BotOptions options)
    : client_(client), handler_(std::move(handler)), options_(std::move(options)) {
    if (!handler_) throw ArgumentError("bot needs a question handler");
}

std::int64_t Bot::next_offset() const {
    std::lock_guard lock(mu_);
    return next_offset_;
}

std::size_t Bot::handled() const {
    std::lock_guard lock(mu_);
    return handled_;
}

void Bot::run(std::stop_token stop) {
    std::stop_source worker_stop;
    std::jthread worker([this, token = worker_stop.get_token()] { worker_loop(token); });
    std::stop_callback cancel_poll(stop, [this] { client_.cancel(); });

    spdlog::info("bot polling for updates");
    try {
        while (!stop.stop_requested()) {
            auto result = poll_updates(client_, next_offset(), options_.poll_timeout_s, options_.poll_backoff, stop);
            std::lock_guard lock(mu_);
            for (auto& m : result.messages) {
                // Redelivered or out-of-order updates are ignored.
                if (m.update_id < next_offset_) continue;
                next_offset_ = m.update_id + 1;
                queue_.push_back(std::move(m));
            }
            next_offset_ = std::max(next_offset_, result.next_offset);
            queue_cv_.notify_one();
        }
    } catch (const AuthError& e) {
        spdlog::critical("{}", e.what());
        worker_stop.request_stop();
        queue_cv_.notify_all();
        throw;
    }
    worker_stop.request_stop();
    queue_cv_.notify_all();
}

void Bot::worker_loop(std::stop_token stop) {
    while (true) {
        IncomingMessage message;
        {
            std::unique_lock lock(mu_);
            if (!queue_cv_.wait(lock, stop, [this] { return !queue_.empty(); })) {
                if (!queue_.empty()) spdlog::warn("shutting down with {} unanswered message(s)", queue_.size());
                return;
            }
            message = std::move(queue_.front());
            queue_.pop_front();
        }
        handle(message, stop);
        std::lock_guard lock(mu_);
        ++handled_;
    }
}

void Bot::handle(const IncomingMessage& message, std::stop_token) {
    const std::string_view text = message.text;
    std::string reply;
    if (text.starts_with("/start") || text.starts_with("/help")) {
        reply = options_.greeting;
    } else {
        try {
            reply = format_reply(handler_(message.text));
        } catch (const std::exception& e) {
            spdlog::error("update {} from chat {} failed: {}", message.update_id, message.chat_id, e.what());
            reply = options_.apology;
        }
    }
    // The in-flight reply is delivered even during shutdown.
    const auto report = send_reply(client_, message.chat_id, reply, options_.send);
    if (!report.dropped) spdlog::info("answered update {} in {} part(s)", message.update_id, report.parts);
}

void serve(const RuntimeConfig& config, const VectorIndex& index, const EmbeddingProvider& provider,
           GenerationBackend& backend, std::stop_token stop, BotOptions options) {
    TelegramClient client(config.telegram_api_base, config.telegram_token);
    const Pipeline pipeline{index, provider, backend};
    Bot bot(client, [&](const std::string& q) { return answer_query(q, pipeline, config); }, std::move(options));
    bot.run(stop);
}

} // namespace ragtutor
