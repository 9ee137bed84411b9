#include "ragtutor/llm.hpp"

#include "http_util.hpp"
#include "ragtutor/config.hpp"
#include "ragtutor/error.hpp"
#include "ragtutor/ingest.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>

namespace ragtutor {
namespace {

Clock::duration to_duration(double seconds) {
    return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
}

const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = [] {
        return script_tokens(
            "GPU offloading moves transformer layers from system memory into video memory so that the "
            "matrix multiplications of those layers run on the graphics card, which keeps the CPU free "
            "and raises the number of tokens generated per second.");
    }();
    return words;
}

} // namespace

GenerationParams GenerationParams::from_config(const RuntimeConfig& c) {
    GenerationParams p;
    p.max_tokens = c.max_output_tokens;
    p.temperature = c.temperature;
    p.n_ctx = c.n_ctx;
    p.n_batch = c.n_batch;
    p.n_gpu_layers = c.n_gpu_layers;
    p.flash_attn = c.flash_attn;
    p.tensor_split = c.tensor_split;
    p.model_path = c.model_path;
    return p;
}

double GenerationResult::gen_tps() const noexcept {
    return generation_duration_s > 0.0 ? completion_tokens / generation_duration_s : 0.0;
}

double GenerationResult::total_tps() const noexcept {
    return total_duration_s > 0.0 ? (prompt_tokens + completion_tokens) / total_duration_s : 0.0;
}

GenerationResult generate(GenerationBackend& backend, std::string_view prompt, const GenerationParams& params,
                          const EventSink& sink) {
    if (prompt.empty()) throw ArgumentError("prompt must not be empty");
    if (params.max_tokens < 1) throw ArgumentError("max_tokens must be at least 1");
    if (params.temperature < 0.0) throw ArgumentError("temperature must be non-negative");

    std::lock_guard session(backend.session_mutex());
    Clock& clock = backend.clock();

    GenerationResult result;
    int received = 0;
    Clock::time_point first_at{};
    const auto start = clock.now();

    const auto emit = [&](GenerationEvent ev) {
        if (sink) sink(ev);
    };
    const auto on_token = [&](std::string_view delta) -> bool {
        if (received >= params.max_tokens) return false;
        const auto now = clock.now();
        if (received == 0) first_at = now;
        ++received;
        result.text.append(delta);
        emit({received == 1 ? EventKind::FirstToken : EventKind::Token, std::string(delta), now, 0, 0});
        return received < params.max_tokens;
    };

    BackendUsage usage;
    try {
        usage = backend.stream(prompt, params, on_token);
    } catch (const PartialResultError& e) {
        throw PartialResultError(e.what(), result.text, received);
    }
    const auto done_at = clock.now();

    if (usage.completion_tokens && *usage.completion_tokens > params.max_tokens) {
        throw ProtocolError("backend reported " + std::to_string(*usage.completion_tokens) +
                            " completion tokens, above the cap of " + std::to_string(params.max_tokens));
    }
    result.counts_estimated = !usage.prompt_tokens || !usage.completion_tokens;
    result.prompt_tokens = usage.prompt_tokens.value_or(estimate_tokens(prompt));
    result.completion_tokens = usage.completion_tokens.value_or(received);

    if (received == 0) first_at = done_at;
    result.ttfb_s = seconds_between(start, first_at);
    result.total_duration_s = seconds_between(start, done_at);
    result.generation_duration_s = seconds_between(first_at, done_at);

    emit({EventKind::Done, {}, done_at, result.prompt_tokens, result.completion_tokens});
    return result;
}

ScriptedMockBackend::ScriptedMockBackend(Clock& clock, double first_token_delay_s, double tokens_per_second,
                                         std::vector<std::string> tokens, std::optional<int> prompt_tokens)
    : clock_(clock), delay_s_(first_token_delay_s), rate_(tokens_per_second), tokens_(std::move(tokens)),
      prompt_tokens_(prompt_tokens) {
    if (!(tokens_per_second > 0.0) || !std::isfinite(tokens_per_second)) {
        throw ArgumentError("tokens_per_second must be positive");
    }
    if (!(first_token_delay_s >= 0.0)) throw ArgumentError("first token delay must be non-negative");
}

BackendUsage ScriptedMockBackend::stream(std::string_view, const GenerationParams&, const TokenCallback& on_token) {
    ++calls_;
    const auto t0 = clock_.now();
    const auto at = [&](std::size_t i) { return t0 + to_duration(delay_s_ + static_cast<double>(i) / rate_); };

    std::size_t emitted = 0;
    while (emitted < tokens_.size()) {
        clock_.sleep_until(at(emitted));
        const bool more = on_token(tokens_[emitted]);
        ++emitted;
        if (!more) break;
    }
    clock_.sleep_until(at(emitted));
    return BackendUsage{prompt_tokens_, static_cast<int>(emitted)};
}

ReplayBackend::ReplayBackend(Clock& clock, std::vector<ReplayProfile> profiles)
    : clock_(clock), profiles_(std::move(profiles)) {
    if (profiles_.empty()) throw ArgumentError("replay needs at least one profile");
    for (const auto& p : profiles_) {
        if (!(p.gen_tps > 0.0) || p.ttfb_s < 0.0 || p.completion_tokens < 0) {
            throw ArgumentError("invalid replay profile");
        }
    }
}

BackendUsage ReplayBackend::stream(std::string_view prompt, const GenerationParams& params,
                                   const TokenCallback& on_token) {
    const auto& profile = profiles_[next_];
    next_ = (next_ + 1) % profiles_.size();

    const auto& words = filler_words();
    std::vector<std::string> tokens;
    tokens.reserve(static_cast<std::size_t>(profile.completion_tokens));
    for (int i = 0; i < profile.completion_tokens; ++i) tokens.push_back(words[static_cast<std::size_t>(i) % words.size()]);

    ScriptedMockBackend scripted(clock_, profile.ttfb_s, profile.gen_tps, std::move(tokens));
    return scripted.stream(prompt, params, on_token);
}

const std::vector<ReplayProfile>& reference_run_profiles() {
    static const std::vector<ReplayProfile> profiles = {
        {0.350, 16.99, 117}, {0.067, 16.27, 111}, {0.062, 15.61, 107}, {0.062, 16.12, 108}, {0.065, 16.05, 109},
    };
    return profiles;
}

std::vector<std::string> script_tokens(std::string_view text) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t j = i;
        while (j < text.size() && is_space(text[j])) ++j;
        while (j < text.size() && !is_space(text[j])) ++j;
        out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

std::vector<std::string> SseDecoder::feed(std::string_view bytes) {
    buffer_.append(bytes);
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto nl = buffer_.find('\n', pos);
        if (nl == std::string::npos) break;
        std::string_view line(buffer_.data() + pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        take_line(line, out);
        pos = nl + 1;
    }
    buffer_.erase(0, pos);
    return out;
}

std::optional<std::string> SseDecoder::finish() {
    std::vector<std::string> out;
    if (!buffer_.empty()) {
        std::string rest = std::move(buffer_);
        buffer_.clear();
        if (!rest.empty() && rest.back() == '\r') rest.pop_back();
        take_line(rest, out);
    }
    take_line({}, out);
    if (out.empty()) return std::nullopt;
    return std::move(out.front());
}

void SseDecoder::take_line(std::string_view line, std::vector<std::string>& out) {
    if (line.empty()) {
        if (has_data_) out.push_back(std::move(data_));
        data_.clear();
        has_data_ = false;
        return;
    }
    if (line.front() == ':') return;
    const auto colon = line.find(':');
    const auto field = line.substr(0, colon);
    if (field != "data") return;
    auto value = colon == std::string_view::npos ? std::string_view{} : line.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    if (has_data_) data_ += '\n';
    data_.append(value);
    has_data_ = true;
}

LlamaServerBackend::LlamaServerBackend(std::string endpoint, LlamaServerOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {
    detail::split_url(endpoint_);
}

std::string LlamaServerBackend::request_body(std::string_view prompt, const GenerationParams& p) {
    nlohmann::ordered_json body = {
        {"prompt", prompt},
        {"n_predict", p.max_tokens},
        {"temperature", p.temperature},
        {"stream", true},
        {"cache_prompt", true},
        {"n_ctx", p.n_ctx},
        {"n_batch", p.n_batch},
        {"n_gpu_layers", p.n_gpu_layers},
        {"flash_attn", p.flash_attn},
        {"tensor_split", p.tensor_split},
        {"model", p.model_path},
    };
    return body.dump();
}

BackendUsage LlamaServerBackend::stream(std::string_view prompt, const GenerationParams& params,
                                        const TokenCallback& on_token) {
    const auto url = detail::split_url(endpoint_);
    auto client = detail::make_client(url, options_.timeout);

    SseDecoder decoder;
    BackendUsage usage;
    bool finished = false;
    bool stopped_by_caller = false;
    int tokens = 0;
    int status = 0;
    std::string error_body;
    std::optional<ProtocolError> protocol_error;

    const auto handle_event = [&](const std::string& payload) -> bool {
        if (payload == "[DONE]") {
            finished = true;
            return true;
        }
        if (finished) {
            protocol_error.emplace("event received after the stream completed");
            return false;
        }
        nlohmann::json ev;
        try {
            ev = nlohmann::json::parse(payload);
        } catch (const nlohmann::json::exception&) {
            protocol_error.emplace("malformed stream event: " + payload.substr(0, 120));
            return false;
        }
        if (!ev.is_object()) {
            protocol_error.emplace("stream event is not a JSON object");
            return false;
        }
        const bool stop = ev.value("stop", false);
        if (ev.contains("content") && !ev["content"].is_string()) {
            protocol_error.emplace("stream event content is not a string");
            return false;
        }
        const std::string content = ev.value("content", std::string{});
        if (!stop) {
            if (!ev.contains("content")) {
                protocol_error.emplace("token event lacks content");
                return false;
            }
            ++tokens;
            if (!on_token(content)) {
                stopped_by_caller = true;
                return false;
            }
            return true;
        }
        if (!content.empty()) {
            ++tokens;
            if (!on_token(content)) stopped_by_caller = true;
        }
        const auto read_count = [&](const char* key, const char* timing_key) -> std::optional<int> {
            if (ev.contains(key) && ev[key].is_number_integer()) return ev[key].get<int>();
            if (ev.contains("timings") && ev["timings"].is_object() && ev["timings"].contains(timing_key) &&
                ev["timings"][timing_key].is_number_integer()) {
                return ev["timings"][timing_key].get<int>();
            }
            return std::nullopt;
        };
        usage.completion_tokens = read_count("tokens_predicted", "predicted_n");
        usage.prompt_tokens = read_count("tokens_evaluated", "prompt_n");
        finished = true;
        return !stopped_by_caller;
    };

    httplib::Request req;
    req.method = "POST";
    req.path = detail::join_path(url.base_path, "/completion");
    req.body = request_body(prompt, params);
    req.set_header("Content-Type", "application/json");
    req.set_header("Accept", "text/event-stream");
    req.response_handler = [&](const httplib::Response& r) {
        status = r.status;
        return true;
    };
    req.content_receiver = [&](const char* data, size_t n, uint64_t, uint64_t) {
        if (status != 200) {
            error_body.append(data, n);
            return true;
        }
        for (const auto& payload : decoder.feed(std::string_view(data, n))) {
            if (!handle_event(payload)) return false;
        }
        return true;
    };

    auto res = client->send(req);
    if (protocol_error) throw *protocol_error;
    if (stopped_by_caller) return usage;
    if (!res) {
        const std::string why = httplib::to_string(res.error());
        if (tokens > 0) throw PartialResultError("stream interrupted: " + why, {}, tokens);
        throw TransportError("inference server unreachable: " + why);
    }
    if (status >= 500) throw TransportError("inference server answered HTTP " + std::to_string(status));
    if (status != 200) {
        throw ProtocolError("inference server answered HTTP " + std::to_string(status) + ": " +
                            error_body.substr(0, 200));
    }
    if (!finished) {
        if (auto tail = decoder.finish()) {
            handle_event(*tail);
            if (protocol_error) throw *protocol_error;
        }
    }
    if (!finished) throw PartialResultError("stream ended before the completion event", {}, tokens);
    return usage;
}

} // namespace ragtutor
