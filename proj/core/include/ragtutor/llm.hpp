#pragma once

#include "ragtutor/clock.hpp"

#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ragtutor {

struct RuntimeConfig;

struct GenerationParams {
    int max_tokens = 128;
    double temperature = 0.2;

    // Passthrough for the inference server; never interpreted locally.
    int n_ctx = 768;
    int n_batch = 256;
    int n_gpu_layers = 20;
    bool flash_attn = true;
    double tensor_split = 0.85;
    std::string model_path;

    static GenerationParams from_config(const RuntimeConfig& config);
};

enum class EventKind { FirstToken, Token, Done };

struct GenerationEvent {
    EventKind kind = EventKind::Token;
    std::string text_delta;
    Clock::time_point timestamp{};
    // Only meaningful on Done.
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

using EventSink = std::function<void(const GenerationEvent&)>;

struct GenerationResult {
    std::string text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    bool counts_estimated = false; // backend did not report usage
    double ttfb_s = 0.0;
    double generation_duration_s = 0.0;
    double total_duration_s = 0.0;

    /// completion_tokens / generation_duration_s, or 0 when nothing was generated.
    double gen_tps() const noexcept;
    /// (prompt_tokens + completion_tokens) / total_duration_s.
    double total_tps() const noexcept;
};

/// Usage counts a backend may report when a stream completes.
struct BackendUsage {
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
};

/// Receives one token delta; return false to ask the backend to stop.
using TokenCallback = std::function<bool(std::string_view delta)>;

/// A streaming completion source. One generation runs at a time per
/// backend; generate() holds session_mutex() for the whole call.
class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;

    /// Streams token deltas to `on_token` until the completion finishes or
    /// `on_token` returns false. Throws TransportError, ProtocolError or
    /// PartialResultError.
    virtual BackendUsage stream(std::string_view prompt, const GenerationParams& params,
                                const TokenCallback& on_token) = 0;

    /// Time source shared with generate() for timestamps.
    virtual Clock& clock() = 0;

    std::mutex& session_mutex() noexcept { return session_; }

private:
    std::mutex session_;
};

/// Run one completion, emitting FirstToken/Token/Done events to `sink` and
/// computing timings from the backend clock. Caps output at
/// params.max_tokens. Missing usage falls back to estimate_tokens(prompt)
/// and the number of streamed deltas, with counts_estimated set.
GenerationResult generate(GenerationBackend& backend, std::string_view prompt, const GenerationParams& params,
                          const EventSink& sink = {});

/// Emits the first token after `first_token_delay_s`, then one token every
/// 1/tokens_per_second. Token i arrives at delay + i/rate and the stream
/// completes at delay + n/rate, so total = delay + n/rate.
class ScriptedMockBackend final : public GenerationBackend {
public:
    ScriptedMockBackend(Clock& clock, double first_token_delay_s, double tokens_per_second,
                        std::vector<std::string> tokens, std::optional<int> prompt_tokens = std::nullopt);

    BackendUsage stream(std::string_view prompt, const GenerationParams& params,
                        const TokenCallback& on_token) override;
    Clock& clock() override { return clock_; }

    int calls() const noexcept { return calls_; }

private:
    Clock& clock_;
    double delay_s_;
    double rate_;
    std::vector<std::string> tokens_;
    std::optional<int> prompt_tokens_;
    int calls_ = 0;
};

/// Timing profile of one recorded iteration.
struct ReplayProfile {
    double ttfb_s = 0.0;
    double gen_tps = 0.0;
    int completion_tokens = 0;
};

/// Replays recorded iterations in order (cycling), each as a scripted stream.
class ReplayBackend final : public GenerationBackend {
public:
    ReplayBackend(Clock& clock, std::vector<ReplayProfile> profiles);

    BackendUsage stream(std::string_view prompt, const GenerationParams& params,
                        const TokenCallback& on_token) override;
    Clock& clock() override { return clock_; }

private:
    Clock& clock_;
    std::vector<ReplayProfile> profiles_;
    std::size_t next_ = 0;
};

/// Five-iteration reference run: Mistral-7B-Instruct Q4_K_M on an RTX 4060
/// laptop GPU, n_ctx=768, n_batch=256, 20 GPU layers, flash attention.
const std::vector<ReplayProfile>& reference_run_profiles();

/// Split text into word-sized tokens; leading whitespace stays attached,
/// so concatenating the tokens reproduces `text` exactly.
std::vector<std::string> script_tokens(std::string_view text);

/// Incremental server-sent-events decoder. feed() returns the data payload
/// of every event completed by the new bytes; multi-line data fields are
/// joined with '\n'. Comments and non-data fields are ignored.
class SseDecoder {
public:
    std::vector<std::string> feed(std::string_view bytes);
    /// Flush an event left unterminated at end of stream.
    std::optional<std::string> finish();

private:
    void take_line(std::string_view line, std::vector<std::string>& out);

    std::string buffer_;
    std::string data_;
    bool has_data_ = false;
};

struct LlamaServerOptions {
    std::chrono::seconds timeout{300};
};

/// Streaming client for a llama-server style endpoint:
/// POST <endpoint>/completion with {"prompt", "n_predict", "stream": true, ...};
/// each SSE event carries {"content": delta, "stop": false}, and the final
/// one {"stop": true, "tokens_predicted", "tokens_evaluated"}.
class LlamaServerBackend final : public GenerationBackend {
public:
    explicit LlamaServerBackend(std::string endpoint, LlamaServerOptions options = {});

    BackendUsage stream(std::string_view prompt, const GenerationParams& params,
                        const TokenCallback& on_token) override;
    Clock& clock() override { return SteadyClock::instance(); }

    /// Request body sent for a prompt; exposed for tests.
    static std::string request_body(std::string_view prompt, const GenerationParams& params);

private:
    std::string endpoint_;
    LlamaServerOptions options_;
};

} // namespace ragtutor
