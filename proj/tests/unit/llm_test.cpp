#include "ragtutor/config.hpp"
#include "ragtutor/error.hpp"
#include "ragtutor/ingest.hpp"
#include "ragtutor/llm.hpp"

#include "fake_servers.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <numeric>

using namespace ragtutor;
using ragtutor::testing::FakeLlamaServer;

namespace {

std::vector<std::string> numbered_tokens(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back(" t" + std::to_string(i));
    return out;
}

std::string joined(const std::vector<std::string>& tokens) {
    return std::accumulate(tokens.begin(), tokens.end(), std::string{});
}

GenerationParams params_with_cap(int cap) {
    GenerationParams p;
    p.max_tokens = cap;
    return p;
}

} // namespace

TEST(Generate, VirtualClockTimingsFollowTheScript) {
    ManualClock clock;
    ScriptedMockBackend backend(clock, 0.1, 16.0, numbered_tokens(150), 40);
    const auto r = generate(backend, "prompt", params_with_cap(150));
    EXPECT_EQ(r.completion_tokens, 150);
    EXPECT_EQ(r.prompt_tokens, 40);
    EXPECT_FALSE(r.counts_estimated);
    EXPECT_NEAR(r.ttfb_s, 0.1, 1e-9);
    EXPECT_NEAR(r.total_duration_s, 0.1 + 150.0 / 16.0, 1e-9);
    EXPECT_NEAR(r.total_duration_s, 9.475, 1e-9);
    EXPECT_NEAR(r.gen_tps(), 16.0, 1e-9);
    EXPECT_NEAR(r.total_tps(), 190.0 / 9.475, 1e-9);
}

TEST(Generate, ZeroTokensGiveZeroRateAndEqualTimes) {
    ManualClock clock;
    ScriptedMockBackend backend(clock, 0.25, 10.0, {}, 5);
    const auto r = generate(backend, "prompt", params_with_cap(8));
    EXPECT_EQ(r.completion_tokens, 0);
    EXPECT_TRUE(r.text.empty());
    EXPECT_DOUBLE_EQ(r.ttfb_s, r.total_duration_s);
    EXPECT_DOUBLE_EQ(r.gen_tps(), 0.0);
}

TEST(Generate, OutputIsCappedAtMaxTokens) {
    ManualClock clock;
    const auto tokens = numbered_tokens(300);
    ScriptedMockBackend backend(clock, 0.0, 100.0, tokens);
    const auto r = generate(backend, "prompt", params_with_cap(128));
    EXPECT_EQ(r.completion_tokens, 128);
    EXPECT_EQ(r.text, joined({tokens.begin(), tokens.begin() + 128}));
}

TEST(Generate, TextIsConcatenationOfDeltasAndEventsAreOrdered) {
    ManualClock clock;
    const auto tokens = script_tokens("Amdahl's law says the serial part of a program bounds its speedup.");
    ScriptedMockBackend backend(clock, 0.05, 20.0, tokens);
    std::vector<GenerationEvent> events;
    const auto r = generate(backend, "prompt", params_with_cap(64), [&](const GenerationEvent& e) { events.push_back(e); });

    EXPECT_EQ(r.text, joined(tokens));
    ASSERT_EQ(events.size(), tokens.size() + 1);
    EXPECT_EQ(events.front().kind, EventKind::FirstToken);
    EXPECT_EQ(events.back().kind, EventKind::Done);
    EXPECT_EQ(events.back().completion_tokens, static_cast<int>(tokens.size()));
    std::string streamed;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (i > 0 && i + 1 < events.size()) EXPECT_EQ(events[i].kind, EventKind::Token);
        if (i > 0) EXPECT_LE(events[i - 1].timestamp, events[i].timestamp);
        streamed += events[i].text_delta;
    }
    EXPECT_EQ(streamed, r.text);
}

TEST(Generate, MissingUsageIsEstimated) {
    ManualClock clock;
    ScriptedMockBackend backend(clock, 0.0, 10.0, numbered_tokens(7));
    const std::string prompt = "twelve chars";
    const auto r = generate(backend, prompt, params_with_cap(32));
    EXPECT_TRUE(r.counts_estimated);
    EXPECT_EQ(r.prompt_tokens, estimate_tokens(prompt));
    EXPECT_EQ(r.completion_tokens, 7);
}

TEST(Generate, ArgumentErrors) {
    ManualClock clock;
    ScriptedMockBackend backend(clock, 0.0, 10.0, numbered_tokens(3));
    EXPECT_THROW(generate(backend, "", params_with_cap(4)), ArgumentError);
    EXPECT_THROW(generate(backend, "p", params_with_cap(0)), ArgumentError);
    auto p = params_with_cap(4);
    p.temperature = -1;
    EXPECT_THROW(generate(backend, "p", p), ArgumentError);
    EXPECT_THROW(ScriptedMockBackend(clock, 0.0, 0.0, {}), ArgumentError);
}

TEST(Generate, RealClockRateWithinFivePercent) {
    ScriptedMockBackend backend(SteadyClock::instance(), 0.05, 16.0, numbered_tokens(24));
    const auto r = generate(backend, "prompt", params_with_cap(24));
    EXPECT_NEAR(r.gen_tps(), 16.0, 0.8);
    EXPECT_NEAR(r.ttfb_s, 0.05, 0.02);
}

TEST(Generate, ConcurrentCallsAreSerialized) {
    struct Probe final : GenerationBackend {
        std::atomic<int> active{0};
        std::atomic<int> max_active{0};
        BackendUsage stream(std::string_view, const GenerationParams&, const TokenCallback& cb) override {
            const int now = ++active;
            max_active = std::max(max_active.load(), now);
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            cb("x");
            --active;
            return {};
        }
        Clock& clock() override { return SteadyClock::instance(); }
    } probe;
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { generate(probe, "p", params_with_cap(4)); });
    threads.clear();
    EXPECT_EQ(probe.max_active.load(), 1);
}

TEST(ReplayBackend, ReproducesProfiles) {
    ManualClock clock;
    ReplayBackend backend(clock, reference_run_profiles());
    for (const auto& profile : reference_run_profiles()) {
        const auto r = generate(backend, "prompt", params_with_cap(128));
        EXPECT_EQ(r.completion_tokens, profile.completion_tokens);
        EXPECT_NEAR(r.ttfb_s, profile.ttfb_s, 1e-9);
        EXPECT_NEAR(r.gen_tps(), profile.gen_tps, 1e-6);
    }
}

TEST(ScriptTokens, ConcatenationRestoresText) {
    const std::string text = "  leading space\tand\nnewlines  trailing ";
    EXPECT_EQ(joined(script_tokens(text)), text);
    EXPECT_TRUE(script_tokens("").empty());
}

TEST(SseDecoder, SplitsAcrossArbitraryChunkBoundaries) {
    const std::string stream = ": keepalive\r\ndata: {\"a\":1}\r\n\r\nevent: x\ndata: line1\ndata: line2\n\ndata:{\"b\":2}\n\n";
    for (std::size_t step = 1; step <= stream.size(); ++step) {
        SseDecoder d;
        std::vector<std::string> got;
        for (std::size_t i = 0; i < stream.size(); i += step) {
            for (auto& e : d.feed(std::string_view(stream).substr(i, step))) got.push_back(std::move(e));
        }
        EXPECT_FALSE(d.finish().has_value());
        ASSERT_EQ(got.size(), 3u) << step;
        EXPECT_EQ(got[0], "{\"a\":1}");
        EXPECT_EQ(got[1], "line1\nline2");
        EXPECT_EQ(got[2], "{\"b\":2}");
    }
}

TEST(SseDecoder, FinishFlushesUnterminatedEvent) {
    SseDecoder d;
    EXPECT_TRUE(d.feed("data: tail").empty());
    EXPECT_EQ(d.finish(), "tail");
}

TEST(LlamaServer, RequestBodyPassesSettingsThrough) {
    RuntimeConfig c;
    c.model_path = "/models/x.gguf";
    c.n_gpu_layers = 33;
    const auto body = nlohmann::json::parse(LlamaServerBackend::request_body("hi", GenerationParams::from_config(c)));
    EXPECT_EQ(body["prompt"], "hi");
    EXPECT_EQ(body["n_predict"], 128);
    EXPECT_EQ(body["stream"], true);
    EXPECT_EQ(body["n_ctx"], 768);
    EXPECT_EQ(body["n_batch"], 256);
    EXPECT_EQ(body["n_gpu_layers"], 33);
    EXPECT_EQ(body["flash_attn"], true);
    EXPECT_DOUBLE_EQ(body["tensor_split"].get<double>(), 0.85);
    EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.2);
    EXPECT_EQ(body["model"], "/models/x.gguf");
}

TEST(LlamaServer, StreamsTokensAndUsage) {
    FakeLlamaServer server;
    const auto tokens = script_tokens("GPU offloading keeps layers in VRAM.");
    server.set_tokens(tokens);
    server.set_prompt_tokens(31);
    LlamaServerBackend backend(server.base_url());
    const auto r = generate(backend, "explain", params_with_cap(64));
    EXPECT_EQ(r.text, joined(tokens));
    EXPECT_EQ(r.completion_tokens, static_cast<int>(tokens.size()));
    EXPECT_EQ(r.prompt_tokens, 31);
    EXPECT_FALSE(r.counts_estimated);
    ASSERT_EQ(server.completion_bodies().size(), 1u);
    EXPECT_EQ(nlohmann::json::parse(server.completion_bodies()[0])["n_predict"], 64);
}

TEST(LlamaServer, CapHoldsEvenIfServerIgnoresIt) {
    FakeLlamaServer server;
    server.set_tokens(numbered_tokens(50));
    LlamaServerBackend backend(server.base_url());
    const auto r = generate(backend, "explain", params_with_cap(10));
    EXPECT_LE(r.completion_tokens, 10);
    EXPECT_EQ(r.text, joined(numbered_tokens(10)));
}

TEST(LlamaServer, NoUsageFallsBackToEstimates) {
    FakeLlamaServer server;
    server.set_tokens(numbered_tokens(5));
    server.set_mode(FakeLlamaServer::Mode::NoUsage);
    LlamaServerBackend backend(server.base_url());
    const auto r = generate(backend, "explain this", params_with_cap(16));
    EXPECT_TRUE(r.counts_estimated);
    EXPECT_EQ(r.completion_tokens, 5);
    EXPECT_EQ(r.prompt_tokens, estimate_tokens("explain this"));
}

TEST(LlamaServer, MalformedEventIsProtocolError) {
    FakeLlamaServer server;
    server.set_tokens(numbered_tokens(5));
    server.set_mode(FakeLlamaServer::Mode::Malformed);
    LlamaServerBackend backend(server.base_url());
    EXPECT_THROW(generate(backend, "p", params_with_cap(16)), ProtocolError);
}

TEST(LlamaServer, ServerErrorIsTransportError) {
    FakeLlamaServer server;
    server.set_mode(FakeLlamaServer::Mode::ServerError);
    LlamaServerBackend backend(server.base_url());
    EXPECT_THROW(generate(backend, "p", params_with_cap(16)), TransportError);
}

TEST(LlamaServer, InterruptedStreamKeepsPartialText) {
    for (auto mode : {FakeLlamaServer::Mode::Disconnect, FakeLlamaServer::Mode::NoStopEvent}) {
        FakeLlamaServer server;
        const auto tokens = numbered_tokens(10);
        server.set_tokens(tokens);
        server.set_mode(mode);
        LlamaServerBackend backend(server.base_url());
        try {
            generate(backend, "p", params_with_cap(16));
            FAIL() << "expected PartialResultError";
        } catch (const PartialResultError& e) {
            EXPECT_GT(e.tokens_received(), 0);
            EXPECT_EQ(e.partial_text(), joined({tokens.begin(), tokens.begin() + e.tokens_received()}));
        }
    }
}

TEST(LlamaServer, UnreachableIsTransportError) {
    int port;
    {
        FakeLlamaServer server;
        port = server.port();
    }
    LlamaServerBackend backend("http://127.0.0.1:" + std::to_string(port));
    EXPECT_THROW(generate(backend, "p", params_with_cap(4)), TransportError);
}
