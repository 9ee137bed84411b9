#include "ragtutor/bench.hpp"
#include "ragtutor/telemetry.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

using namespace ragtutor;

namespace {

struct ScriptedProbe final : GpuProbe {
    std::vector<GpuSample> cycle;
    std::atomic<std::size_t> reads{0};
    ProbeReading read() override {
        const auto i = reads++;
        return {ProbeReading::Status::Ok, cycle[i % cycle.size()], {}};
    }
};

void wait_for_reads(const ScriptedProbe& p, std::size_t n) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (p.reads < n && std::chrono::steady_clock::now() < deadline) {
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
}

} // namespace

TEST(ProbeOutput, Parses) {
    const auto s = parse_probe_output("21, 2904\n");
    ASSERT_TRUE(s);
    EXPECT_EQ(s->util_sm_pct, 21.0);
    EXPECT_EQ(s->mem_mb, 2904.0);
    EXPECT_TRUE(parse_probe_output("\n  7 ,  512 \n99, 1\n"));
    EXPECT_EQ(parse_probe_output("\n  7 ,  512 \n99, 1\n")->util_sm_pct, 7.0);
    EXPECT_FALSE(parse_probe_output("N/A"));
    EXPECT_FALSE(parse_probe_output("21, [Not Supported]"));
    EXPECT_FALSE(parse_probe_output(""));
}

TEST(Aggregate, MeanAndMax) {
    EXPECT_FALSE(aggregate({}));
    const auto s = aggregate({{20, 2900}, {23, 2910}, {20, 2900}, {23, 2910}});
    ASSERT_TRUE(s);
    EXPECT_DOUBLE_EQ(s->util_mean, 21.5);
    EXPECT_DOUBLE_EQ(s->util_max, 23.0);
    EXPECT_DOUBLE_EQ(s->mem_mean, 2905.0);
    EXPECT_DOUBLE_EQ(s->mem_max, 2910.0);
    EXPECT_EQ(s->samples, 4u);
}

TEST(TelemetrySampler, ConstantStub) {
    ScriptedProbe probe;
    probe.cycle = {{42, 1000}};
    TelemetrySampler sampler(probe, std::chrono::milliseconds(1));
    sampler.start();
    wait_for_reads(probe, 5);
    sampler.stop();
    const auto s = sampler.stats();
    ASSERT_TRUE(s);
    EXPECT_GE(s->samples, 5u);
    EXPECT_DOUBLE_EQ(s->util_mean, 42.0);
    EXPECT_DOUBLE_EQ(s->mem_max, 1000.0);
    EXPECT_FALSE(sampler.disabled());
}

TEST(TelemetrySampler, AlternatingStubMaxIsHigherValue) {
    ScriptedProbe probe;
    probe.cycle = {{20, 100}, {23, 200}};
    TelemetrySampler sampler(probe, std::chrono::milliseconds(1));
    sampler.start();
    wait_for_reads(probe, 6);
    sampler.stop();
    const auto s = sampler.stats();
    ASSERT_TRUE(s);
    EXPECT_DOUBLE_EQ(s->util_max, 23.0);
    EXPECT_GE(s->util_mean, 20.0);
    EXPECT_LE(s->util_mean, 23.0);
}

TEST(TelemetrySampler, StopIsPrompt) {
    ScriptedProbe probe;
    probe.cycle = {{1, 1}};
    TelemetrySampler sampler(probe, std::chrono::hours(1));
    sampler.start();
    wait_for_reads(probe, 1);
    const auto t0 = std::chrono::steady_clock::now();
    sampler.stop();
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(1));
}

TEST(CommandProbe, MissingCommandIsUnavailable) {
    CommandProbe probe("/nonexistent/ragtutor-gpu-probe");
    EXPECT_EQ(probe.read().status, ProbeReading::Status::Unavailable);
    TelemetrySampler sampler(probe, std::chrono::milliseconds(1));
    sampler.start();
    sampler.stop();
    EXPECT_FALSE(sampler.stats());
}

TEST(CommandProbe, ShellOutput) {
    CommandProbe ok("printf '21, 2904\\n'");
    const auto r = ok.read();
    ASSERT_EQ(r.status, ProbeReading::Status::Ok);
    EXPECT_EQ(r.sample.mem_mb, 2904.0);
    EXPECT_EQ(CommandProbe("echo garbage").read().status, ProbeReading::Status::Unparsable);
    EXPECT_EQ(CommandProbe("echo 1, 2; exit 3").read().status, ProbeReading::Status::Unavailable);
}

TEST(TelemetrySampler, BenchmarkWithoutGpuOmitsKeys) {
    CommandProbe probe("/nonexistent/ragtutor-gpu-probe");
    TelemetrySampler sampler(probe, std::chrono::milliseconds(1));
    ManualClock clock;
    ScriptedMockBackend backend(clock, 0.1, 16.0, {" a", " b"});
    const auto s = run_benchmark(backend, "p", GenerationParams{}, 2, {false, nullptr, &sampler});
    EXPECT_TRUE(s.complete);
    EXPECT_FALSE(s.gpu);
    const auto doc = nlohmann::json::parse(summary_json(s));
    EXPECT_FALSE(doc["metrics"].contains("gpu_util_sm_pct"));
    EXPECT_FALSE(doc["metrics"].contains("gpu_mem_mb"));
}

TEST(TelemetrySampler, BenchmarkWithStubReportsGpu) {
    ScriptedProbe probe;
    probe.cycle = {{20, 2900}, {23, 2910}};
    TelemetrySampler sampler(probe, std::chrono::milliseconds(1));
    SteadyClock& clock = SteadyClock::instance();
    ScriptedMockBackend backend(clock, 0.01, 200.0, std::vector<std::string>(4, " x"));
    const auto s = run_benchmark(backend, "p", GenerationParams{}, 2, {false, nullptr, &sampler});
    ASSERT_TRUE(s.gpu);
    const auto doc = nlohmann::json::parse(summary_json(s));
    EXPECT_LE(doc["metrics"]["gpu_util_sm_pct"]["max"].get<double>(), 23.0);
    EXPECT_GE(doc["metrics"]["gpu_util_sm_pct"]["mean"].get<double>(), 20.0);
    EXPECT_TRUE(doc["metrics"]["gpu_mem_mb"].contains("max"));
}
