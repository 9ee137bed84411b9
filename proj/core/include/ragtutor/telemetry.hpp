#pragma once

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace ragtutor {

struct GpuSample {
    double util_sm_pct = 0.0;
    double mem_mb = 0.0;
};

struct ProbeReading {
    enum class Status { Ok, Unavailable, Unparsable };
    Status status = Status::Unavailable;
    GpuSample sample;
    std::string detail;
};

class GpuProbe {
public:
    virtual ~GpuProbe() = default;
    virtual ProbeReading read() = 0;
};

/// Parses the first non-empty line of "util, mem" output
/// (nvidia-smi --query-gpu=utilization.gpu,memory.used --format=csv,noheader,nounits).
std::optional<GpuSample> parse_probe_output(std::string_view output);

/// Runs a shell command per reading. A failing or silent command reports
/// Unavailable; output that does not parse reports Unparsable.
class CommandProbe final : public GpuProbe {
public:
    explicit CommandProbe(std::string command) : command_(std::move(command)) {}
    ProbeReading read() override;

private:
    std::string command_;
};

struct GpuStats {
    double util_mean = 0.0;
    double util_max = 0.0;
    double mem_mean = 0.0;
    double mem_max = 0.0;
    std::size_t samples = 0;
};

/// Aggregate mean and max of each channel; nullopt for an empty buffer.
std::optional<GpuStats> aggregate(const std::vector<GpuSample>& samples);

/// Polls a probe on a background thread between start() and stop().
/// The first Unavailable or Unparsable reading disables sampling for the
/// rest of the run; the benchmark carries on without telemetry.
class TelemetrySampler {
public:
    TelemetrySampler(GpuProbe& probe, std::chrono::milliseconds interval);
    ~TelemetrySampler();

    TelemetrySampler(const TelemetrySampler&) = delete;
    TelemetrySampler& operator=(const TelemetrySampler&) = delete;

    void start();
    void stop();

    std::optional<GpuSample> latest() const;
    std::vector<GpuSample> samples() const;
    std::optional<GpuStats> stats() const;
    bool disabled() const;

private:
    void run(std::stop_token stop);

    GpuProbe& probe_;
    std::chrono::milliseconds interval_;
    mutable std::mutex mu_;
    std::condition_variable_any wake_;
    std::vector<GpuSample> samples_;
    bool disabled_ = false;
    std::jthread worker_;
};

} // namespace ragtutor
