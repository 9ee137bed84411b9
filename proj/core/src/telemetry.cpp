#include "ragtutor/telemetry.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <memory>
#include <sys/wait.h>

namespace ragtutor {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

} // namespace

std::optional<GpuSample> parse_probe_output(std::string_view output) {
    while (!output.empty()) {
        const auto nl = output.find('\n');
        const auto line = trim(output.substr(0, nl));
        output = nl == std::string_view::npos ? std::string_view{} : output.substr(nl + 1);
        if (line.empty()) continue;

        const auto comma = line.find(',');
        if (comma == std::string_view::npos) return std::nullopt;
        auto util = parse_number(line.substr(0, comma));
        auto mem = parse_number(line.substr(comma + 1));
        if (!util || !mem) return std::nullopt;
        return GpuSample{*util, *mem};
    }
    return std::nullopt;
}

ProbeReading CommandProbe::read() {
    const std::string cmd = command_ + " 2>/dev/null";
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
    if (!pipe) return {ProbeReading::Status::Unavailable, {}, "cannot spawn probe command"};

    std::string output;
    std::array<char, 256> buf{};
    while (auto n = std::fread(buf.data(), 1, buf.size(), pipe.get())) output.append(buf.data(), n);
    const int status = pclose(pipe.release());

    if (status != 0 || trim(output).empty()) {
        return {ProbeReading::Status::Unavailable, {}, "probe command failed or printed nothing"};
    }
    if (auto sample = parse_probe_output(output)) return {ProbeReading::Status::Ok, *sample, {}};
    return {ProbeReading::Status::Unparsable, {}, std::string(trim(output.substr(0, 80)))};
}

std::optional<GpuStats> aggregate(const std::vector<GpuSample>& samples) {
    if (samples.empty()) return std::nullopt;
    GpuStats s;
    s.util_max = samples.front().util_sm_pct;
    s.mem_max = samples.front().mem_mb;
    for (const auto& x : samples) {
        s.util_mean += x.util_sm_pct;
        s.mem_mean += x.mem_mb;
        s.util_max = std::max(s.util_max, x.util_sm_pct);
        s.mem_max = std::max(s.mem_max, x.mem_mb);
    }
    s.samples = samples.size();
    s.util_mean /= static_cast<double>(samples.size());
    s.mem_mean /= static_cast<double>(samples.size());
    return s;
}

TelemetrySampler::TelemetrySampler(GpuProbe& probe, std::chrono::milliseconds interval)
    : probe_(probe), interval_(std::max(interval, std::chrono::milliseconds(1))) {}

TelemetrySampler::~TelemetrySampler() {
    stop();
}

void TelemetrySampler::start() {
    if (worker_.joinable()) return;
    worker_ = std::jthread([this](std::stop_token st) { run(st); });
}

void TelemetrySampler::stop() {
    if (!worker_.joinable()) return;
    worker_.request_stop();
    wake_.notify_all();
    worker_.join();
}

void TelemetrySampler::run(std::stop_token stop) {
    while (!stop.stop_requested()) {
        const auto reading = probe_.read();
        {
            std::unique_lock lock(mu_);
            if (reading.status == ProbeReading::Status::Ok) {
                samples_.push_back(reading.sample);
            } else {
                disabled_ = true;
            }
        }
        if (reading.status == ProbeReading::Status::Unavailable) {
            spdlog::info("GPU telemetry unavailable ({}); continuing without it", reading.detail);
            return;
        }
        if (reading.status == ProbeReading::Status::Unparsable) {
            spdlog::warn("GPU probe output not understood ('{}'); telemetry disabled", reading.detail);
            return;
        }
        std::unique_lock lock(mu_);
        wake_.wait_for(lock, stop, interval_, [] { return false; });
    }
}

std::optional<GpuSample> TelemetrySampler::latest() const {
    std::lock_guard lock(mu_);
    if (samples_.empty()) return std::nullopt;
    return samples_.back();
}

std::vector<GpuSample> TelemetrySampler::samples() const {
    std::lock_guard lock(mu_);
    return samples_;
}

std::optional<GpuStats> TelemetrySampler::stats() const {
    std::lock_guard lock(mu_);
    if (disabled_ && samples_.empty()) return std::nullopt;
    return aggregate(samples_);
}

bool TelemetrySampler::disabled() const {
    std::lock_guard lock(mu_);
    return disabled_;
}

} // namespace ragtutor
