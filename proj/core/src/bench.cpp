#include "ragtutor/bench.hpp"

#include "ragtutor/error.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ragtutor {
namespace {

double round3(double x) {
    return std::round(x * 1000.0) / 1000.0;
}

nlohmann::ordered_json number(double x) {
    const double r = round3(x);
    if (r == std::trunc(r) && std::abs(r) < 1e15) return static_cast<std::int64_t>(r);
    return r;
}

nlohmann::ordered_json stats_json(const SummaryStats& s) {
    return {{"mean", number(s.mean)},
            {"median", number(s.median)},
            {"p95", number(s.p95)},
            {"min", number(s.min)},
            {"max", number(s.max)}};
}

template <typename Field>
std::vector<double> column(std::span<const IterationMetrics> runs, Field field) {
    std::vector<double> out;
    out.reserve(runs.size());
    for (const auto& r : runs) out.push_back(static_cast<double>(r.*field));
    return out;
}

} // namespace

IterationMetrics metrics_of(const GenerationResult& r) {
    IterationMetrics m;
    m.ttfb_s = r.ttfb_s;
    m.total_latency_s = r.total_duration_s;
    m.completion_tokens = r.completion_tokens;
    m.prompt_tokens = r.prompt_tokens;
    const double gen = r.total_duration_s - r.ttfb_s;
    m.gen_tps = gen > 0.0 ? r.completion_tokens / gen : 0.0;
    m.total_tps = r.total_duration_s > 0.0 ? (r.prompt_tokens + r.completion_tokens) / r.total_duration_s : 0.0;
    return m;
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw ArgumentError("quantile of an empty sample");
    const double rank = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

SummaryStats summarize(std::span<const double> samples) {
    if (samples.empty()) throw ArgumentError("cannot summarize an empty sample");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());

    SummaryStats s;
    const std::size_t n = sorted.size();
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
    // Guard against the mean drifting outside [min, max] by rounding.
    s.mean = std::clamp(s.mean, sorted.front(), sorted.back());
    s.median = n % 2 == 1 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
    s.p95 = quantile_sorted(sorted, 0.95);
    s.min = sorted.front();
    s.max = sorted.back();
    return s;
}

double estimate_total_latency(double ttfb_s, double n_out, double r_gen) {
    if (!(r_gen > 0.0)) throw ArgumentError("generation rate must be positive");
    if (n_out < 0.0) throw ArgumentError("output token count must be non-negative");
    return ttfb_s + n_out / r_gen;
}

std::string progress_line(std::size_t i, std::size_t n, const IterationMetrics& m,
                          const std::optional<GpuSample>& gpu) {
    auto line = fmt::format("[{}/{}] TTFB={:.3f}s | gen_tps={:.2f} | total={:.2f}s | comp_tok~{}", i, n, m.ttfb_s,
                            m.gen_tps, m.total_latency_s, m.completion_tokens);
    if (gpu) line += fmt::format(" | GPU sm={:.0f}% mem={:.0f}MB", gpu->util_sm_pct, gpu->mem_mb);
    return line;
}

std::string truncate_prompt(std::string_view prompt, std::size_t max_chars) {
    std::size_t chars = 0;
    for (std::size_t i = 0; i < prompt.size(); ++i) {
        if ((static_cast<unsigned char>(prompt[i]) & 0xC0) == 0x80) continue;
        if (chars == max_chars) return std::string(prompt.substr(0, i)) + "…";
        ++chars;
    }
    return std::string(prompt);
}

BenchmarkSummary run_benchmark(GenerationBackend& backend, std::string_view prompt, const GenerationParams& params,
                               int iterations, const BenchmarkOptions& options) {
    if (iterations < 1) throw ArgumentError("iterations must be at least 1");
    if (options.discard_warmup && iterations < 2) {
        throw ArgumentError("discarding the warm-up iteration needs at least 2 iterations");
    }

    BenchmarkSummary summary;
    summary.model = params.model_path;
    summary.n_ctx = params.n_ctx;
    summary.n_batch = params.n_batch;
    summary.n_gpu_layers = params.n_gpu_layers;
    summary.flash_attn = params.flash_attn;
    summary.prompt = truncate_prompt(prompt);
    summary.iterations_requested = iterations;
    summary.warmup_discarded = options.discard_warmup;

    if (options.telemetry) options.telemetry->start();
    for (int i = 1; i <= iterations; ++i) {
        try {
            const auto result = generate(backend, prompt, params);
            summary.runs.push_back(metrics_of(result));
        } catch (const Error& e) {
            summary.complete = false;
            summary.error = fmt::format("iteration {}/{} failed: {}", i, iterations, e.what());
            spdlog::error("{}", summary.error);
            break;
        }
        if (options.progress) {
            const auto gpu = options.telemetry ? options.telemetry->latest() : std::nullopt;
            *options.progress << progress_line(static_cast<std::size_t>(i), static_cast<std::size_t>(iterations),
                                               summary.runs.back(), gpu)
                              << '\n'
                              << std::flush;
        }
    }
    if (options.telemetry) {
        options.telemetry->stop();
        summary.gpu = options.telemetry->stats();
    }

    std::span<const IterationMetrics> counted(summary.runs);
    if (options.discard_warmup && !counted.empty()) counted = counted.subspan(1);
    if (!counted.empty()) {
        summary.ttfb_s = summarize(column(counted, &IterationMetrics::ttfb_s));
        summary.gen_tps = summarize(column(counted, &IterationMetrics::gen_tps));
        summary.total_latency_s = summarize(column(counted, &IterationMetrics::total_latency_s));
        summary.total_tps = summarize(column(counted, &IterationMetrics::total_tps));
    }
    return summary;
}

std::string summary_json(const BenchmarkSummary& s) {
    nlohmann::ordered_json doc;
    doc["model"] = s.model;
    doc["n_ctx"] = s.n_ctx;
    doc["n_batch"] = s.n_batch;
    doc["n_gpu_layers"] = s.n_gpu_layers;
    doc["flash_attn"] = s.flash_attn;
    doc["prompt"] = s.prompt;
    doc["iterations"] = s.runs.size();

    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    if (s.ttfb_s) metrics["ttfb_s"] = stats_json(*s.ttfb_s);
    if (s.gen_tps) metrics["gen_tps"] = stats_json(*s.gen_tps);
    if (s.total_latency_s) metrics["total_latency_s"] = stats_json(*s.total_latency_s);
    if (s.gpu) {
        metrics["gpu_util_sm_pct"] = {{"mean", number(s.gpu->util_mean)}, {"max", number(s.gpu->util_max)}};
        metrics["gpu_mem_mb"] = {{"mean", number(s.gpu->mem_mean)}, {"max", number(s.gpu->mem_max)}};
    }
    doc["metrics"] = std::move(metrics);

    if (s.total_tps) doc["total_tps"] = stats_json(*s.total_tps);
    doc["p95_method"] = kP95Method;
    doc["warmup_discarded"] = s.warmup_discarded;
    if (!s.complete) {
        doc["incomplete"] = true;
        doc["iterations_requested"] = s.iterations_requested;
        doc["error"] = s.error;
    }
    return doc.dump(2, ' ', /*ensure_ascii=*/true);
}

} // namespace ragtutor
