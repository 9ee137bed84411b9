#pragma once

#include "ragtutor/llm.hpp"
#include "ragtutor/telemetry.hpp"

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ragtutor {

struct IterationMetrics {
    double ttfb_s = 0.0;
    double gen_tps = 0.0; // completion_tokens / (total_latency_s - ttfb_s)
    double total_latency_s = 0.0;
    int completion_tokens = 0;
    int prompt_tokens = 0;
    double total_tps = 0.0; // (prompt_tokens + completion_tokens) / total_latency_s
};

IterationMetrics metrics_of(const GenerationResult& result);

struct SummaryStats {
    double mean = 0.0;
    double median = 0.0;
    double p95 = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Describes how SummaryStats::p95 is computed; written into the summary JSON.
inline constexpr std::string_view kP95Method = "linear interpolation at rank 0.95*(n-1) of the sorted samples";

/// Linear-interpolated quantile of an ascending-sorted, non-empty sample.
double quantile_sorted(std::span<const double> sorted, double q);

/// Throws ArgumentError on an empty sample.
SummaryStats summarize(std::span<const double> samples);

/// ttfb_s + n_out / r_gen. Throws ArgumentError unless r_gen > 0 and n_out >= 0.
double estimate_total_latency(double ttfb_s, double n_out, double r_gen);

struct BenchmarkSummary {
    std::string model;
    int n_ctx = 0;
    int n_batch = 0;
    int n_gpu_layers = 0;
    bool flash_attn = false;
    std::string prompt; // first 80 characters, "…" appended when cut
    int iterations_requested = 0;
    bool warmup_discarded = false;

    std::vector<IterationMetrics> runs;

    // Absent when no iteration finished (or only the discarded warm-up did).
    std::optional<SummaryStats> ttfb_s;
    std::optional<SummaryStats> gen_tps;
    std::optional<SummaryStats> total_latency_s;
    std::optional<SummaryStats> total_tps;
    std::optional<GpuStats> gpu;

    bool complete = true;
    std::string error; // set when a generation failed and the run was cut short
};

struct BenchmarkOptions {
    bool discard_warmup = false;
    std::ostream* progress = nullptr; // one line per iteration
    TelemetrySampler* telemetry = nullptr;
};

/// Runs `generate` sequentially `iterations` times on one prompt. A failing
/// generation stops the loop; the summary keeps the finished iterations and
/// is marked incomplete.
BenchmarkSummary run_benchmark(GenerationBackend& backend, std::string_view prompt, const GenerationParams& params,
                               int iterations, const BenchmarkOptions& options = {});

/// "[i/N] TTFB=0.350s | gen_tps=16.99 | total=7.24s | comp_tok~117", plus
/// " | GPU sm=21% mem=2904MB" when a telemetry sample is given.
std::string progress_line(std::size_t i, std::size_t n, const IterationMetrics& m,
                          const std::optional<GpuSample>& gpu = std::nullopt);

/// Cut to `max_chars` UTF-8 code points, appending U+2026 when shortened.
std::string truncate_prompt(std::string_view prompt, std::size_t max_chars = 80);

/// Summary as pretty JSON: model, n_ctx, n_batch, n_gpu_layers, flash_attn,
/// prompt, iterations, metrics{ttfb_s, gen_tps, total_latency_s[, gpu_util_sm_pct,
/// gpu_mem_mb]}, followed by total_tps, p95_method and warmup_discarded.
/// Statistics are rounded to 3 decimals; non-ASCII is \u-escaped.
std::string summary_json(const BenchmarkSummary& summary);

} // namespace ragtutor
