#include "cli.hpp"

#include "ragtutor/bench.hpp"
#include "ragtutor/bot.hpp"
#include "ragtutor/error.hpp"
#include "ragtutor/index.hpp"
#include "ragtutor/ingest.hpp"
#include "ragtutor/rag.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

namespace ragtutor::cli {
namespace {

constexpr std::string_view kDefaultBenchPrompt =
    "In one paragraph, explain what GPU offloading does in llama.cpp and why it speeds up inference.";

constexpr std::string_view kMockAnswer =
    "This answer comes from the offline mock backend. Set BACKEND_ENDPOINT to an inference server "
    "to get generated answers; the sources below are the course passages that would ground it.";

struct Options {
    std::string env_file = ".env";
    bool verbose = false;

    std::string corpus_dir;
    std::string index_path;
    std::string question;
    int k = 0;

    int poll_timeout_s = 30;

    int iterations = 5;
    std::string prompt{kDefaultBenchPrompt};
    bool discard_warmup = false;
    std::string backend = "auto";
    std::string clock = "steady";
    bool no_telemetry = false;
};

class ScopedLogger {
public:
    ScopedLogger(std::ostream& err, bool verbose) : previous_(spdlog::default_logger()) {
        auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, /*force_flush=*/true);
        auto logger = std::make_shared<spdlog::logger>("ragtutor", std::move(sink));
        logger->set_pattern("[%H:%M:%S.%e] [%l] %v");
        logger->set_level(verbose ? spdlog::level::debug : spdlog::level::info);
        spdlog::set_default_logger(std::move(logger));
    }
    ~ScopedLogger() { spdlog::set_default_logger(previous_); }

private:
    std::shared_ptr<spdlog::logger> previous_;
};

RuntimeConfig load_runtime_config(const Options& opt, const EnvMap& env) {
    std::optional<std::string> dotenv;
    if (std::ifstream in(opt.env_file); in) {
        std::ostringstream buf;
        buf << in.rdbuf();
        dotenv = std::move(buf).str();
    } else if (opt.env_file != ".env") {
        throw Error("cannot read env file " + opt.env_file);
    }
    auto config = load_config(env, dotenv);
    spdlog::debug("config: {}", redacted(config));
    return config;
}

std::unique_ptr<EmbeddingProvider> make_provider(const RuntimeConfig& config) {
    const auto dim = static_cast<std::size_t>(config.embedding_dim);
    if (config.backend_endpoint) return std::make_unique<RemoteEmbeddingProvider>(*config.backend_endpoint, dim);
    return std::make_unique<MockEmbeddingProvider>(dim);
}

std::unique_ptr<GenerationBackend> make_answer_backend(const RuntimeConfig& config) {
    if (config.backend_endpoint) return std::make_unique<LlamaServerBackend>(*config.backend_endpoint);
    return std::make_unique<ScriptedMockBackend>(SteadyClock::instance(), 0.0, 1e6,
                                                 script_tokens(kMockAnswer));
}

VectorIndex load_checked_index(const std::string& path, const EmbeddingProvider& provider) {
    auto index = load_index(path);
    if (index.dim() != provider.dim()) {
        throw Error("index " + path + " has dimension " + std::to_string(index.dim()) + " but EMBEDDING_DIM is " +
                    std::to_string(provider.dim()));
    }
    if (!index.embedder_id().empty() && index.embedder_id() != provider.id()) {
        spdlog::warn("index was built with embedder '{}', querying with '{}'", index.embedder_id(), provider.id());
    }
    return index;
}

int cmd_ingest(const Options& opt, const RuntimeConfig& config, std::ostream& out) {
    const auto docs = load_corpus_dir(opt.corpus_dir);
    const auto chunks = ingest_corpus(docs, config);
    auto provider = make_provider(config);

    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    const auto vectors = embed_texts(*provider, texts);

    VectorIndex index(provider->dim(), provider->id());
    for (std::size_t i = 0; i < chunks.size(); ++i) index.add(chunks[i].chunk_id, vectors[i], metadata_of(chunks[i]));
    save_index(index, opt.index_path);

    out << "indexed " << chunks.size() << " chunk(s) from " << docs.size() << " document(s) into "
        << opt.index_path << '\n';
    return kExitOk;
}

int cmd_query(const Options& opt, RuntimeConfig config, std::ostream& out) {
    if (opt.k > 0) config.top_k = opt.k;
    auto provider = make_provider(config);
    const auto index = load_checked_index(opt.index_path, *provider);
    auto backend = make_answer_backend(config);

    const auto answer = answer_query(opt.question, Pipeline{index, *provider, *backend}, config);
    out << answer.text << '\n';
    if (!answer.citations.empty()) out << "\nSources:\n" << format_citations(answer.citations);
    return kExitOk;
}

int cmd_serve(const Options& opt, const RuntimeConfig& config, std::stop_token stop) {
    if (config.telegram_token.empty()) throw Error("TELEGRAM_BOT_TOKEN is not set");
    auto provider = make_provider(config);
    const auto index = load_checked_index(opt.index_path, *provider);
    auto backend = make_answer_backend(config);

    BotOptions bot_options;
    bot_options.poll_timeout_s = opt.poll_timeout_s;
    spdlog::info("serving {} chunk(s) from {}", index.size(), opt.index_path);
    serve(config, index, *provider, *backend, stop, bot_options);
    spdlog::info("bot stopped");
    return kExitOk;
}

int cmd_bench(const Options& opt, const RuntimeConfig& config, std::ostream& out, std::ostream& err) {
    ManualClock virtual_clock;
    Clock& clock = opt.clock == "virtual" ? static_cast<Clock&>(virtual_clock) : SteadyClock::instance();
    const auto params = GenerationParams::from_config(config);

    std::unique_ptr<GenerationBackend> backend;
    std::string kind = opt.backend;
    if (kind == "auto") kind = config.backend_endpoint ? "remote" : "mock";
    if (kind == "remote") {
        if (!config.backend_endpoint) throw Error("--backend remote needs BACKEND_ENDPOINT");
        if (opt.clock == "virtual") throw Error("--clock virtual cannot time a remote backend");
        backend = std::make_unique<LlamaServerBackend>(*config.backend_endpoint);
    } else if (kind == "replay") {
        backend = std::make_unique<ReplayBackend>(clock, reference_run_profiles());
    } else {
        // 0.1 s to first token, 16 tokens/s: the measured laptop-GPU operating point.
        std::vector<std::string> tokens;
        for (int i = 0; i < params.max_tokens; ++i) tokens.push_back(i == 0 ? "tok" : " tok");
        backend = std::make_unique<ScriptedMockBackend>(clock, 0.1, 16.0, std::move(tokens));
    }

    std::unique_ptr<CommandProbe> probe;
    std::unique_ptr<TelemetrySampler> sampler;
    if (!opt.no_telemetry && !config.gpu_probe_cmd.empty()) {
        probe = std::make_unique<CommandProbe>(config.gpu_probe_cmd);
        sampler = std::make_unique<TelemetrySampler>(*probe, std::chrono::milliseconds(config.gpu_probe_interval_ms));
    }

    BenchmarkOptions bench_options;
    bench_options.discard_warmup = opt.discard_warmup;
    bench_options.progress = &err;
    bench_options.telemetry = sampler.get();

    const auto summary = run_benchmark(*backend, opt.prompt, params, opt.iterations, bench_options);
    err << "\n=== SUMMARY ===\n" << std::flush;
    out << summary_json(summary) << '\n';
    return summary.complete ? kExitOk : kExitRuntime;
}

std::string env_help() {
    std::string text = "Environment (also read from the --env-file, environment wins):\n";
    for (const auto& [name, what] : config_variables()) {
        text += "  " + std::string(name) + std::string(name.size() < 22 ? 22 - name.size() : 1, ' ') +
                std::string(what) + "\n";
    }
    return text;
}

} // namespace

int run(const std::vector<std::string>& args, const EnvMap& env, std::ostream& out, std::ostream& err,
        std::stop_token stop) {
    Options opt;
    CLI::App app{"Course assistant: retrieval-augmented answers over course material"};
    app.name("ragtutor");
    app.require_subcommand(1, 1);
    app.footer(env_help());
    app.add_option("--env-file", opt.env_file, "dotenv file to read (default: ./.env if present)");
    app.add_flag("-v,--verbose", opt.verbose, "debug logging");

    auto* ingest = app.add_subcommand("ingest", "chunk and embed a corpus directory into an index file");
    ingest->add_option("--corpus", opt.corpus_dir, "directory of .txt/.md files")->required();
    ingest->add_option("--out", opt.index_path, "index file to write")->required();

    auto* query = app.add_subcommand("query", "answer one question from an index");
    query->add_option("--index", opt.index_path, "index file built by ingest")->required();
    query->add_option("--question", opt.question, "question text")->required();
    query->add_option("--k", opt.k, "chunks to retrieve (default TOP_K)")->check(CLI::PositiveNumber);

    auto* serve_cmd = app.add_subcommand("serve", "run the Telegram bot");
    serve_cmd->add_option("--index", opt.index_path, "index file built by ingest")->required();
    serve_cmd->add_option("--poll-timeout", opt.poll_timeout_s, "long-poll timeout in seconds")
        ->check(CLI::Range(1, 50));

    auto* bench = app.add_subcommand("bench", "measure TTFB and tokens/s over repeated generations");
    bench->add_option("--iterations", opt.iterations, "number of runs")->check(CLI::PositiveNumber);
    bench->add_option("--prompt", opt.prompt, "prompt to generate from");
    bench->add_flag("--discard-warmup", opt.discard_warmup, "leave the first run out of the statistics");
    bench->add_option("--backend", opt.backend, "auto, mock, replay or remote")
        ->check(CLI::IsMember({"auto", "mock", "replay", "remote"}));
    bench->add_option("--clock", opt.clock, "steady (real time) or virtual (mock/replay only)")
        ->check(CLI::IsMember({"steady", "virtual"}));
    bench->add_flag("--no-telemetry", opt.no_telemetry, "skip GPU_PROBE_CMD sampling");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\nRun with --help for usage.\n";
        return kExitUsage;
    }

    ScopedLogger logger(err, opt.verbose);
    try {
        const auto config = load_runtime_config(opt, env);
        if (*ingest) return cmd_ingest(opt, config, out);
        if (*query) return cmd_query(opt, config, out);
        if (*serve_cmd) return cmd_serve(opt, config, stop);
        return cmd_bench(opt, config, out, err);
    } catch (const std::exception& e) {
        std::string what = e.what();
        std::replace(what.begin(), what.end(), '\n', ' ');
        err << "error: " << what << '\n';
        return kExitRuntime;
    }
}

} // namespace ragtutor::cli
