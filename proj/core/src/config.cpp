#include "ragtutor/config.hpp"

#include "ragtutor/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace ragtutor {
namespace {

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

int parse_int(std::string_view key, std::string_view raw) {
    const auto value = trim(raw);
    int out = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (value.empty() || ec != std::errc{} || ptr != end) {
        throw ConfigError(std::string(key),
                          "invalid integer for " + std::string(key) + ": '" + std::string(value) + "'");
    }
    return out;
}

double parse_double(std::string_view key, std::string_view raw) {
    const auto value = trim(raw);
    double out = 0.0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (value.empty() || ec != std::errc{} || ptr != end) {
        throw ConfigError(std::string(key),
                          "invalid number for " + std::string(key) + ": '" + std::string(value) + "'");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view raw) {
    std::string value(trim(raw));
    std::transform(value.begin(), value.end(), value.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
    if (value == "0" || value == "false" || value == "no" || value == "off") return false;
    throw ConfigError(std::string(key), "invalid boolean for " + std::string(key) + ": '" + value + "'");
}

std::string format_double(double v) {
    // Shortest representation that round-trips exactly.
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string mask(const std::string& secret) {
    return secret.empty() ? "<unset>" : "<redacted>";
}

} // namespace

const std::map<std::string_view, std::string_view>& config_variables() {
    static const std::map<std::string_view, std::string_view> vars = {
        {"MODEL_PATH", "model file path forwarded to the inference server"},
        {"N_CTX", "context window in tokens (default 768)"},
        {"N_BATCH", "prompt processing batch size (default 256)"},
        {"N_GPU_LAYERS", "layers offloaded to GPU by the server (default 20)"},
        {"FLASH_ATTN", "enable flash attention on the server (default 1)"},
        {"TENSOR_SPLIT", "GPU share in [0,1] (default 0.85)"},
        {"TELEGRAM_BOT_TOKEN", "Telegram bot token (secret, never logged)"},
        {"TELEGRAM_API_BASE", "Telegram Bot API base URL"},
        {"EMBEDDING_DIM", "embedding vector dimension (default 384)"},
        {"TOP_K", "chunks retrieved per question (default 4)"},
        {"CHUNK_SIZE", "chunk size in estimated tokens (default 512)"},
        {"CHUNK_OVERLAP", "overlap between chunks in estimated tokens (default 64)"},
        {"MAX_OUTPUT_TOKENS", "generation cap in tokens (default 128)"},
        {"TEMPERATURE", "sampling temperature (default 0.2)"},
        {"BACKEND_ENDPOINT", "inference server URL; unset uses offline mocks"},
        {"GPU_PROBE_CMD", "command printing 'util_pct, mem_mb' for benchmark telemetry"},
        {"GPU_PROBE_INTERVAL_MS", "telemetry polling interval (default 500)"},
    };
    return vars;
}

EnvMap parse_dotenv(std::string_view text) {
    EnvMap out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        auto line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
            throw ConfigError(".env", ".env line " + std::to_string(line_no) + " is not KEY=VALUE");
        }
        out.insert_or_assign(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    return out;
}

void validate(const RuntimeConfig& c) {
    const auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ValidationError(what);
    };
    require(c.n_ctx > 0, "N_CTX must be positive");
    require(c.n_batch > 0, "N_BATCH must be positive");
    require(c.n_gpu_layers >= 0, "N_GPU_LAYERS must be non-negative");
    require(c.tensor_split >= 0.0 && c.tensor_split <= 1.0, "TENSOR_SPLIT must lie in [0, 1]");
    require(c.embedding_dim > 0, "EMBEDDING_DIM must be positive");
    require(c.top_k > 0, "TOP_K must be positive");
    require(c.chunk_size_tokens > 0, "CHUNK_SIZE must be positive");
    require(c.chunk_overlap_tokens >= 0, "CHUNK_OVERLAP must be non-negative");
    require(c.chunk_overlap_tokens < c.chunk_size_tokens, "CHUNK_OVERLAP must be smaller than CHUNK_SIZE");
    require(c.max_output_tokens > 0, "MAX_OUTPUT_TOKENS must be positive");
    require(c.max_output_tokens < c.n_ctx, "MAX_OUTPUT_TOKENS must be smaller than N_CTX");
    require(c.temperature >= 0.0, "TEMPERATURE must be non-negative");
    require(c.gpu_probe_interval_ms > 0, "GPU_PROBE_INTERVAL_MS must be positive");
}

RuntimeConfig load_config(const EnvMap& env, std::optional<std::string_view> dotenv_text) {
    EnvMap merged = dotenv_text ? parse_dotenv(*dotenv_text) : EnvMap{};
    for (const auto& [k, v] : env) merged.insert_or_assign(k, v);

    RuntimeConfig c;
    const auto lookup = [&](std::string_view key) -> const std::string* {
        auto it = merged.find(key);
        return it == merged.end() ? nullptr : &it->second;
    };
    const auto set_int = [&](std::string_view key, int& field) {
        if (const auto* v = lookup(key)) field = parse_int(key, *v);
    };
    const auto set_double = [&](std::string_view key, double& field) {
        if (const auto* v = lookup(key)) field = parse_double(key, *v);
    };
    const auto set_string = [&](std::string_view key, std::string& field) {
        if (const auto* v = lookup(key)) field = *v;
    };

    set_string("MODEL_PATH", c.model_path);
    set_int("N_CTX", c.n_ctx);
    set_int("N_BATCH", c.n_batch);
    set_int("N_GPU_LAYERS", c.n_gpu_layers);
    if (const auto* v = lookup("FLASH_ATTN")) c.flash_attn = parse_bool("FLASH_ATTN", *v);
    set_double("TENSOR_SPLIT", c.tensor_split);
    set_string("TELEGRAM_BOT_TOKEN", c.telegram_token);
    set_string("TELEGRAM_API_BASE", c.telegram_api_base);
    set_int("EMBEDDING_DIM", c.embedding_dim);
    set_int("TOP_K", c.top_k);
    set_int("CHUNK_SIZE", c.chunk_size_tokens);
    set_int("CHUNK_OVERLAP", c.chunk_overlap_tokens);
    set_int("MAX_OUTPUT_TOKENS", c.max_output_tokens);
    set_double("TEMPERATURE", c.temperature);
    if (const auto* v = lookup("BACKEND_ENDPOINT"); v && !trim(*v).empty()) {
        c.backend_endpoint = std::string(trim(*v));
    }
    set_string("GPU_PROBE_CMD", c.gpu_probe_cmd);
    set_int("GPU_PROBE_INTERVAL_MS", c.gpu_probe_interval_ms);

    validate(c);
    return c;
}

std::string to_dotenv(const RuntimeConfig& c) {
    std::ostringstream os;
    os << "MODEL_PATH=" << c.model_path << '\n'
       << "N_CTX=" << c.n_ctx << '\n'
       << "N_BATCH=" << c.n_batch << '\n'
       << "N_GPU_LAYERS=" << c.n_gpu_layers << '\n'
       << "FLASH_ATTN=" << (c.flash_attn ? 1 : 0) << '\n'
       << "TENSOR_SPLIT=" << format_double(c.tensor_split) << '\n'
       << "TELEGRAM_API_BASE=" << c.telegram_api_base << '\n'
       << "EMBEDDING_DIM=" << c.embedding_dim << '\n'
       << "TOP_K=" << c.top_k << '\n'
       << "CHUNK_SIZE=" << c.chunk_size_tokens << '\n'
       << "CHUNK_OVERLAP=" << c.chunk_overlap_tokens << '\n'
       << "MAX_OUTPUT_TOKENS=" << c.max_output_tokens << '\n'
       << "TEMPERATURE=" << format_double(c.temperature) << '\n';
    if (c.backend_endpoint) os << "BACKEND_ENDPOINT=" << *c.backend_endpoint << '\n';
    os << "GPU_PROBE_CMD=" << c.gpu_probe_cmd << '\n'
       << "GPU_PROBE_INTERVAL_MS=" << c.gpu_probe_interval_ms << '\n';
    return os.str();
}

std::string redacted(const RuntimeConfig& c) {
    std::ostringstream os;
    os << "model=" << c.model_path << " n_ctx=" << c.n_ctx << " n_batch=" << c.n_batch
       << " n_gpu_layers=" << c.n_gpu_layers << " flash_attn=" << (c.flash_attn ? "true" : "false")
       << " tensor_split=" << format_double(c.tensor_split) << " embedding_dim=" << c.embedding_dim
       << " top_k=" << c.top_k << " chunk=" << c.chunk_size_tokens << "/" << c.chunk_overlap_tokens
       << " max_output_tokens=" << c.max_output_tokens << " temperature=" << format_double(c.temperature)
       << " backend=" << c.backend_endpoint.value_or("mock") << " telegram_token=" << mask(c.telegram_token);
    return os.str();
}

std::ostream& operator<<(std::ostream& os, const RuntimeConfig& config) {
    return os << redacted(config);
}

} // namespace ragtutor
