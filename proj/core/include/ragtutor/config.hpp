#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace ragtutor {

using EnvMap = std::map<std::string, std::string, std::less<>>;

struct RuntimeConfig {
    // Forwarded verbatim to the inference server.
    std::string model_path = "/models/mistral-7b-instruct-v0.1.Q4_K_M.gguf";
    int n_ctx = 768;
    int n_batch = 256;
    int n_gpu_layers = 20;
    bool flash_attn = true;
    double tensor_split = 0.85;

    std::string telegram_token; // secret, see redacted()
    std::string telegram_api_base = "https://api.telegram.org";

    int embedding_dim = 384;
    int top_k = 4;
    int chunk_size_tokens = 512;
    int chunk_overlap_tokens = 64;
    int max_output_tokens = 128;
    double temperature = 0.2;
    std::optional<std::string> backend_endpoint; // unset selects the offline mocks

    std::string gpu_probe_cmd =
        "nvidia-smi --query-gpu=utilization.gpu,memory.used --format=csv,noheader,nounits";
    int gpu_probe_interval_ms = 500;

    bool operator==(const RuntimeConfig&) const = default;
};

/// Parse `.env` text: KEY=VALUE lines, `#` comments, blank lines ignored.
/// No quoting or escaping; the value is everything after the first `=`,
/// with surrounding whitespace trimmed.
EnvMap parse_dotenv(std::string_view text);

/// Build a validated config. Keys in `env` override keys in `dotenv_text`;
/// absent keys keep their defaults.
///
/// Throws ConfigError (naming the key) for malformed values and
/// ValidationError when cross-field constraints fail.
RuntimeConfig load_config(const EnvMap& env, std::optional<std::string_view> dotenv_text = std::nullopt);

/// Check every invariant of a config built by hand.
void validate(const RuntimeConfig& config);

/// Render as `.env` text that load_config reads back into the same config.
/// TELEGRAM_BOT_TOKEN is never written; supply it through the environment.
std::string to_dotenv(const RuntimeConfig& config);

/// One-line human readable summary with the token masked.
std::string redacted(const RuntimeConfig& config);

std::ostream& operator<<(std::ostream& os, const RuntimeConfig& config);

/// Environment variable names understood by load_config, in documentation order.
const std::map<std::string_view, std::string_view>& config_variables();

} // namespace ragtutor
