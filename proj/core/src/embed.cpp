#include "ragtutor/embed.hpp"

#include "http_util.hpp"
#include "ragtutor/error.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <map>
#include <thread>

namespace ragtutor {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = kFnvOffset;
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

struct SplitMix64 {
    std::uint64_t state;

    std::uint64_t next() noexcept {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Top 53 bits mapped to [-1, 1).
    double uniform_signed() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-52 - 1.0;
    }
};

} // namespace

EmbeddingVector EmbeddingVector::from_unit(std::vector<float> values, double tolerance) {
    double sq = 0.0;
    for (float x : values) {
        if (!std::isfinite(x)) throw ArgumentError("embedding contains a non-finite value");
        sq += static_cast<double>(x) * x;
    }
    if (values.empty() || std::abs(std::sqrt(sq) - 1.0) > tolerance) {
        throw ArgumentError("embedding is not unit length");
    }
    return EmbeddingVector(std::move(values));
}

EmbeddingVector normalize(std::span<const float> raw) {
    double sq = 0.0;
    for (float x : raw) sq += static_cast<double>(x) * x;
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw DegenerateInputError("cannot normalize a zero or non-finite vector");
    }
    std::vector<float> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i] / norm);
    return EmbeddingVector(std::move(out));
}

double dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw ArgumentError("dot: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    return dot(a.values(), b.values());
}

std::vector<EmbeddingVector> embed_texts(const EmbeddingProvider& provider, std::span<const std::string> texts) {
    for (const auto& t : texts) {
        if (t.empty()) throw ArgumentError("cannot embed an empty text");
    }
    if (texts.empty()) return {};
    auto vectors = provider.embed(texts);
    if (vectors.size() != texts.size()) {
        throw ProtocolError("provider returned " + std::to_string(vectors.size()) + " vectors for " +
                            std::to_string(texts.size()) + " texts");
    }
    for (const auto& v : vectors) {
        if (v.size() != provider.dim()) {
            throw ProtocolError("provider returned dimension " + std::to_string(v.size()) + ", expected " +
                                std::to_string(provider.dim()));
        }
    }
    return vectors;
}

EmbeddingVector embed_one(const EmbeddingProvider& provider, const std::string& text) {
    return std::move(embed_texts(provider, std::span(&text, 1)).front());
}

EmbeddingVector mock_embed(std::string_view text, std::size_t dim) {
    std::string padded;
    padded.reserve(text.size() + 2);
    padded += '\x02';
    padded += text;
    padded += '\x03';

    // Ordered so the floating-point accumulation order is fixed.
    std::map<std::string_view, int> grams;
    const std::string_view p = padded;
    for (std::size_t i = 0; i + 3 <= p.size(); ++i) ++grams[p.substr(i, 3)];

    std::vector<double> acc(dim, 0.0);
    for (const auto& [gram, count] : grams) {
        SplitMix64 rng{fnv1a(gram)};
        for (std::size_t j = 0; j < dim; ++j) acc[j] += count * rng.uniform_signed();
    }

    std::vector<float> raw(acc.begin(), acc.end());
    try {
        return normalize(raw);
    } catch (const DegenerateInputError&) {
        // Practically unreachable; keeps the function total.
        std::vector<float> basis(dim, 0.0f);
        if (dim > 0) basis[0] = 1.0f;
        return normalize(basis);
    }
}

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dim) : dim_(dim) {
    if (dim < 2) throw ArgumentError("mock embedding dimension must be at least 2");
}

std::string MockEmbeddingProvider::id() const {
    return "mock-trigram-v1/" + std::to_string(dim_);
}

std::vector<EmbeddingVector> MockEmbeddingProvider::embed(std::span<const std::string> texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(mock_embed(t, dim_));
    return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::string endpoint, std::size_t dim,
                                                 RemoteEmbeddingOptions options)
    : endpoint_(std::move(endpoint)), dim_(dim), options_(options) {
    if (dim == 0) throw ArgumentError("embedding dimension must be positive");
    if (options_.batch_size == 0) options_.batch_size = 1;
    detail::split_url(endpoint_); // validate early
}

std::string RemoteEmbeddingProvider::id() const {
    return "remote:" + endpoint_ + "/" + std::to_string(dim_);
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::embed(std::span<const std::string> texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); i += options_.batch_size) {
        auto batch = embed_batch(texts.subspan(i, std::min(options_.batch_size, texts.size() - i)));
        std::move(batch.begin(), batch.end(), std::back_inserter(out));
    }
    return out;
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
    const auto url = detail::split_url(endpoint_);
    const auto path = detail::join_path(url.base_path, "/embed");
    const std::string body = nlohmann::json{{"texts", texts}}.dump();

    auto client = detail::make_client(url, options_.timeout);
    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
        auto res = client->Post(path, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
        } else if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
        } else if (res->status != 200) {
            throw ProtocolError("embedding server answered HTTP " + std::to_string(res->status));
        } else {
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                throw ProtocolError(std::string("embedding response is not JSON: ") + e.what());
            }
            if (!doc.is_object() || !doc.contains("vectors") || !doc["vectors"].is_array()) {
                throw ProtocolError("embedding response lacks a 'vectors' array");
            }
            const auto& rows = doc["vectors"];
            if (rows.size() != texts.size()) {
                throw ProtocolError("embedding response has " + std::to_string(rows.size()) + " vectors for " +
                                    std::to_string(texts.size()) + " texts");
            }
            std::vector<EmbeddingVector> out;
            out.reserve(rows.size());
            for (const auto& row : rows) {
                if (!row.is_array() || row.size() != dim_) {
                    throw ProtocolError("embedding dimension mismatch: expected " + std::to_string(dim_));
                }
                std::vector<float> raw;
                raw.reserve(dim_);
                for (const auto& x : row) {
                    if (!x.is_number()) throw ProtocolError("embedding entry is not a number");
                    raw.push_back(x.get<float>());
                }
                try {
                    out.push_back(normalize(raw));
                } catch (const DegenerateInputError&) {
                    throw ProtocolError("embedding server returned a zero vector");
                }
            }
            return out;
        }
        spdlog::warn("embedding request failed (attempt {}/{}): {}", attempt, options_.max_attempts, last_error);
        if (attempt < options_.max_attempts) std::this_thread::sleep_for(options_.retry_delay * attempt);
    }
    throw TransportError("embedding server unreachable after " + std::to_string(options_.max_attempts) +
                             " attempts: " + last_error,
                         options_.max_attempts);
}

} // namespace ragtutor
