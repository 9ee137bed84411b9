#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ragtutor {

/// Unit-length float vector. Only normalize() and from_unit() construct one,
/// so every instance satisfies |v| = 1 within 1e-6.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    /// Adopt values that are already unit length. Throws ArgumentError when
    /// the norm is off by more than `tolerance` or any entry is non-finite.
    static EmbeddingVector from_unit(std::vector<float> values, double tolerance = 1e-5);

    std::span<const float> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    float operator[](std::size_t i) const noexcept { return values_[i]; }

    bool operator==(const EmbeddingVector&) const = default;

private:
    friend EmbeddingVector normalize(std::span<const float> raw);
    explicit EmbeddingVector(std::vector<float> v) : values_(std::move(v)) {}

    std::vector<float> values_;
};

/// v / |v|. Throws DegenerateInputError for a zero (or non-finite) vector.
EmbeddingVector normalize(std::span<const float> raw);

/// Sequential double-precision dot product; equals cosine similarity for unit vectors.
double dot(std::span<const float> a, std::span<const float> b);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::size_t dim() const noexcept = 0;

    /// Stable identifier stored alongside an index so that queries can be
    /// checked against the provider that built it.
    virtual std::string id() const = 0;

    /// One vector per text, same order. Implementations may assume every text is non-empty.
    virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const = 0;
};

/// Validates inputs, calls the provider and checks the dimension of every result.
std::vector<EmbeddingVector> embed_texts(const EmbeddingProvider& provider, std::span<const std::string> texts);
EmbeddingVector embed_one(const EmbeddingProvider& provider, const std::string& text);

/// Deterministic offline embedding.
///
/// The text is padded with start/end markers and split into its byte
/// 3-gram multiset. Each distinct 3-gram seeds a SplitMix64 stream via its
/// FNV-1a hash; the stream yields `dim` uniform values in [-1, 1) that are
/// added to an accumulator weighted by the 3-gram's multiplicity. The sum
/// is normalized. Texts that share 3-grams share accumulator terms, so
/// their expected cosine similarity grows with the overlap.
EmbeddingVector mock_embed(std::string_view text, std::size_t dim);

class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit MockEmbeddingProvider(std::size_t dim);

    std::size_t dim() const noexcept override { return dim_; }
    std::string id() const override;
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override;

private:
    std::size_t dim_;
};

struct RemoteEmbeddingOptions {
    std::size_t batch_size = 64;
    int max_attempts = 3;
    std::chrono::milliseconds retry_delay{200};
    std::chrono::seconds timeout{60};
};

/// Client for a JSON embedding server:
/// POST <endpoint>/embed {"texts":[...]} -> {"vectors":[[...], ...]}.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    RemoteEmbeddingProvider(std::string endpoint, std::size_t dim, RemoteEmbeddingOptions options = {});

    std::size_t dim() const noexcept override { return dim_; }
    std::string id() const override;
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override;

private:
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;

    std::string endpoint_;
    std::size_t dim_;
    RemoteEmbeddingOptions options_;
};

} // namespace ragtutor
