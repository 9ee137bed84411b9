#pragma once

#include "ragtutor/embed.hpp"
#include "ragtutor/ingest.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ragtutor {

/// What the index remembers about a chunk besides its vector.
struct ChunkMetadata {
    std::string doc_id;
    std::string origin;
    std::size_t seq = 0;
    CharSpan span;
    std::string text;

    bool operator==(const ChunkMetadata&) const = default;
};

ChunkMetadata metadata_of(const Chunk& chunk);

struct SearchHit {
    std::string chunk_id;
    double score = 0.0; // cosine similarity
    std::size_t rank = 0;
    ChunkMetadata metadata;
};

/// Exact (brute-force) cosine-similarity index over unit vectors.
///
/// Vectors live in one contiguous row-major float block in insertion order.
/// Search scores every entry with a double-precision dot product and keeps
/// the k best; ties go to the earlier insertion.
class VectorIndex {
public:
    explicit VectorIndex(std::size_t dim, std::string embedder_id = {});

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    const std::string& embedder_id() const noexcept { return embedder_id_; }

    /// Throws ArgumentError on duplicate id or dimension mismatch.
    void add(std::string chunk_id, const EmbeddingVector& v, ChunkMetadata metadata);

    bool contains(std::string_view chunk_id) const;
    std::optional<std::size_t> position(std::string_view chunk_id) const;

    const std::string& id_at(std::size_t pos) const { return ids_.at(pos); }
    const ChunkMetadata& metadata_at(std::size_t pos) const { return metadata_.at(pos); }
    std::span<const float> vector_at(std::size_t pos) const;

    /// min(k, size) hits, score descending. Throws ArgumentError for k < 1
    /// or a query of the wrong dimension.
    std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t k) const;

    bool operator==(const VectorIndex& other) const;

private:
    friend VectorIndex load_index(const std::filesystem::path& path);
    void append_unchecked(std::string chunk_id, std::span<const float> values, ChunkMetadata metadata);

    std::size_t dim_;
    std::string embedder_id_;
    std::vector<float> vectors_;
    std::vector<std::string> ids_;
    std::vector<ChunkMetadata> metadata_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// On-disk layout, all integers little-endian:
///
///   offset  size  field
///        0     4  magic "RTIX"
///        4     4  format version (kIndexFormatVersion)
///        8     4  dim
///       12     8  entry count
///       20     8  metadata block length in bytes
///       28     4  CRC-32 of everything after the header
///       32     -  count * dim float32 values, row-major
///        -     -  UTF-8 JSON metadata block
inline constexpr std::uint32_t kIndexFormatVersion = 1;
inline constexpr std::size_t kIndexHeaderSize = 32;

/// Writes to a temporary sibling file, then renames over `path`.
void save_index(const VectorIndex& index, const std::filesystem::path& path);

/// Throws IntegrityError (BadMagic, VersionMismatch, Truncated,
/// ChecksumMismatch, Malformed); never returns a partially loaded index.
VectorIndex load_index(const std::filesystem::path& path);

} // namespace ragtutor
