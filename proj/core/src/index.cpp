#include "ragtutor/index.hpp"

#include "ragtutor/error.hpp"

#include <json.hpp>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ragtutor {
namespace {

constexpr std::array<char, 4> kMagic = {'R', 'T', 'I', 'X'};

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    }
    return value;
}

std::uint32_t crc32_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in slices.
    constexpr std::size_t kSlice = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kSlice) {
        const auto len = std::min(kSlice, bytes.size() - off);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(len));
    }
    return static_cast<std::uint32_t>(crc);
}

} // namespace

ChunkMetadata metadata_of(const Chunk& chunk) {
    return ChunkMetadata{chunk.doc_id, chunk.origin, chunk.seq, chunk.span, chunk.text};
}

VectorIndex::VectorIndex(std::size_t dim, std::string embedder_id)
    : dim_(dim), embedder_id_(std::move(embedder_id)) {
    if (dim == 0) throw ArgumentError("index dimension must be positive");
}

void VectorIndex::add(std::string chunk_id, const EmbeddingVector& v, ChunkMetadata metadata) {
    if (v.size() != dim_) {
        throw ArgumentError("vector dimension " + std::to_string(v.size()) + " does not match index dimension " +
                            std::to_string(dim_));
    }
    if (by_id_.contains(chunk_id)) throw ArgumentError("duplicate chunk id '" + chunk_id + "'");
    append_unchecked(std::move(chunk_id), v.values(), std::move(metadata));
}

void VectorIndex::append_unchecked(std::string chunk_id, std::span<const float> values, ChunkMetadata metadata) {
    vectors_.insert(vectors_.end(), values.begin(), values.end());
    by_id_.emplace(chunk_id, ids_.size());
    ids_.push_back(std::move(chunk_id));
    metadata_.push_back(std::move(metadata));
}

bool VectorIndex::contains(std::string_view chunk_id) const {
    return position(chunk_id).has_value();
}

std::optional<std::size_t> VectorIndex::position(std::string_view chunk_id) const {
    auto it = by_id_.find(std::string(chunk_id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::span<const float> VectorIndex::vector_at(std::size_t pos) const {
    if (pos >= size()) throw ArgumentError("index position out of range");
    return std::span<const float>(vectors_).subspan(pos * dim_, dim_);
}

std::vector<SearchHit> VectorIndex::search(const EmbeddingVector& query, std::size_t k) const {
    if (k < 1) throw ArgumentError("k must be at least 1");
    if (query.size() != dim_) {
        throw ArgumentError("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                            std::to_string(dim_));
    }

    struct Scored {
        double score;
        std::size_t pos;
    };
    std::vector<Scored> scored(size());
    const auto q = query.values();
    for (std::size_t pos = 0; pos < size(); ++pos) {
        const float* row = vectors_.data() + pos * dim_;
        double acc = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) acc += static_cast<double>(q[j]) * row[j];
        scored[pos] = {acc, pos};
    }

    const auto better = [](const Scored& a, const Scored& b) {
        return a.score > b.score || (a.score == b.score && a.pos < b.pos);
    };
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);

    std::vector<SearchHit> hits;
    hits.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        hits.push_back(SearchHit{ids_[scored[r].pos], scored[r].score, r, metadata_[scored[r].pos]});
    }
    return hits;
}

bool VectorIndex::operator==(const VectorIndex& other) const {
    return dim_ == other.dim_ && embedder_id_ == other.embedder_id_ && ids_ == other.ids_ &&
           metadata_ == other.metadata_ && vectors_.size() == other.vectors_.size() &&
           std::memcmp(vectors_.data(), other.vectors_.data(), vectors_.size() * sizeof(float)) == 0;
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t pos = 0; pos < index.size(); ++pos) {
        const auto& m = index.metadata_at(pos);
        entries.push_back({{"chunk_id", index.id_at(pos)},
                           {"doc_id", m.doc_id},
                           {"origin", m.origin},
                           {"seq", m.seq},
                           {"span", {m.span.start, m.span.end}},
                           {"text", m.text}});
    }
    const std::string meta = nlohmann::json{{"embedder", index.embedder_id()}, {"entries", std::move(entries)}}.dump();

    std::string payload;
    payload.reserve(index.size() * index.dim() * sizeof(float) + meta.size());
    for (std::size_t pos = 0; pos < index.size(); ++pos) {
        for (float x : index.vector_at(pos)) put_le(payload, std::bit_cast<std::uint32_t>(x));
    }
    payload += meta;

    std::string header;
    header.append(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(header, kIndexFormatVersion);
    put_le<std::uint32_t>(header, static_cast<std::uint32_t>(index.dim()));
    put_le<std::uint64_t>(header, index.size());
    put_le<std::uint64_t>(header, meta.size());
    put_le<std::uint32_t>(header, crc32_of(payload));

    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out.flush()) throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

VectorIndex load_index(const std::filesystem::path& path) {
    using Kind = IntegrityError::Kind;

    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open index file " + path.string());
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

    if (bytes.size() < kIndexHeaderSize) throw IntegrityError(Kind::Truncated, "index file shorter than its header");
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw IntegrityError(Kind::BadMagic, "not an index file (bad magic)");
    }
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kIndexFormatVersion) {
        throw IntegrityError(Kind::VersionMismatch, "index format version " + std::to_string(version) +
                                                        " is not supported (expected " +
                                                        std::to_string(kIndexFormatVersion) + ")");
    }
    const std::size_t dim = get_le<std::uint32_t>(bytes, 8);
    const auto count = get_le<std::uint64_t>(bytes, 12);
    const auto meta_len = get_le<std::uint64_t>(bytes, 20);
    const auto stored_crc = get_le<std::uint32_t>(bytes, 28);
    if (dim == 0) throw IntegrityError(Kind::Malformed, "index header has zero dimension");

    const std::size_t available = bytes.size() - kIndexHeaderSize;
    const std::size_t row_bytes = dim * sizeof(float);
    if (count > available / row_bytes || meta_len > available - count * row_bytes) {
        throw IntegrityError(Kind::Truncated, "index file is truncated");
    }
    const std::size_t vec_bytes = count * row_bytes;
    if (vec_bytes + meta_len != available) throw IntegrityError(Kind::Malformed, "index file has trailing bytes");

    const std::string_view payload = std::string_view(bytes).substr(kIndexHeaderSize);
    if (crc32_of(payload) != stored_crc) throw IntegrityError(Kind::ChecksumMismatch, "index checksum mismatch");

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(payload.substr(vec_bytes));
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(Kind::Malformed, std::string("index metadata is not valid JSON: ") + e.what());
    }

    try {
        const auto& entries = meta.at("entries");
        if (!entries.is_array() || entries.size() != count) {
            throw IntegrityError(Kind::Malformed, "index metadata entry count does not match header");
        }
        VectorIndex index(dim, meta.at("embedder").get<std::string>());
        std::vector<float> row(dim);
        for (std::size_t pos = 0; pos < count; ++pos) {
            const std::size_t base = kIndexHeaderSize + pos * row_bytes;
            for (std::size_t j = 0; j < dim; ++j) {
                row[j] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, base + j * sizeof(float)));
            }
            const auto& e = entries[pos];
            ChunkMetadata m;
            m.doc_id = e.at("doc_id").get<std::string>();
            m.origin = e.at("origin").get<std::string>();
            m.seq = e.at("seq").get<std::size_t>();
            m.span = {e.at("span").at(0).get<std::size_t>(), e.at("span").at(1).get<std::size_t>()};
            m.text = e.at("text").get<std::string>();
            auto id = e.at("chunk_id").get<std::string>();
            if (index.contains(id)) throw IntegrityError(Kind::Malformed, "duplicate chunk id in index file");
            // Validates unit norm and finiteness.
            (void)EmbeddingVector::from_unit(row);
            index.append_unchecked(std::move(id), row, std::move(m));
        }
        return index;
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(Kind::Malformed, std::string("index metadata is malformed: ") + e.what());
    } catch (const ArgumentError& e) {
        throw IntegrityError(Kind::Malformed, std::string("index vector is invalid: ") + e.what());
    }
}

} // namespace ragtutor
