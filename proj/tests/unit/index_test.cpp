#include "ragtutor/error.hpp"
#include "ragtutor/index.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace ragtutor;
using ragtutor::testing::exhaustive_top_k;
using ragtutor::testing::random_unit;

namespace fs = std::filesystem;

namespace {

ChunkMetadata meta(std::size_t i) {
    return ChunkMetadata{"doc" + std::to_string(i % 7), "doc" + std::to_string(i % 7) + ".md", i, {i * 10, i * 10 + 9},
                         "chunk text " + std::to_string(i)};
}

VectorIndex random_index(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                         std::vector<std::vector<float>>* rows = nullptr) {
    VectorIndex index(dim, "test-embedder");
    for (std::size_t i = 0; i < n; ++i) {
        auto v = random_unit(rng, dim);
        index.add("c" + std::to_string(i), EmbeddingVector::from_unit(v), meta(i));
        if (rows) rows->push_back(std::move(v));
    }
    return index;
}

class TempFile {
public:
    TempFile() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("ragtutor_index_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".rtix");
    }
    ~TempFile() { fs::remove(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const fs::path& p, const std::string& bytes) {
    std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes;
}

template <class T> T read_le(const std::string& b, std::size_t off) {
    T v{};
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(b[off + i])) << (8 * i);
    return v;
}

template <class T> void write_le(std::string& b, std::size_t off, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) b[off + i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t crc32_oracle(std::string_view data) {
    std::uint32_t crc = 0xFFFFFFFFu;
    for (unsigned char c : data) {
        crc ^= c;
        for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    return ~crc;
}

IntegrityError::Kind load_failure(const fs::path& p) {
    try {
        load_index(p);
    } catch (const IntegrityError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "load_index accepted a damaged file";
    return IntegrityError::Kind::Malformed;
}

} // namespace

TEST(VectorIndex, AddAndDuplicate) {
    VectorIndex index(2);
    index.add("a:0", normalize(std::vector<float>{1, 0}), {});
    EXPECT_EQ(index.size(), 1u);
    EXPECT_TRUE(index.contains("a:0"));
    EXPECT_THROW(index.add("a:0", normalize(std::vector<float>{0, 1}), {}), ArgumentError);
    EXPECT_EQ(index.size(), 1u);
    EXPECT_THROW(index.add("b:0", normalize(std::vector<float>{1, 0, 0}), {}), ArgumentError);
    EXPECT_THROW(VectorIndex(0), ArgumentError);
}

TEST(VectorIndex, StoresVectorsExactly) {
    std::mt19937_64 rng(10);
    std::vector<std::vector<float>> rows;
    const auto index = random_index(rng, 1000, 384, &rows);
    ASSERT_EQ(index.size(), 1000u);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto stored = index.vector_at(i);
        EXPECT_EQ(std::memcmp(stored.data(), rows[i].data(), rows[i].size() * sizeof(float)), 0) << i;
        EXPECT_EQ(index.position("c" + std::to_string(i)), i);
        EXPECT_EQ(index.metadata_at(i), meta(i));
    }
}

TEST(VectorIndex, SearchEmptyAndArgumentErrors) {
    VectorIndex index(4);
    const auto q = normalize(std::vector<float>{1, 2, 3, 4});
    EXPECT_TRUE(index.search(q, 4).empty());
    EXPECT_THROW(index.search(q, 0), ArgumentError);
    EXPECT_THROW(index.search(normalize(std::vector<float>{1, 2}), 1), ArgumentError);
}

TEST(VectorIndex, SelfRetrievalRanksFirst) {
    std::mt19937_64 rng(11);
    std::vector<std::vector<float>> rows;
    const auto index = random_index(rng, 300, 64, &rows);
    for (std::size_t i = 0; i < rows.size(); i += 7) {
        const auto hits = index.search(EmbeddingVector::from_unit(rows[i]), 1);
        ASSERT_EQ(hits.size(), 1u);
        EXPECT_EQ(hits[0].chunk_id, "c" + std::to_string(i));
        EXPECT_NEAR(hits[0].score, 1.0, 1e-6);
        EXPECT_EQ(hits[0].rank, 0u);
    }
}

TEST(VectorIndex, KLargerThanSizeReturnsAll) {
    std::mt19937_64 rng(12);
    const auto index = random_index(rng, 3, 16);
    const auto hits = index.search(EmbeddingVector::from_unit(random_unit(rng, 16)), 10);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_GE(hits[0].score, hits[1].score);
    EXPECT_GE(hits[1].score, hits[2].score);
}

TEST(VectorIndex, TiesGoToEarlierInsertion) {
    VectorIndex index(2);
    const auto v = normalize(std::vector<float>{1, 1});
    for (int i = 0; i < 5; ++i) index.add("dup" + std::to_string(i), v, {});
    const auto hits = index.search(v, 3);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].chunk_id, "dup0");
    EXPECT_EQ(hits[1].chunk_id, "dup1");
    EXPECT_EQ(hits[2].chunk_id, "dup2");
}

TEST(VectorIndex, AgreesWithExhaustiveOracle) {
    std::mt19937_64 rng(13);
    std::vector<std::vector<float>> rows;
    const auto index = random_index(rng, 500, 384, &rows);
    for (int q = 0; q < 50; ++q) {
        const auto query = random_unit(rng, 384);
        for (std::size_t k : {1u, 4u, 10u}) {
            const auto hits = index.search(EmbeddingVector::from_unit(query), k);
            const auto expected = exhaustive_top_k(rows, query, k);
            ASSERT_EQ(hits.size(), expected.size());
            for (std::size_t r = 0; r < k; ++r) {
                EXPECT_EQ(hits[r].chunk_id, "c" + std::to_string(expected[r].position));
                EXPECT_NEAR(hits[r].score, expected[r].score, 1e-9);
                EXPECT_EQ(hits[r].rank, r);
            }
        }
    }
}

TEST(IndexFile, RoundTripEmpty) {
    TempFile f;
    const VectorIndex index(384, "mock-trigram-v1/384");
    save_index(index, f.path());
    const auto loaded = load_index(f.path());
    EXPECT_EQ(loaded, index);
    EXPECT_EQ(loaded.dim(), 384u);
    EXPECT_EQ(loaded.embedder_id(), "mock-trigram-v1/384");
}

TEST(IndexFile, RoundTripIsBitExactAndSearchIdentical) {
    std::mt19937_64 rng(14);
    const auto index = random_index(rng, 100, 384);
    TempFile f;
    save_index(index, f.path());
    const auto loaded = load_index(f.path());
    EXPECT_EQ(loaded, index);
    for (std::size_t i = 0; i < index.size(); ++i) {
        EXPECT_EQ(loaded.id_at(i), index.id_at(i));
        EXPECT_EQ(loaded.metadata_at(i), index.metadata_at(i));
    }
    for (int q = 0; q < 20; ++q) {
        const auto query = EmbeddingVector::from_unit(random_unit(rng, 384));
        const auto a = index.search(query, 4);
        const auto b = loaded.search(query, 4);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t r = 0; r < a.size(); ++r) {
            EXPECT_EQ(a[r].chunk_id, b[r].chunk_id);
            EXPECT_EQ(a[r].score, b[r].score);
        }
    }
}

TEST(IndexFile, HeaderLayout) {
    std::mt19937_64 rng(15);
    const auto index = random_index(rng, 5, 8);
    TempFile f;
    save_index(index, f.path());
    const auto bytes = read_all(f.path());
    EXPECT_EQ(bytes.substr(0, 4), "RTIX");
    EXPECT_EQ(read_le<std::uint32_t>(bytes, 4), 1u);
    EXPECT_EQ(read_le<std::uint32_t>(bytes, 8), 8u);
    EXPECT_EQ(read_le<std::uint64_t>(bytes, 12), 5u);
    const auto meta_len = read_le<std::uint64_t>(bytes, 20);
    EXPECT_EQ(bytes.size(), 32 + 5 * 8 * 4 + meta_len);
    EXPECT_EQ(read_le<std::uint32_t>(bytes, 28), crc32_oracle(std::string_view(bytes).substr(32)));
    float first;
    std::memcpy(&first, bytes.data() + 32, sizeof first);
    EXPECT_EQ(first, index.vector_at(0)[0]);
}

TEST(IndexFile, EveryTruncationIsRejected) {
    std::mt19937_64 rng(16);
    TempFile f;
    save_index(random_index(rng, 3, 4), f.path());
    const auto bytes = read_all(f.path());
    for (std::size_t len = 0; len < bytes.size(); ++len) {
        write_all(f.path(), bytes.substr(0, len));
        EXPECT_EQ(load_failure(f.path()), IntegrityError::Kind::Truncated) << len;
    }
}

TEST(IndexFile, BadMagicVersionAndChecksum) {
    std::mt19937_64 rng(17);
    TempFile f;
    save_index(random_index(rng, 10, 16), f.path());
    const auto good = read_all(f.path());

    auto bytes = good;
    bytes[0] = 'X';
    write_all(f.path(), bytes);
    EXPECT_EQ(load_failure(f.path()), IntegrityError::Kind::BadMagic);

    bytes = good;
    write_le<std::uint32_t>(bytes, 4, 2);
    write_all(f.path(), bytes);
    EXPECT_EQ(load_failure(f.path()), IntegrityError::Kind::VersionMismatch);

    for (std::size_t off : {std::size_t{32}, std::size_t{32 + 300}, good.size() - 2}) {
        bytes = good;
        bytes[off] = static_cast<char>(bytes[off] ^ 0x40);
        write_all(f.path(), bytes);
        EXPECT_EQ(load_failure(f.path()), IntegrityError::Kind::ChecksumMismatch) << off;
    }

    bytes = good + "junk";
    write_all(f.path(), bytes);
    EXPECT_EQ(load_failure(f.path()), IntegrityError::Kind::Malformed);
}

TEST(IndexFile, ValidChecksumButBrokenMetadataIsMalformed) {
    std::mt19937_64 rng(18);
    TempFile f;
    save_index(random_index(rng, 2, 4), f.path());
    auto bytes = read_all(f.path());
    const std::size_t meta_off = 32 + 2 * 4 * 4;
    bytes[meta_off] = '[';
    write_le<std::uint32_t>(bytes, 28, crc32_oracle(std::string_view(bytes).substr(32)));
    write_all(f.path(), bytes);
    EXPECT_EQ(load_failure(f.path()), IntegrityError::Kind::Malformed);
}

TEST(IndexFile, SaveReplacesAtomically) {
    std::mt19937_64 rng(19);
    TempFile f;
    save_index(random_index(rng, 4, 8), f.path());
    const auto second = random_index(rng, 6, 8);
    save_index(second, f.path());
    EXPECT_EQ(load_index(f.path()), second);
    for (const auto& entry : fs::directory_iterator(f.path().parent_path())) {
        EXPECT_EQ(entry.path().string().find(f.path().filename().string() + ".tmp"), std::string::npos);
    }
}
