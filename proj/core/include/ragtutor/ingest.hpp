#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ragtutor {

struct RuntimeConfig;

struct SourceDocument {
    std::string doc_id;
    std::string title;
    std::string text;
    std::string origin; // cited back to the user
};

/// Half-open byte range [start, end) into the source text.
struct CharSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - start; }
    bool operator==(const CharSpan&) const = default;
};

struct Chunk {
    std::string chunk_id; // "<doc_id>:<seq>"
    std::string doc_id;
    std::string origin;
    std::size_t seq = 0;
    std::string text;
    int token_estimate = 0;
    CharSpan span;

    bool operator==(const Chunk&) const = default;
};

/// Characters per token assumed by estimate_tokens.
inline constexpr std::size_t kCharsPerToken = 4;

/// ceil(bytes / 4). Bytes stand in for characters, which overestimates
/// non-ASCII text and so keeps every budget conservative.
int estimate_tokens(std::string_view text) noexcept;

std::string make_chunk_id(std::string_view doc_id, std::size_t seq);

/// Split a document into overlapping windows of at most `chunk_size_tokens`
/// estimated tokens. Window edges move back to the nearest whitespace
/// boundary so words stay intact; a single word longer than the window is
/// split hard. Throws ArgumentError on empty text or overlap >= size.
std::vector<Chunk> chunk_document(const SourceDocument& doc, int chunk_size_tokens, int overlap_tokens);

/// Chunk every document in order. Throws ArgumentError on duplicate doc_id.
std::vector<Chunk> ingest_corpus(std::span<const SourceDocument> docs, const RuntimeConfig& config);

/// Read every .txt/.md file under `dir` (recursively, sorted by path).
/// doc_id and origin are the path relative to `dir`; empty files are skipped.
std::vector<SourceDocument> load_corpus_dir(const std::filesystem::path& dir);

} // namespace ragtutor
