#include "ragtutor/ingest.hpp"

#include "ragtutor/config.hpp"
#include "ragtutor/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace ragtutor {
namespace {

bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_utf8_continuation(char c) noexcept {
    return (static_cast<unsigned char>(c) & 0xC0) == 0x80;
}

// A cut at `pos` splits a word when both neighbours are non-whitespace.
bool is_boundary(std::string_view text, std::size_t pos) noexcept {
    if (pos == 0 || pos >= text.size()) return true;
    return is_space(text[pos - 1]) || is_space(text[pos]);
}

// hi moved back off any UTF-8 continuation byte, staying above lo.
std::size_t hard_split(std::string_view text, std::size_t lo, std::size_t hi) {
    std::size_t p = hi;
    while (p > lo + 1 && p < text.size() && is_utf8_continuation(text[p])) --p;
    return p;
}

// Largest boundary in (lo, hi], or a hard split near hi when the range holds no boundary at all.
std::size_t snap_back(std::string_view text, std::size_t lo, std::size_t hi) {
    for (std::size_t p = hi; p > lo; --p) {
        if (is_boundary(text, p)) return p;
    }
    return hard_split(text, lo, hi);
}

} // namespace

int estimate_tokens(std::string_view text) noexcept {
    return static_cast<int>((text.size() + kCharsPerToken - 1) / kCharsPerToken);
}

std::string make_chunk_id(std::string_view doc_id, std::size_t seq) {
    std::string id(doc_id);
    id += ':';
    id += std::to_string(seq);
    return id;
}

std::vector<Chunk> chunk_document(const SourceDocument& doc, int chunk_size_tokens, int overlap_tokens) {
    if (chunk_size_tokens <= 0) throw ArgumentError("chunk size must be positive");
    if (overlap_tokens < 0 || overlap_tokens >= chunk_size_tokens) {
        throw ArgumentError("chunk overlap must lie in [0, chunk size)");
    }
    if (doc.text.empty()) throw ArgumentError("document '" + doc.doc_id + "' has empty text");

    const std::string_view text = doc.text;
    const std::size_t window = static_cast<std::size_t>(chunk_size_tokens) * kCharsPerToken;
    const std::size_t overlap = static_cast<std::size_t>(overlap_tokens) * kCharsPerToken;

    std::vector<Chunk> chunks;
    std::size_t start = 0;
    std::size_t prev_end = 0;
    while (true) {
        const bool last = text.size() - start <= window;
        std::size_t end = last ? text.size() : snap_back(text, std::max(start, prev_end), start + window);
        // A lone whitespace byte before an over-long word leaves nothing to overlap with.
        if (!last && overlap > 0 && end == start + 1) end = hard_split(text, start + 1, start + window);

        Chunk c;
        c.seq = chunks.size();
        c.chunk_id = make_chunk_id(doc.doc_id, c.seq);
        c.doc_id = doc.doc_id;
        c.origin = doc.origin;
        c.span = {start, end};
        c.text = std::string(text.substr(start, end - start));
        c.token_estimate = estimate_tokens(c.text);
        chunks.push_back(std::move(c));
        if (last) break;

        std::size_t next = end;
        if (end > start + overlap) {
            const std::size_t target = end - overlap;
            next = is_boundary(text, target) ? target : snap_back(text, start, target);
            // snap_back falls back to `target` itself when the word reaches back past `start`.
        } else if (overlap > 0) {
            // Snapping left a chunk no longer than the overlap: restart at its last inner boundary.
            for (std::size_t p = end - 1; p > start; --p) {
                if (is_boundary(text, p)) {
                    next = p;
                    break;
                }
            }
        }
        prev_end = end;
        start = next;
    }
    return chunks;
}

std::vector<Chunk> ingest_corpus(std::span<const SourceDocument> docs, const RuntimeConfig& config) {
    std::unordered_set<std::string_view> seen;
    for (const auto& d : docs) {
        if (!seen.insert(d.doc_id).second) throw ArgumentError("duplicate doc_id '" + d.doc_id + "'");
    }

    std::vector<Chunk> out;
    for (const auto& d : docs) {
        auto chunks = chunk_document(d, config.chunk_size_tokens, config.chunk_overlap_tokens);
        spdlog::debug("chunked {} into {} chunk(s)", d.doc_id, chunks.size());
        std::move(chunks.begin(), chunks.end(), std::back_inserter(out));
    }
    return out;
}

std::vector<SourceDocument> load_corpus_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ArgumentError("corpus directory not found: " + dir.string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".txt" || ext == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<SourceDocument> docs;
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot read " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();

        SourceDocument d;
        d.doc_id = fs::relative(path, dir).generic_string();
        d.origin = d.doc_id;
        d.title = path.stem().string();
        d.text = std::move(buf).str();
        if (d.text.empty()) {
            spdlog::warn("skipping empty file {}", d.origin);
            continue;
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

} // namespace ragtutor
