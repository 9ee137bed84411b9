#pragma once

#include "ragtutor/embed.hpp"
#include "ragtutor/index.hpp"
#include "ragtutor/llm.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ragtutor {

struct RuntimeConfig;

struct Citation {
    std::string origin;
    std::size_t seq = 0;

    bool operator==(const Citation&) const = default;
};

/// Prompt layout: preamble, one block per packed chunk, then the question.
/// `context_block_format` holds `{origin}` and `{text}` exactly once each;
/// `question_format` holds `{query}` exactly once.
struct PromptTemplate {
    std::string system_preamble;
    std::string context_block_format;
    std::string question_format;

    /// Throws ArgumentError when a slot is missing or repeated.
    void validate() const;

    std::string render_block(std::string_view origin, std::string_view text) const;
    std::string render_question(std::string_view query) const;

    static const PromptTemplate& standard();
};

struct RetrievedContext {
    std::vector<SearchHit> hits;
    std::vector<std::string> included; // chunk ids in rank order
    int prompt_token_estimate = 0;
    std::vector<Citation> citations;
};

struct BuiltPrompt {
    RetrievedContext context;
    std::string prompt;
};

/// Embed the query and return the top-k hits with chunk text and metadata.
std::vector<SearchHit> retrieve(const VectorIndex& index, const EmbeddingProvider& provider, const std::string& query,
                                std::size_t k);

/// Pack hits in rank order while estimate_tokens(prompt) + max_output_tokens
/// stays within n_ctx; a hit that does not fit is skipped and packing goes
/// on with the next one. Throws BudgetExceededError when the preamble and
/// question alone do not fit.
BuiltPrompt build_context(std::vector<SearchHit> hits, std::string_view query, const PromptTemplate& tmpl,
                          int n_ctx, int max_output_tokens);

struct Answer {
    std::string text;
    std::vector<Citation> citations;
    RetrievedContext context;
    GenerationResult generation;
};

/// The pieces answer_query wires together. Not owning.
struct Pipeline {
    const VectorIndex& index;
    const EmbeddingProvider& provider;
    GenerationBackend& backend;
    const PromptTemplate& prompt_template = PromptTemplate::standard();
};

/// retrieve -> build_context -> generate.
Answer answer_query(const std::string& query, const Pipeline& pipeline, const RuntimeConfig& config,
                    const EventSink& sink = {});

/// "[1] origin (part N)" lines, one per citation.
std::string format_citations(const std::vector<Citation>& citations);

} // namespace ragtutor
