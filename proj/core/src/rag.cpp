#include "ragtutor/rag.hpp"

#include "ragtutor/config.hpp"
#include "ragtutor/error.hpp"
#include "ragtutor/ingest.hpp"

#include <spdlog/spdlog.h>

namespace ragtutor {
namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

// Single pass over `format`; substituted values are never rescanned.
std::string fill(std::string_view format, std::initializer_list<std::pair<std::string_view, std::string_view>> slots) {
    std::string out;
    std::size_t i = 0;
    while (i < format.size()) {
        bool matched = false;
        for (const auto& [name, value] : slots) {
            if (format.compare(i, name.size(), name) == 0) {
                out.append(value);
                i += name.size();
                matched = true;
                break;
            }
        }
        if (!matched) out.push_back(format[i++]);
    }
    return out;
}

int tokens_for_bytes(std::size_t bytes) {
    return static_cast<int>((bytes + kCharsPerToken - 1) / kCharsPerToken);
}

} // namespace

void PromptTemplate::validate() const {
    const auto require_once = [](std::string_view format, std::string_view slot, const char* field) {
        if (count_occurrences(format, slot) != 1) {
            throw ArgumentError(std::string(field) + " must contain " + std::string(slot) + " exactly once");
        }
    };
    require_once(context_block_format, "{origin}", "context_block_format");
    require_once(context_block_format, "{text}", "context_block_format");
    require_once(question_format, "{query}", "question_format");
}

std::string PromptTemplate::render_block(std::string_view origin, std::string_view text) const {
    return fill(context_block_format, {{"{origin}", origin}, {"{text}", text}});
}

std::string PromptTemplate::render_question(std::string_view query) const {
    return fill(question_format, {{"{query}", query}});
}

const PromptTemplate& PromptTemplate::standard() {
    static const PromptTemplate tmpl{
        "You are a teaching assistant for a university course. Answer the question using only the "
        "course material below. Cite the source in square brackets after each fact. If the material "
        "does not contain the answer, say that you do not know.\n\n",
        "[{origin}]\n{text}\n\n",
        "Question: {query}\nAnswer:",
    };
    return tmpl;
}

std::vector<SearchHit> retrieve(const VectorIndex& index, const EmbeddingProvider& provider, const std::string& query,
                                std::size_t k) {
    if (query.empty()) throw ArgumentError("query must not be empty");
    if (provider.dim() != index.dim()) {
        throw ArgumentError("provider dimension " + std::to_string(provider.dim()) +
                            " does not match index dimension " + std::to_string(index.dim()));
    }
    if (index.empty()) return {};
    return index.search(embed_one(provider, query), k);
}

BuiltPrompt build_context(std::vector<SearchHit> hits, std::string_view query, const PromptTemplate& tmpl, int n_ctx,
                          int max_output_tokens) {
    tmpl.validate();
    if (max_output_tokens >= n_ctx) throw ArgumentError("max_output_tokens must be smaller than n_ctx");

    const std::string question = tmpl.render_question(query);
    std::size_t bytes = tmpl.system_preamble.size() + question.size();
    if (tokens_for_bytes(bytes) + max_output_tokens > n_ctx) {
        throw BudgetExceededError("prompt template and question need " + std::to_string(tokens_for_bytes(bytes)) +
                                  " tokens, leaving no room for " + std::to_string(max_output_tokens) +
                                  " output tokens within n_ctx=" + std::to_string(n_ctx) +
                                  "; raise N_CTX or shorten the question");
    }

    BuiltPrompt out;
    std::string blocks;
    for (const auto& hit : hits) {
        std::string block = tmpl.render_block(hit.metadata.origin, hit.metadata.text);
        if (tokens_for_bytes(bytes + block.size()) + max_output_tokens > n_ctx) {
            spdlog::debug("skipping {} ({} bytes): over budget", hit.chunk_id, block.size());
            continue;
        }
        bytes += block.size();
        blocks += block;
        out.context.included.push_back(hit.chunk_id);
        out.context.citations.push_back({hit.metadata.origin, hit.metadata.seq});
    }

    out.prompt.reserve(bytes);
    out.prompt += tmpl.system_preamble;
    out.prompt += blocks;
    out.prompt += question;
    out.context.prompt_token_estimate = estimate_tokens(out.prompt);
    out.context.hits = std::move(hits);
    return out;
}

Answer answer_query(const std::string& query, const Pipeline& pipeline, const RuntimeConfig& config,
                    const EventSink& sink) {
    auto hits = retrieve(pipeline.index, pipeline.provider, query, static_cast<std::size_t>(config.top_k));
    auto built = build_context(std::move(hits), query, pipeline.prompt_template, config.n_ctx,
                               config.max_output_tokens);
    spdlog::info("packed {} of {} retrieved chunk(s), prompt ~{} tokens", built.context.included.size(),
                 built.context.hits.size(), built.context.prompt_token_estimate);

    auto generation = generate(pipeline.backend, built.prompt, GenerationParams::from_config(config), sink);

    Answer answer;
    answer.text = generation.text;
    answer.citations = built.context.citations;
    answer.context = std::move(built.context);
    answer.generation = std::move(generation);
    return answer;
}

std::string format_citations(const std::vector<Citation>& citations) {
    std::string out;
    for (std::size_t i = 0; i < citations.size(); ++i) {
        out += "[" + std::to_string(i + 1) + "] " + citations[i].origin + " (part " +
               std::to_string(citations[i].seq + 1) + ")\n";
    }
    return out;
}

} // namespace ragtutor
