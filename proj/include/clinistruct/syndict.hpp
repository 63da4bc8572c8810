#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinistruct/embedding.hpp"
#include "clinistruct/textnorm.hpp"

namespace clinistruct::syndict {

using TokenSet = std::set<std::string, std::less<>>;

struct Snippet {
    std::string doc_id;
    std::size_t token_index = 0;
    std::string left;
    std::string term;
    std::string right;

    bool operator==(const Snippet&) const = default;
};

// Keyword-in-context index over a tokenized corpus. Occurrences are kept in
// (doc_id, token_index) order.
class ContextIndex {
public:
    static constexpr std::size_t kRadius = 8;

    ContextIndex() = default;
    explicit ContextIndex(std::span<const textnorm::NormalizedDocument> corpus);

    std::vector<Snippet> snippets(std::string_view term, std::size_t limit) const;
    std::size_t occurrences(std::string_view term) const;

private:
    struct Doc {
        std::string doc_id;
        std::vector<std::string> tokens;
    };
    std::vector<Doc> docs_;
    std::unordered_map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> postings_;
};

struct Candidate {
    std::string token;
    double similarity = 0.0;
    std::string query;  // accepted term whose neighborhood scored highest
    std::vector<Snippet> snippets;
};

struct Round {
    int iteration = 0;
    std::vector<std::string> proposed;
    std::vector<std::string> accepted;
    std::vector<std::string> rejected;
};

struct SuggestionSession {
    std::string concept_id;
    int iteration = 0;
    std::vector<std::string> frontier;  // accepted terms not yet used as queries
    std::vector<Round> history;
    bool fixpoint = false;  // last suggest round proposed nothing new
    bool active = false;
};

struct ConceptEntry {
    std::string concept_id;
    std::string canonical;
    TokenSet accepted;
    TokenSet rejected;
    std::vector<Candidate> pending;
    std::vector<std::string> seeds;
    std::vector<nlohmann::json> history;  // append-only event log
    SuggestionSession session;
};

// Per-concept accepted/rejected/pending surface forms. Persisted as one
// pretty-printed JSON document holding a list of concept documents.
class SynonymDictionary {
public:
    bool contains(std::string_view concept_id) const;
    ConceptEntry& at(std::string_view concept_id);
    const ConceptEntry& at(std::string_view concept_id) const;
    ConceptEntry& add_concept(const std::string& concept_id, const std::string& canonical);
    const std::map<std::string, ConceptEntry, std::less<>>& concepts() const { return concepts_; }

    // Checks set invariants and that no surface form is accepted by two concepts.
    void validate() const;

    // Dictionary restricted to canonical + seeds, without any review history.
    SynonymDictionary seed_only() const;

    nlohmann::json to_json() const;
    static SynonymDictionary from_json(const nlohmann::json& j);
    static SynonymDictionary load(const std::filesystem::path& p);
    void save(const std::filesystem::path& p, const nlohmann::json& header = nullptr) const;

private:
    std::map<std::string, ConceptEntry, std::less<>> concepts_;
};

// accepted := {canonical} u seeds, frontier := accepted. A seed that the
// concept already rejected is an error.
SuggestionSession& seed_concept(SynonymDictionary& dict, const std::string& concept_id, const std::string& canonical,
                                std::span<const std::string> seeds);

struct SuggestOptions {
    std::size_t k = 20;
    std::size_t snippets = 3;
};

// Union of the top-k neighbors of every frontier term, minus accepted and
// rejected tokens, ranked by best similarity. Becomes the concept's pending list.
std::vector<Candidate> suggest(SuggestionSession& session, const embedding::EmbeddingModel& model,
                               SynonymDictionary& dict, const SuggestOptions& opts, const ContextIndex* contexts = nullptr,
                               std::vector<std::string>* warnings = nullptr);

void apply_decisions(SuggestionSession& session, SynonymDictionary& dict, const TokenSet& accepts,
                     const TokenSet& rejects);

// Ends an active session: pending is dropped and the concept accepts a new one.
void close_session(SuggestionSession& session, SynonymDictionary& dict);

// Rebuilds a concept purely from its event log.
ConceptEntry replay(const ConceptEntry& entry);

// Surface-form rewriter. Surface forms containing spaces match token
// sequences; the longest match wins.
class Canonicalizer {
public:
    explicit Canonicalizer(const SynonymDictionary& dict);

    std::vector<std::string> rewrite(std::span<const std::string> tokens) const;
    void rewrite(textnorm::NormalizedDocument& doc) const;

private:
    struct Form {
        std::vector<std::string> tokens;
        std::string canonical;
    };
    std::unordered_map<std::string, std::vector<Form>> by_first_;
};

std::vector<std::string> canonicalize(std::span<const std::string> tokens, const SynonymDictionary& dict);

}  // namespace clinistruct::syndict
