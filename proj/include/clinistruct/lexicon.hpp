#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "clinistruct/textnorm.hpp"

namespace clinistruct::lexicon {

using Corpus = std::vector<textnorm::NormalizedDocument>;

struct PairHash {
    std::size_t operator()(const std::pair<std::string, std::string>& p) const noexcept {
        auto h = std::hash<std::string>{}(p.first);
        return h ^ (std::hash<std::string>{}(p.second) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
    }
};

struct CorpusStats {
    std::unordered_map<std::string, std::uint64_t> unigrams;
    std::unordered_map<std::pair<std::string, std::string>, std::uint64_t, PairHash> bigrams;
    std::uint64_t total_tokens = 0;

    std::uint64_t count(const std::string& w) const;
    std::uint64_t count(const std::string& a, const std::string& b) const;
    void merge(const CorpusStats& other);
};

// Bigrams are counted within documents only. With threads > 1 the corpus is
// reduced shard by shard; the result does not depend on the shard count.
CorpusStats compute_stats(std::span<const textnorm::NormalizedDocument> corpus, unsigned threads = 1);

// Levenshtein distance over codepoints.
std::size_t edit_distance(std::string_view a, std::string_view b);

// Tokens that never take part in typo correction or phrase merging.
bool is_excluded_token(std::string_view token);

struct TypoConfig {
    std::uint64_t rare_max = 10;       // rare: count < rare_max
    std::uint64_t frequent_min = 100;  // frequent: count >= frequent_min
    std::size_t min_length = 4;
    double ratio_threshold = 0.25;
    bool iterate_to_fixpoint = false;

    void validate() const;
};

struct Substitution {
    std::string rare_word;
    std::string replacement;
    std::size_t distance = 0;
    double ratio = 0.0;
};

struct TypoResult {
    Corpus corpus;
    std::vector<Substitution> substitutions;  // sorted by rare_word
};

// Analysis phase of correct_typos: one entry per rare corpus word that has a
// qualifying frequent replacement.
std::vector<Substitution> plan_typo_corrections(std::span<const textnorm::NormalizedDocument> corpus,
                                                const CorpusStats& stats, const TypoConfig& cfg, unsigned threads = 1);

TypoResult correct_typos(Corpus corpus, const CorpusStats& stats, const TypoConfig& cfg, unsigned threads = 1);

struct PhraseConfig {
    double delta = 50.0;
    double threshold_pass1 = 100.0;
    double threshold_pass2 = 50.0;
    bool scale_by_total = true;
    int passes = 2;
    std::size_t max_words = 3;

    void validate() const;
};

struct Phrase {
    std::string token;  // "w1_w2" or "w1_w2_w3"
    double score = 0.0;
    int pass = 1;
};

struct PhraseResult {
    Corpus corpus;
    std::vector<Phrase> phrases;  // ordered by pass, then token
};

inline constexpr char kPhraseJoiner = '_';

double phrase_score(std::uint64_t pair_count, std::uint64_t count_a, std::uint64_t count_b, std::uint64_t total,
                    const PhraseConfig& cfg);

std::size_t word_count(std::string_view token);

// Pass 1 scores pairs with `stats`; later passes recompute statistics on the
// merged corpus. Adjacent pairs are merged greedily left to right.
PhraseResult detect_phrases(Corpus corpus, const CorpusStats& stats, const PhraseConfig& cfg, unsigned threads = 1);

}  // namespace clinistruct::lexicon
