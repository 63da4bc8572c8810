#include "clinistruct/lexicon.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <set>

#include <fmt/format.h>

#include "parallel.hpp"

namespace clinistruct::lexicon {

std::uint64_t CorpusStats::count(const std::string& w) const {
    auto it = unigrams.find(w);
    return it == unigrams.end() ? 0 : it->second;
}

std::uint64_t CorpusStats::count(const std::string& a, const std::string& b) const {
    auto it = bigrams.find({a, b});
    return it == bigrams.end() ? 0 : it->second;
}

void CorpusStats::merge(const CorpusStats& other) {
    for (const auto& [w, c] : other.unigrams) unigrams[w] += c;
    for (const auto& [p, c] : other.bigrams) bigrams[p] += c;
    total_tokens += other.total_tokens;
}

CorpusStats compute_stats(std::span<const textnorm::NormalizedDocument> corpus, unsigned threads) {
    threads = std::max(1u, threads);
    std::vector<CorpusStats> shards(threads);
    detail::parallel_chunks(corpus.size(), threads, [&](std::size_t b, std::size_t e, unsigned t) {
        auto& s = shards[t];
        for (std::size_t i = b; i < e; ++i) {
            const auto& toks = corpus[i].tokens;
            for (std::size_t k = 0; k < toks.size(); ++k) {
                ++s.unigrams[toks[k]];
                if (k + 1 < toks.size()) ++s.bigrams[{toks[k], toks[k + 1]}];
            }
            s.total_tokens += toks.size();
        }
    });
    CorpusStats out = std::move(shards[0]);
    for (std::size_t t = 1; t < shards.size(); ++t) out.merge(shards[t]);
    return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    auto x = textnorm::to_codepoints(a);
    auto y = textnorm::to_codepoints(b);
    if (x.size() < y.size()) std::swap(x, y);
    std::vector<std::size_t> row(y.size() + 1);
    std::iota(row.begin(), row.end(), std::size_t{0});
    for (std::size_t i = 1; i <= x.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= y.size(); ++j) {
            std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (x[i - 1] == y[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[y.size()];
}

bool is_excluded_token(std::string_view token) {
    return token == textnorm::kDateToken || textnorm::is_number_token(token);
}

void TypoConfig::validate() const {
    if (rare_max >= frequent_min) throw Error(ErrorCode::InvalidArgument, "typo config: rare_max must be < frequent_min");
    if (min_length < 1) throw Error(ErrorCode::InvalidArgument, "typo config: min_length must be >= 1");
    if (!(ratio_threshold > 0.0 && ratio_threshold < 1.0))
        throw Error(ErrorCode::InvalidArgument, "typo config: ratio_threshold must be in (0, 1)");
}

namespace {

struct FrequentWord {
    std::string word;
    std::size_t length;
    std::uint64_t count;
};

}  // namespace

std::vector<Substitution> plan_typo_corrections(std::span<const textnorm::NormalizedDocument> corpus,
                                                const CorpusStats& stats, const TypoConfig& cfg, unsigned threads) {
    cfg.validate();

    std::set<std::string> present;
    for (const auto& d : corpus) present.insert(d.tokens.begin(), d.tokens.end());

    std::vector<std::pair<std::string, std::size_t>> rare;
    for (const auto& w : present) {
        if (is_excluded_token(w)) continue;
        auto c = stats.count(w);
        auto len = textnorm::to_codepoints(w).size();
        if (c < cfg.rare_max && len >= cfg.min_length) rare.emplace_back(w, len);
    }

    std::vector<FrequentWord> frequent;
    for (const auto& [w, c] : stats.unigrams)
        if (c >= cfg.frequent_min && !is_excluded_token(w))
            frequent.push_back({w, textnorm::to_codepoints(w).size(), c});
    std::sort(frequent.begin(), frequent.end(), [](const auto& a, const auto& b) { return a.word < b.word; });

    std::vector<std::optional<Substitution>> plan(rare.size());
    detail::parallel_chunks(rare.size(), threads, [&](std::size_t b, std::size_t e, unsigned) {
        for (std::size_t i = b; i < e; ++i) {
            const auto& [word, len] = rare[i];
            auto max_dist = static_cast<std::size_t>(cfg.ratio_threshold * static_cast<double>(len) + 1e-9);
            const FrequentWord* best = nullptr;
            std::size_t best_dist = 0;
            for (const auto& f : frequent) {
                auto diff = f.length > len ? f.length - len : len - f.length;
                if (diff > max_dist || f.word == word) continue;
                auto dist = edit_distance(word, f.word);
                if (static_cast<double>(dist) / static_cast<double>(len) > cfg.ratio_threshold) continue;
                // (smaller distance, higher frequency, lexicographic)
                // frequent is sorted by word, so the first of equal (distance, count) wins
                if (!best || dist < best_dist || (dist == best_dist && f.count > best->count)) {
                    best = &f;
                    best_dist = dist;
                }
            }
            if (best)
                plan[i] = Substitution{word, best->word, best_dist,
                                       static_cast<double>(best_dist) / static_cast<double>(len)};
        }
    });

    std::vector<Substitution> out;
    for (auto& s : plan)
        if (s) out.push_back(std::move(*s));
    return out;
}

TypoResult correct_typos(Corpus corpus, const CorpusStats& stats, const TypoConfig& cfg, unsigned threads) {
    TypoResult result;
    CorpusStats current = stats;
    for (int round = 0;; ++round) {
        auto plan = plan_typo_corrections(corpus, current, cfg, threads);
        if (plan.empty()) break;
        std::unordered_map<std::string, std::string> map;
        for (const auto& s : plan) map.emplace(s.rare_word, s.replacement);
        for (auto& d : corpus)
            for (auto& t : d.tokens)
                if (auto it = map.find(t); it != map.end()) t = it->second;
        result.substitutions.insert(result.substitutions.end(), plan.begin(), plan.end());
        if (!cfg.iterate_to_fixpoint || round >= 32) break;
        current = compute_stats(corpus, threads);
    }
    std::stable_sort(result.substitutions.begin(), result.substitutions.end(),
                     [](const auto& a, const auto& b) { return a.rare_word < b.rare_word; });
    result.corpus = std::move(corpus);
    return result;
}

void PhraseConfig::validate() const {
    if (delta < 0) throw Error(ErrorCode::InvalidArgument, "phrase config: delta must be >= 0");
    if (threshold_pass1 <= 0 || threshold_pass2 <= 0)
        throw Error(ErrorCode::InvalidArgument, "phrase config: thresholds must be > 0");
    if (passes < 1) throw Error(ErrorCode::InvalidArgument, "phrase config: passes must be >= 1");
}

double phrase_score(std::uint64_t pair_count, std::uint64_t count_a, std::uint64_t count_b, std::uint64_t total,
                    const PhraseConfig& cfg) {
    if (count_a == 0 || count_b == 0) return 0.0;
    double score = (static_cast<double>(pair_count) - cfg.delta) /
                   (static_cast<double>(count_a) * static_cast<double>(count_b));
    if (cfg.scale_by_total) score *= static_cast<double>(total);
    return score;
}

std::size_t word_count(std::string_view token) {
    return static_cast<std::size_t>(std::count(token.begin(), token.end(), kPhraseJoiner)) + 1;
}

namespace {

using PhraseTable = std::unordered_map<std::pair<std::string, std::string>, double, PairHash>;

void merge_document(textnorm::NormalizedDocument& doc, const PhraseTable& table) {
    if (doc.tokens.size() < 2) return;
    std::vector<std::string> out;
    std::vector<std::size_t> new_index(doc.tokens.size());
    out.reserve(doc.tokens.size());
    for (std::size_t i = 0; i < doc.tokens.size();) {
        new_index[i] = out.size();
        if (i + 1 < doc.tokens.size() && table.contains({doc.tokens[i], doc.tokens[i + 1]})) {
            new_index[i + 1] = out.size();
            out.push_back(doc.tokens[i] + kPhraseJoiner + doc.tokens[i + 1]);
            i += 2;
        } else {
            out.push_back(std::move(doc.tokens[i]));
            ++i;
        }
    }
    for (auto& m : doc.date_mentions) m.token_index = new_index[m.token_index];
    doc.tokens = std::move(out);
}

}  // namespace

PhraseResult detect_phrases(Corpus corpus, const CorpusStats& stats, const PhraseConfig& cfg, unsigned threads) {
    cfg.validate();
    PhraseResult result;
    for (int pass = 1; pass <= cfg.passes; ++pass) {
        CorpusStats recomputed;
        const CorpusStats* st = &stats;
        if (pass > 1) {
            recomputed = compute_stats(corpus, threads);
            st = &recomputed;
        }
        double threshold = pass == 1 ? cfg.threshold_pass1 : cfg.threshold_pass2;
        PhraseTable table;
        for (const auto& [pair, c] : st->bigrams) {
            const auto& [a, b] = pair;
            if (is_excluded_token(a) || is_excluded_token(b)) continue;
            if (word_count(a) + word_count(b) > cfg.max_words) continue;
            double score = phrase_score(c, st->count(a), st->count(b), st->total_tokens, cfg);
            if (score > threshold) table.emplace(pair, score);
        }
        if (table.empty()) break;

        std::vector<Phrase> found;
        for (const auto& [pair, score] : table) found.push_back({pair.first + kPhraseJoiner + pair.second, score, pass});
        std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) { return x.token < y.token; });
        result.phrases.insert(result.phrases.end(), found.begin(), found.end());

        detail::parallel_chunks(corpus.size(), threads, [&](std::size_t b, std::size_t e, unsigned) {
            for (std::size_t i = b; i < e; ++i) merge_document(corpus[i], table);
        });
    }
    result.corpus = std::move(corpus);
    return result;
}

}  // namespace clinistruct::lexicon
