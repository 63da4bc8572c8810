#include "clinistruct/syndict.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "clinistruct/common.hpp"
#include "clinistruct/io.hpp"

namespace clinistruct::syndict {

using nlohmann::json;

ContextIndex::ContextIndex(std::span<const textnorm::NormalizedDocument> corpus) {
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return corpus[a].doc_id < corpus[b].doc_id; });
    for (auto i : order) docs_.push_back({corpus[i].doc_id, corpus[i].tokens});
    for (std::size_t d = 0; d < docs_.size(); ++d)
        for (std::size_t t = 0; t < docs_[d].tokens.size(); ++t) postings_[docs_[d].tokens[t]].emplace_back(d, t);
}

std::size_t ContextIndex::occurrences(std::string_view term) const {
    auto it = postings_.find(std::string(term));
    return it == postings_.end() ? 0 : it->second.size();
}

std::vector<Snippet> ContextIndex::snippets(std::string_view term, std::size_t limit) const {
    std::vector<Snippet> out;
    auto it = postings_.find(std::string(term));
    if (it == postings_.end()) return out;
    for (const auto& [d, t] : it->second) {
        if (out.size() >= limit) break;
        const auto& toks = docs_[d].tokens;
        auto join = [&](std::size_t b, std::size_t e) {
            std::string s;
            for (std::size_t i = b; i < e; ++i) {
                if (i > b) s += ' ';
                s += toks[i];
            }
            return s;
        };
        std::size_t lo = t >= kRadius ? t - kRadius : 0;
        std::size_t hi = std::min(toks.size(), t + kRadius + 1);
        out.push_back({docs_[d].doc_id, t, join(lo, t), toks[t], join(t + 1, hi)});
    }
    return out;
}

bool SynonymDictionary::contains(std::string_view concept_id) const { return concepts_.contains(concept_id); }

ConceptEntry& SynonymDictionary::at(std::string_view concept_id) {
    auto it = concepts_.find(concept_id);
    if (it == concepts_.end()) throw Error(ErrorCode::NotFound, fmt::format("unknown concept '{}'", concept_id));
    return it->second;
}

const ConceptEntry& SynonymDictionary::at(std::string_view concept_id) const {
    auto it = concepts_.find(concept_id);
    if (it == concepts_.end()) throw Error(ErrorCode::NotFound, fmt::format("unknown concept '{}'", concept_id));
    return it->second;
}

ConceptEntry& SynonymDictionary::add_concept(const std::string& concept_id, const std::string& canonical) {
    if (concept_id.empty() || canonical.empty())
        throw Error(ErrorCode::InvalidArgument, "concept id and canonical token must be non-empty");
    auto [it, inserted] = concepts_.try_emplace(concept_id);
    if (!inserted) throw Error(ErrorCode::Conflict, fmt::format("concept '{}' already exists", concept_id));
    it->second.concept_id = concept_id;
    it->second.canonical = canonical;
    it->second.accepted.insert(canonical);
    it->second.session.concept_id = concept_id;
    return it->second;
}

void SynonymDictionary::validate() const {
    std::map<std::string, std::string, std::less<>> owner;
    for (const auto& [id, c] : concepts_) {
        if (!c.accepted.contains(c.canonical))
            throw Error(ErrorCode::State, fmt::format("concept '{}': canonical '{}' not accepted", id, c.canonical));
        for (const auto& t : c.accepted) {
            if (c.rejected.contains(t))
                throw Error(ErrorCode::State, fmt::format("concept '{}': '{}' both accepted and rejected", id, t));
            auto [it, inserted] = owner.emplace(t, id);
            if (!inserted)
                throw Error(ErrorCode::Conflict,
                            fmt::format("surface form '{}' accepted by both '{}' and '{}'", t, it->second, id));
        }
        for (const auto& p : c.pending)
            if (c.accepted.contains(p.token) || c.rejected.contains(p.token))
                throw Error(ErrorCode::State, fmt::format("concept '{}': pending '{}' already decided", id, p.token));
    }
}

SynonymDictionary SynonymDictionary::seed_only() const {
    SynonymDictionary out;
    for (const auto& [id, c] : concepts_) {
        auto& e = out.add_concept(id, c.canonical);
        e.seeds = c.seeds;
        e.accepted.insert(c.seeds.begin(), c.seeds.end());
    }
    return out;
}

namespace {

json snippet_json(const Snippet& s) {
    return {{"doc_id", s.doc_id}, {"token_index", s.token_index}, {"left", s.left}, {"term", s.term}, {"right", s.right}};
}

Snippet snippet_from(const json& j) {
    return {j.at("doc_id").get<std::string>(), j.at("token_index").get<std::size_t>(), j.at("left").get<std::string>(),
            j.at("term").get<std::string>(), j.at("right").get<std::string>()};
}

json candidate_json(const Candidate& c, bool with_snippets) {
    json j = {{"token", c.token}, {"similarity", c.similarity}, {"query", c.query}};
    if (with_snippets) {
        j["snippets"] = json::array();
        for (const auto& s : c.snippets) j["snippets"].push_back(snippet_json(s));
    }
    return j;
}

Candidate candidate_from(const json& j) {
    Candidate c{j.at("token").get<std::string>(), j.at("similarity").get<double>(), j.at("query").get<std::string>(), {}};
    for (const auto& s : j.value("snippets", json::array())) c.snippets.push_back(snippet_from(s));
    return c;
}

}  // namespace

json SynonymDictionary::to_json() const {
    json concepts = json::array();
    for (const auto& [id, c] : concepts_) {
        json pending = json::array();
        for (const auto& p : c.pending) pending.push_back(candidate_json(p, true));
        json rounds = json::array();
        for (const auto& r : c.session.history)
            rounds.push_back(
                {{"iteration", r.iteration}, {"proposed", r.proposed}, {"accepted", r.accepted}, {"rejected", r.rejected}});
        concepts.push_back({{"concept_id", id},
                            {"canonical", c.canonical},
                            {"seeds", c.seeds},
                            {"accepted", c.accepted},
                            {"rejected", c.rejected},
                            {"pending", pending},
                            {"session",
                             {{"iteration", c.session.iteration},
                              {"frontier", c.session.frontier},
                              {"fixpoint", c.session.fixpoint},
                              {"active", c.session.active},
                              {"rounds", rounds}}},
                            {"history", c.history}});
    }
    return {{"version", 1}, {"concepts", concepts}};
}

SynonymDictionary SynonymDictionary::from_json(const json& j) {
    SynonymDictionary d;
    try {
        for (const auto& cj : j.at("concepts")) {
            auto& c = d.add_concept(cj.at("concept_id").get<std::string>(), cj.at("canonical").get<std::string>());
            c.seeds = cj.value("seeds", std::vector<std::string>{});
            c.accepted.insert(c.seeds.begin(), c.seeds.end());
            for (const auto& t : cj.value("accepted", std::vector<std::string>{})) c.accepted.insert(t);
            for (const auto& t : cj.value("rejected", std::vector<std::string>{})) c.rejected.insert(t);
            for (const auto& p : cj.value("pending", json::array())) c.pending.push_back(candidate_from(p));
            if (cj.contains("session")) {
                const auto& s = cj["session"];
                c.session.iteration = s.value("iteration", 0);
                c.session.frontier = s.value("frontier", std::vector<std::string>{});
                c.session.fixpoint = s.value("fixpoint", false);
                c.session.active = s.value("active", false);
                for (const auto& r : s.value("rounds", json::array()))
                    c.session.history.push_back({r.at("iteration").get<int>(),
                                                 r.at("proposed").get<std::vector<std::string>>(),
                                                 r.at("accepted").get<std::vector<std::string>>(),
                                                 r.at("rejected").get<std::vector<std::string>>()});
            }
            for (const auto& e : cj.value("history", json::array())) c.history.push_back(e);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, fmt::format("malformed dictionary: {}", e.what()));
    }
    d.validate();
    return d;
}

SynonymDictionary SynonymDictionary::load(const std::filesystem::path& p) {
    json j;
    try {
        j = json::parse(io::read_file(p));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, fmt::format("{}: {}", p.string(), e.what()));
    }
    return from_json(j);
}

void SynonymDictionary::save(const std::filesystem::path& p, const json& header) const {
    auto j = to_json();
    if (!header.is_null()) j["_header"] = header;
    io::AtomicFile f(p);
    f.stream() << j.dump(2) << '\n';
    f.commit();
}

SuggestionSession& seed_concept(SynonymDictionary& dict, const std::string& concept_id, const std::string& canonical,
                                std::span<const std::string> seeds) {
    if (!dict.contains(concept_id)) dict.add_concept(concept_id, canonical.empty() ? concept_id : canonical);
    auto& c = dict.at(concept_id);
    TokenSet unique(seeds.begin(), seeds.end());
    for (const auto& s : unique) {
        if (s.empty()) throw Error(ErrorCode::InvalidArgument, "empty seed token");
        if (c.rejected.contains(s))
            throw Error(ErrorCode::Conflict,
                        fmt::format("seed '{}' was already rejected for concept '{}'", s, concept_id));
    }
    for (const auto& s : unique) {
        c.accepted.insert(s);
        if (std::find(c.seeds.begin(), c.seeds.end(), s) == c.seeds.end() && s != c.canonical) c.seeds.push_back(s);
    }
    c.pending.clear();
    c.session.concept_id = concept_id;
    c.session.frontier.assign(c.accepted.begin(), c.accepted.end());
    c.session.fixpoint = false;
    c.session.active = true;
    c.history.push_back({{"event", "seed"}, {"iteration", c.session.iteration}, {"tokens", unique}});
    return c.session;
}

namespace {

void record_proposal(SuggestionSession& session, ConceptEntry& c, std::vector<Candidate> candidates) {
    c.pending = std::move(candidates);
    session.fixpoint = c.pending.empty();
    json list = json::array();
    for (const auto& p : c.pending) list.push_back(candidate_json(p, false));
    c.history.push_back({{"event", "propose"}, {"iteration", session.iteration}, {"candidates", list}});
}

}  // namespace

std::vector<Candidate> suggest(SuggestionSession& session, const embedding::EmbeddingModel& model,
                               SynonymDictionary& dict, const SuggestOptions& opts, const ContextIndex* contexts,
                               std::vector<std::string>* warnings) {
    auto& c = dict.at(session.concept_id);
    std::map<std::string, Candidate> best;
    bool any_in_vocab = false;
    for (const auto& q : session.frontier) {
        auto nn = embedding::nearest_neighbors(model, q, opts.k);
        if (nn.warning) {
            if (warnings) warnings->push_back(*nn.warning);
            continue;
        }
        any_in_vocab = true;
        for (const auto& n : nn.neighbors) {
            if (c.accepted.contains(n.token) || c.rejected.contains(n.token)) continue;
            auto it = best.find(n.token);
            if (it == best.end()) {
                best.emplace(n.token, Candidate{n.token, n.similarity, q, {}});
            } else if (n.similarity > it->second.similarity ||
                       (n.similarity == it->second.similarity && q < it->second.query)) {
                it->second.similarity = n.similarity;
                it->second.query = q;
            }
        }
    }
    if (!session.frontier.empty() && !any_in_vocab && warnings)
        warnings->push_back(fmt::format("concept '{}': every frontier term is out of vocabulary", session.concept_id));

    std::vector<Candidate> out;
    for (auto& [t, cand] : best) out.push_back(std::move(cand));
    std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        return a.similarity != b.similarity ? a.similarity > b.similarity : a.token < b.token;
    });
    if (contexts)
        for (auto& cand : out) cand.snippets = contexts->snippets(cand.token, opts.snippets);
    record_proposal(session, c, out);
    return out;
}

void apply_decisions(SuggestionSession& session, SynonymDictionary& dict, const TokenSet& accepts,
                     const TokenSet& rejects) {
    auto& c = dict.at(session.concept_id);
    TokenSet pending;
    for (const auto& p : c.pending) pending.insert(p.token);
    for (const auto* set : {&accepts, &rejects})
        for (const auto& t : *set)
            if (!pending.contains(t))
                throw Error(ErrorCode::InvalidArgument,
                            fmt::format("token '{}' is not pending for concept '{}'", t, session.concept_id));
    for (const auto& t : accepts)
        if (rejects.contains(t))
            throw Error(ErrorCode::InvalidArgument, fmt::format("token '{}' is both accepted and rejected", t));

    c.accepted.insert(accepts.begin(), accepts.end());
    c.rejected.insert(rejects.begin(), rejects.end());
    session.history.push_back({session.iteration, std::vector<std::string>(pending.begin(), pending.end()),
                               std::vector<std::string>(accepts.begin(), accepts.end()),
                               std::vector<std::string>(rejects.begin(), rejects.end())});
    session.frontier.assign(accepts.begin(), accepts.end());
    c.history.push_back(
        {{"event", "decide"}, {"iteration", session.iteration}, {"accepts", accepts}, {"rejects", rejects}});
    ++session.iteration;
    c.pending.clear();
    session.fixpoint = accepts.empty();
}

void close_session(SuggestionSession& session, SynonymDictionary& dict) {
    auto& c = dict.at(session.concept_id);
    if (!session.active) throw Error(ErrorCode::State, fmt::format("no active session for concept '{}'", session.concept_id));
    c.pending.clear();
    session.active = false;
    c.history.push_back({{"event", "close"}, {"iteration", session.iteration}});
}

ConceptEntry replay(const ConceptEntry& entry) {
    SynonymDictionary scratch;
    scratch.add_concept(entry.concept_id, entry.canonical);
    SuggestionSession* session = &scratch.at(entry.concept_id).session;
    for (const auto& e : entry.history) {
        auto kind = e.at("event").get<std::string>();
        if (kind == "seed") {
            auto tokens = e.at("tokens").get<std::vector<std::string>>();
            session = &seed_concept(scratch, entry.concept_id, entry.canonical, tokens);
        } else if (kind == "propose") {
            std::vector<Candidate> cands;
            for (const auto& cj : e.at("candidates")) cands.push_back(candidate_from(cj));
            record_proposal(*session, scratch.at(entry.concept_id), std::move(cands));
        } else if (kind == "decide") {
            auto acc = e.at("accepts").get<std::vector<std::string>>();
            auto rej = e.at("rejects").get<std::vector<std::string>>();
            apply_decisions(*session, scratch, TokenSet(acc.begin(), acc.end()), TokenSet(rej.begin(), rej.end()));
        } else if (kind == "close") {
            close_session(*session, scratch);
        } else {
            throw Error(ErrorCode::Parse, fmt::format("unknown history event '{}'", kind));
        }
    }
    // Snippets are presentation data and are not part of the event log.
    auto out = scratch.at(entry.concept_id);
    for (std::size_t i = 0; i < out.pending.size() && i < entry.pending.size(); ++i)
        out.pending[i].snippets = entry.pending[i].snippets;
    return out;
}

Canonicalizer::Canonicalizer(const SynonymDictionary& dict) {
    dict.validate();
    for (const auto& [id, c] : dict.concepts()) {
        for (const auto& surface : c.accepted) {
            Form f;
            for (auto& t : io::split(surface, ' '))
                if (!t.empty()) f.tokens.push_back(std::move(t));
            if (f.tokens.empty()) continue;
            f.canonical = c.canonical;
            by_first_[f.tokens.front()].push_back(std::move(f));
        }
    }
    for (auto& [first, forms] : by_first_)
        std::stable_sort(forms.begin(), forms.end(),
                         [](const Form& a, const Form& b) { return a.tokens.size() > b.tokens.size(); });
}

std::vector<std::string> Canonicalizer::rewrite(std::span<const std::string> tokens) const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size();) {
        std::size_t consumed = 0;
        if (auto it = by_first_.find(tokens[i]); it != by_first_.end()) {
            for (const auto& f : it->second) {
                if (i + f.tokens.size() > tokens.size()) continue;
                if (std::equal(f.tokens.begin(), f.tokens.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
                    out.push_back(f.canonical);
                    consumed = f.tokens.size();
                    break;
                }
            }
        }
        if (consumed == 0) {
            out.push_back(tokens[i]);
            consumed = 1;
        }
        i += consumed;
    }
    return out;
}

void Canonicalizer::rewrite(textnorm::NormalizedDocument& doc) const {
    std::vector<std::string> out;
    std::vector<std::size_t> new_index(doc.tokens.size());
    for (std::size_t i = 0; i < doc.tokens.size();) {
        std::size_t consumed = 0;
        new_index[i] = out.size();
        if (auto it = by_first_.find(doc.tokens[i]); it != by_first_.end()) {
            for (const auto& f : it->second) {
                if (i + f.tokens.size() > doc.tokens.size()) continue;
                if (std::equal(f.tokens.begin(), f.tokens.end(),
                               doc.tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
                    for (std::size_t k = 0; k < f.tokens.size(); ++k) new_index[i + k] = out.size();
                    out.push_back(f.canonical);
                    consumed = f.tokens.size();
                    break;
                }
            }
        }
        if (consumed == 0) {
            out.push_back(doc.tokens[i]);
            consumed = 1;
        }
        i += consumed;
    }
    for (auto& m : doc.date_mentions) m.token_index = new_index[m.token_index];
    doc.tokens = std::move(out);
}

std::vector<std::string> canonicalize(std::span<const std::string> tokens, const SynonymDictionary& dict) {
    return Canonicalizer(dict).rewrite(tokens);
}

}  // namespace clinistruct::syndict
