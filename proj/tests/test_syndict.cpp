#include <doctest.h>

#include "clinistruct/syndict.hpp"
#include "helpers.hpp"

using namespace clinistruct;
using namespace clinistruct::syndict;
using V = std::vector<std::string>;

namespace {

// 2-d model where angle encodes meaning: tokens near the x axis belong to the
// "cancer" cluster, tokens near the y axis do not.
embedding::EmbeddingModel toy_model() {
    const std::vector<std::pair<std::string, std::pair<double, double>>> rows = {
        {"cancer", {1.0, 0.00}},       {"carcinome", {1.0, 0.05}}, {"tumeur_maligne", {1.0, 0.10}},
        {"neoplasie", {1.0, 0.15}},    {"neoplasme", {1.0, 0.20}}, {"k1", {1.0, 0.30}},
        {"k2", {1.0, 0.40}},           {"k3", {1.0, 0.50}},        {"mastectomie", {0.0, 1.0}},
        {"ablation", {0.05, 1.0}},     {"sein", {-1.0, 0.2}},
    };
    V vocab;
    for (const auto& r : rows) vocab.push_back(r.first);
    embedding::EmbeddingModel m(vocab, 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        m.input(i)[0] = rows[i].second.first;
        m.input(i)[1] = rows[i].second.second;
    }
    return m;
}

TokenSet pending_tokens(const SynonymDictionary& d, const std::string& id) {
    TokenSet out;
    for (const auto& p : d.at(id).pending) out.insert(p.token);
    return out;
}

}  // namespace

TEST_SUITE("syndict") {
    TEST_CASE("seeding accepts canonical and seeds") {
        SynonymDictionary d;
        V seeds = {"carcinome", "tumeur_maligne"};
        auto& s = seed_concept(d, "cancer", "cancer", seeds);
        CHECK(d.at("cancer").accepted == TokenSet{"cancer", "carcinome", "tumeur_maligne"});
        CHECK(s.frontier.size() == 3);
        CHECK(s.active);
        CHECK(s.iteration == 0);
    }

    TEST_CASE("empty and duplicate seeds") {
        SynonymDictionary d;
        seed_concept(d, "cancer", "cancer", V{});
        CHECK(d.at("cancer").accepted == TokenSet{"cancer"});
        SynonymDictionary e;
        seed_concept(e, "cancer", "cancer", V{"carcinome", "carcinome"});
        CHECK(e.at("cancer").accepted.size() == 2);
        CHECK(e.at("cancer").seeds == V{"carcinome"});
        SynonymDictionary f;
        CHECK_THROWS_AS(seed_concept(f, "cancer", "cancer", V{""}), Error);
    }

    TEST_CASE("suggestions exclude decided tokens and rank by similarity") {
        auto m = toy_model();
        SynonymDictionary d;
        auto& s = seed_concept(d, "cancer", "cancer", V{"carcinome"});
        auto c = suggest(s, m, d, {.k = 4, .snippets = 3});
        REQUIRE(!c.empty());
        for (const auto& x : c) {
            CHECK(!d.at("cancer").accepted.contains(x.token));
        }
        for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i - 1].similarity >= c[i].similarity);
        CHECK(c.front().token == "tumeur_maligne");
        CHECK(pending_tokens(d, "cancer").contains("neoplasie"));
        CHECK(!s.fixpoint);
    }

    TEST_CASE("accepting two of five candidates") {
        auto m = toy_model();
        SynonymDictionary d;
        auto& s = seed_concept(d, "cancer", "cancer", V{});
        auto c = suggest(s, m, d, {.k = 5});
        REQUIRE(c.size() == 5);
        CHECK(pending_tokens(d, "cancer") == TokenSet{"carcinome", "tumeur_maligne", "neoplasie", "neoplasme", "k1"});
        apply_decisions(s, d, {"carcinome", "tumeur_maligne"}, {"neoplasie", "neoplasme", "k1"});
        const auto& e = d.at("cancer");
        CHECK(e.accepted == TokenSet{"cancer", "carcinome", "tumeur_maligne"});
        CHECK(e.rejected == TokenSet{"neoplasie", "neoplasme", "k1"});
        CHECK(e.pending.empty());
        CHECK(s.iteration == 1);
        CHECK(s.frontier == V{"carcinome", "tumeur_maligne"});
        // Rejected tokens never come back.
        auto next = suggest(s, m, d, {.k = 10});
        for (const auto& x : next) {
            CHECK(!e.rejected.contains(x.token));
            CHECK(!e.accepted.contains(x.token));
        }
    }

    TEST_CASE("accepting nothing is a fixpoint") {
        auto m = toy_model();
        SynonymDictionary d;
        auto& s = seed_concept(d, "cancer", "cancer", V{});
        auto c = suggest(s, m, d, {.k = 3});
        TokenSet all;
        for (const auto& x : c) all.insert(x.token);
        apply_decisions(s, d, {}, all);
        CHECK(s.fixpoint);
        CHECK(s.frontier.empty());
        CHECK(suggest(s, m, d, {.k = 3}).empty());
    }

    TEST_CASE("decisions must concern pending tokens") {
        auto m = toy_model();
        SynonymDictionary d;
        auto& s = seed_concept(d, "cancer", "cancer", V{});
        suggest(s, m, d, {.k = 3});
        CHECK_THROWS_WITH_AS(apply_decisions(s, d, {"sein"}, {}), doctest::Contains("sein"), Error);
        CHECK_THROWS_AS(apply_decisions(s, d, {"carcinome"}, {"carcinome"}), Error);
        // Failed calls leave the entry untouched.
        CHECK(d.at("cancer").accepted == TokenSet{"cancer"});
        CHECK(pending_tokens(d, "cancer").size() == 3);
    }

    TEST_CASE("seeding a rejected token is refused") {
        auto m = toy_model();
        SynonymDictionary d;
        auto& s = seed_concept(d, "cancer", "cancer", V{});
        suggest(s, m, d, {.k = 1});
        apply_decisions(s, d, {}, {"carcinome"});
        close_session(s, d);
        CHECK_THROWS_AS(seed_concept(d, "cancer", "cancer", V{"carcinome"}), Error);
    }

    TEST_CASE("out of vocabulary frontier") {
        auto m = toy_model();
        SynonymDictionary d;
        auto& s = seed_concept(d, "her2", "her2", V{"cerb2"});
        std::vector<std::string> warnings;
        auto c = suggest(s, m, d, {}, nullptr, &warnings);
        CHECK(c.empty());
        CHECK(s.fixpoint);
        CHECK(warnings.size() == 3);
    }

    TEST_CASE("a surface form accepted by two concepts is rejected") {
        SynonymDictionary d;
        seed_concept(d, "cancer", "cancer", V{"carcinome"});
        seed_concept(d, "tumeur", "tumeur", V{"carcinome"});
        CHECK_THROWS_AS(d.validate(), Error);
    }

    TEST_CASE("replay of the event log reproduces the entry") {
        auto m = toy_model();
        SynonymDictionary d;
        auto& s = seed_concept(d, "cancer", "cancer", V{"carcinome"});
        suggest(s, m, d, {.k = 3});
        apply_decisions(s, d, {"tumeur_maligne"}, {"neoplasie"});
        suggest(s, m, d, {.k = 3});
        auto mid = replay(d.at("cancer"));
        CHECK(mid.accepted == d.at("cancer").accepted);
        CHECK(mid.rejected == d.at("cancer").rejected);
        CHECK(pending_tokens(d, "cancer").size() == mid.pending.size());
        close_session(s, d);
        auto r = replay(d.at("cancer"));
        const auto& e = d.at("cancer");
        CHECK(r.accepted == e.accepted);
        CHECK(r.rejected == e.rejected);
        CHECK(r.pending.empty());
        CHECK(r.session.iteration == e.session.iteration);
        CHECK(r.session.active == false);
        CHECK(e.history.back().at("event") == "close");
        CHECK_THROWS_AS(close_session(s, d), Error);
    }

    TEST_CASE("dictionary json round trip") {
        auto m = toy_model();
        SynonymDictionary d;
        auto& s = seed_concept(d, "cancer", "cancer", V{"carcinome"});
        suggest(s, m, d, {.k = 3});
        apply_decisions(s, d, {"tumeur_maligne"}, {"neoplasie"});
        testutil::TempDir dir("dict");
        d.save(dir / "d.json", nlohmann::json{{"tool", "clinistruct"}});
        auto back = SynonymDictionary::load(dir / "d.json");
        CHECK(back.to_json() == d.to_json());
        auto seeds = d.seed_only();
        CHECK(seeds.at("cancer").accepted == TokenSet{"cancer", "carcinome"});
        CHECK(seeds.at("cancer").history.empty());
    }

    TEST_CASE("canonicalization rewrites accepted forms only") {
        SynonymDictionary d;
        seed_concept(d, "cancer", "carcinome", V{"cci", "carcinome canalaire infiltrant", "idc"});
        seed_concept(d, "mastectomie", "mastectomie", V{"ablation du sein"});
        auto out = canonicalize(testutil::words("un idc de 12 mm et un carcinome canalaire infiltrant"), d);
        CHECK(out == testutil::words("un carcinome de 12 mm et un carcinome"));
        // A partial mastectomy is a different procedure: not rewritten.
        auto partial = testutil::words("mastectomie_partielle gauche");
        CHECK(canonicalize(partial, d) == partial);
        CHECK(canonicalize(testutil::words("ablation du sein droit"), d) == testutil::words("mastectomie droit"));
        CHECK(canonicalize(testutil::words("ablation du rein"), d) == testutil::words("ablation du rein"));
    }

    TEST_CASE("canonicalization is idempotent") {
        SynonymDictionary d;
        seed_concept(d, "cancer", "carcinome", V{"cci", "tumeur maligne"});
        seed_concept(d, "grade", "grade", V{"sbr", "grade sbr"});
        for (const char* text : {"cci grade sbr 2", "tumeur maligne tumeur", "sbr sbr cci x", ""}) {
            auto once = canonicalize(testutil::words(text), d);
            CHECK(canonicalize(once, d) == once);
        }
    }

    TEST_CASE("canonicalizing a document keeps date mentions on their tokens") {
        SynonymDictionary d;
        seed_concept(d, "cancer", "carcinome", V{"tumeur maligne"});
        auto doc = testutil::doc("d1", testutil::words("tumeur maligne vue le 12/03/2015"));
        textnorm::DateMention mention;
        mention.token_index = 4;
        doc.date_mentions.push_back(mention);
        Canonicalizer(d).rewrite(doc);
        CHECK(doc.tokens == testutil::words("carcinome vue le 12/03/2015"));
        CHECK(doc.date_mentions[0].token_index == 3);
    }

    TEST_CASE("context snippets") {
        std::vector<textnorm::NormalizedDocument> corpus = {
            testutil::doc("b", testutil::words("x carcinome y")),
            testutil::doc("a", testutil::words("un deux trois quatre cinq six sept huit neuf carcinome dix")),
            testutil::doc("c", testutil::words("carcinome_canalaire carcinome")),
        };
        ContextIndex idx(corpus);
        CHECK(idx.occurrences("carcinome") == 3);
        auto all = idx.snippets("carcinome", 10);
        REQUIRE(all.size() == 3);
        CHECK(all[0].doc_id == "a");
        CHECK(all[0].token_index == 9);
        CHECK(all[0].left == "deux trois quatre cinq six sept huit neuf");
        CHECK(all[0].right == "dix");
        CHECK(all[1].doc_id == "b");
        CHECK(all[1].left == "x");
        CHECK(all[2].left == "carcinome_canalaire");
        CHECK(idx.snippets("carcinome", 1).size() == 1);
        // A merged phrase token is its own term.
        CHECK(idx.snippets("carcinome_canalaire", 5).size() == 1);
        CHECK(idx.snippets("absent", 5).empty());
    }
}
