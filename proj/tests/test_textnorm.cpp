#include <doctest.h>

#include <algorithm>
#include <random>

#include "clinistruct/ingest.hpp"
#include "clinistruct/textnorm.hpp"
#include "helpers.hpp"

using namespace clinistruct;
using namespace clinistruct::textnorm;
using V = std::vector<std::string>;

TEST_SUITE("textnorm") {
    TEST_CASE("accent folding") {
        CHECK(fold_accents("molière") == "moliere");
        CHECK(fold_accents("abc123") == "abc123");
        CHECK(fold_accents("Ménopausée à l'âge de 52 ans, sténose") == "Menopausee a l'age de 52 ans, stenose");
        CHECK(fold_accents("ÉÈÊËÀÇÔÛÏ") == "EEEEACOUI");
    }

    TEST_CASE("accent folding is idempotent") {
        std::mt19937_64 rng(11);
        const V pieces = {"é", "è", "a", "ç", "Ö", "x", " ", "1", "ñ", "œ", "ï", "-", "É"};
        for (int n = 0; n < 500; ++n) {
            std::string s;
            for (int i = 0; i < 12; ++i) s += pieces[rng() % pieces.size()];
            CHECK(fold_accents(fold_accents(s)) == fold_accents(s));
        }
    }

    TEST_CASE("tokenization") {
        CHECK(tokenize("Carcinome canalaire, grade II.") == V{"carcinome", "canalaire", "grade", "ii"});
        CHECK(tokenize("HER2") == V{"her2"});
        CHECK(tokenize("").empty());
        CHECK(tokenize("vu le 06/07/2017 : 2,5 cm") == V{"vu", "le", "06/07/2017", "2,5", "cm"});
        CHECK(tokenize("d'hospitalisation") == V{"d", "hospitalisation"});
    }

    TEST_CASE("folding commutes with tokenization") {
        const V texts = {"Mise en évidence d'une lésion de 22 mm du sein gauche.", "Récepteurs: RE positif à 90 %",
                         "Chimiothérapie néo-adjuvante le 3 février 2016", "ÉCHOGRAPHIE BILATÉRALE"};
        for (const auto& t : texts) {
            auto a = tokenize(fold_accents(t));
            V b;
            for (const auto& tok : tokenize(t)) b.push_back(fold_accents(tok));
            CHECK(a == b);
        }
    }

    TEST_CASE("numeric dates") {
        auto r = extract_dates(V{"vu", "le", "06/07/2017"});
        CHECK(r.tokens == V{"vu", "le", "<date>"});
        REQUIRE(r.mentions.size() == 1);
        CHECK(r.mentions[0] == DateMention{2, Date{2017, 7, 6}});
    }

    TEST_CASE("month-name dates") {
        auto r = extract_dates(V{"6", "juillet", "2017"});
        CHECK(r.tokens == V{"<date>"});
        REQUIRE(r.mentions.size() == 1);
        CHECK(r.mentions[0] == DateMention{0, Date{2017, 7, 6}});
    }

    TEST_CASE("tokens without dates are untouched") {
        V t = {"carcinome", "de", "22", "mm"};
        auto r = extract_dates(t);
        CHECK(r.tokens == t);
        CHECK(r.mentions.empty());
    }

    TEST_CASE("invalid calendar dates are left as tokens with a warning") {
        auto r = extract_dates(V{"le", "31/02/2017"});
        CHECK(r.tokens == V{"le", "31/02/2017"});
        CHECK(r.mentions.empty());
        CHECK_FALSE(r.warnings.empty());
    }

    TEST_CASE("date extraction keeps non-date tokens and is idempotent") {
        std::mt19937_64 rng(5);
        const V pool = {"le", "06/07/2017", "6", "juillet", "2017", "tumeur", "12", "mars", "1999", "de", "3,5"};
        for (int n = 0; n < 300; ++n) {
            V t;
            for (int i = 0; i < 10; ++i) t.push_back(pool[rng() % pool.size()]);
            auto once = extract_dates(t);
            auto twice = extract_dates(once.tokens);
            CHECK(twice.tokens == once.tokens);
            V kept;
            for (const auto& tok : once.tokens)
                if (tok != kDateToken) kept.push_back(tok);
            // Every surviving token appears in the input with at least the same multiplicity.
            for (const auto& tok : kept)
                CHECK(std::count(kept.begin(), kept.end(), tok) <= std::count(t.begin(), t.end(), tok));
            CHECK(kept.size() + 3 * once.mentions.size() >= t.size());
        }
    }

    TEST_CASE("date pattern file") {
        auto p = DatePatterns::parse("separators = /\nmonth juil 7\n");
        auto r = extract_dates(V{"6", "juil", "2017", "06-07-2017"}, p);
        REQUIRE(r.mentions.size() == 1);
        CHECK(r.mentions[0].date == Date{2017, 7, 6});
        CHECK(r.tokens.back() == "06-07-2017");
        CHECK_THROWS_AS(DatePatterns::parse("month juil 13"), Error);
    }

    TEST_CASE("timeline ordering") {
        auto a = testutil::doc("b", {"<date>"});
        a.date_mentions = {{0, Date{2016, 1, 2}}};
        auto b = testutil::doc("a", {"x", "<date>"});
        b.date_mentions = {{1, Date{2015, 12, 31}}};
        std::vector<NormalizedDocument> docs = {a, b};
        auto t = build_timeline(docs);
        REQUIRE(t.size() == 2);
        CHECK(t[0].date == Date{2015, 12, 31});
        CHECK(t[1].date == Date{2016, 1, 2});

        CHECK(build_timeline(std::vector<NormalizedDocument>{testutil::doc("z", {"x"})}).empty());

        auto c = testutil::doc("d2", {"<date>", "<date>"});
        c.date_mentions = {{1, Date{2016, 1, 2}}, {0, Date{2016, 1, 2}}};
        auto d = testutil::doc("d1", {"x", "x", "<date>"});
        d.date_mentions = {{2, Date{2016, 1, 2}}};
        std::vector<NormalizedDocument> tied = {c, d};
        auto tt = build_timeline(tied);
        REQUIRE(tt.size() == 3);
        CHECK(tt[0].doc_id == "d1");
        CHECK(tt[1].doc_id == "d2");
        CHECK(tt[1].token_index == 0);
        CHECK(tt[2].token_index == 1);
    }

    TEST_CASE("laterality cues") {
        CHECK(detect_laterality(V{"sein", "gauche"}) == Laterality::Left);
        CHECK(detect_laterality(V{"bilaterale"}) == Laterality::Both);
        CHECK(detect_laterality(V{"tumeur"}) == Laterality::Unknown);
        CHECK(detect_laterality(V{"sein", "gauche", "et", "sein", "droit"}) == Laterality::Both);
        auto cues = LateralityCues::parse("left g\nright d\n");
        CHECK(detect_laterality(V{"d"}, cues) == Laterality::Right);
    }

    TEST_CASE("normalize a raw document") {
        ingest::RawDocument raw;
        raw.doc_id = "d1";
        raw.patient_id = "p1";
        raw.sections = {{"MOTIF", "Réunion du 6 juillet 2017."}, {"HISTOLOGIE", "Tumeur de 22 mm du sein gauche."}};
        auto n = normalize(raw, {});
        CHECK(n.tokens == V{"reunion", "du", "<date>", "tumeur", "de", "22", "mm", "du", "sein", "gauche"});
        REQUIRE(n.date_mentions.size() == 1);
        CHECK(n.date_mentions[0].token_index == 2);
        CHECK(n.laterality == Laterality::Left);
        auto back = normalized_from_json(to_json(n));
        CHECK(back.tokens == n.tokens);
        CHECK(back.date_mentions == n.date_mentions);
        CHECK(back.laterality == n.laterality);
    }
}
