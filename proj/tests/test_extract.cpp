#include <doctest.h>

#include "clinistruct/extract.hpp"
#include "clinistruct/pipeline.hpp"
#include "helpers.hpp"

using namespace clinistruct;
using namespace clinistruct::extract;
using testutil::words;
using V = std::vector<std::string>;

namespace {

const std::vector<ExtractionRule>& default_rules() {
    static const auto rules = parse_rules(pipeline::default_rules_text());
    return rules;
}

const ExtractionRule& rule(std::string_view name) {
    for (const auto& r : default_rules())
        if (r.indicator == name) return r;
    throw std::runtime_error("no rule");
}

std::optional<std::string> value(std::string_view indicator, const std::string& text) {
    auto d = testutil::doc("d", words(text));
    auto m = apply_rule(d, rule(indicator));
    if (!m) return std::nullopt;
    return m->value;
}

textnorm::NormalizedDocument dated(std::string id, const std::string& text, int y, int m, int d, SourceType s,
                                   std::string patient = "p1") {
    auto doc = testutil::doc(std::move(id), words(text), std::move(patient), s);
    doc.authored_date = Date{y, m, d};
    return doc;
}

}  // namespace

TEST_SUITE("extract") {
    TEST_CASE("numeric values with units") {
        CHECK(value("tumor_size", "tumeur de 22 mm") == "22");
        CHECK(value("tumor_size", "tumeur de 2,2 cm au total") == "22");
        CHECK(value("tumor_size", "tumeur mesurant 1.5 cm") == "15");
        CHECK(value("ki67", "ki67 a 30 %") == "30");
        CHECK(value("nodes", "ganglions envahis 3 sur 12") == "3");
        CHECK(!value("tumor_size", "tumeur palpable"));
        CHECK(!value("tumor_size", "aucune mesure"));
    }

    TEST_CASE("out of range numbers are errors, not values") {
        auto d = testutil::doc("d9", words("ki67 a 300 %"));
        std::vector<FieldError> errors;
        CHECK(!apply_rule(d, rule("ki67"), &errors));
        REQUIRE(errors.size() == 1);
        CHECK(errors[0].indicator == "ki67");
        CHECK(errors[0].doc_id == "d9");
    }

    TEST_CASE("value window is bounded") {
        auto r = rule("tumor_size");
        r.window = 3;
        auto far = testutil::doc("d", words("tumeur a b c 22 mm"));
        CHECK(!apply_rule(far, r));
        auto near = testutil::doc("d", words("tumeur a b 22 mm"));
        CHECK(apply_rule(near, r)->value == "22");
    }

    TEST_CASE("first mention that yields a value wins") {
        auto r = rule("tumor_size");
        r.window = 3;
        auto d = testutil::doc("d", words("tumeur palpable . tumeur de 15 mm puis tumeur de 30 mm"));
        auto m = apply_rule(d, r);
        REQUIRE(m);
        CHECK(m->value == "15");
        CHECK(m->token_index == 3);
    }

    TEST_CASE("categories") {
        CHECK(value("sbr_grade", "grade 2") == "II");
        CHECK(value("sbr_grade", "grade sbr 3") == "III");
        CHECK(value("er", "re positif a 90 %") == "pos");
        CHECK(value("her2", "her2 negatif") == "neg");
        CHECK(value("cancer_subtype", "carcinome canalaire infiltrant") == "ductal");
        CHECK(value("cancer_type", "carcinome canalaire infiltrant") == "invasive");
        CHECK(value("cancer_type", "carcinome canalaire in situ") == "in_situ");
        CHECK(!value("sbr_grade", "grade inconnu"));
    }

    TEST_CASE("values inside merged phrase tokens") {
        CHECK(value("cancer_subtype", "carcinome canalaire_infiltrant") == "ductal");
        CHECK(value("cancer_type", "carcinome in_situ") == "in_situ");
        CHECK(value("tumor_size", "tumeur de_22 mm") == "22");
    }

    TEST_CASE("presence and negation") {
        CHECK(value("metastasis", "metastase hepatique") == "yes");
        CHECK(value("metastasis", "pas de metastase") == "no");
        CHECK(value("metastasis", "absence de metastase a distance") == "no");
        CHECK(!value("metastasis", "bilan normal"));
        CHECK(value("metastasis", "pas_de metastase") == "no");
    }

    TEST_CASE("negated category mentions are skipped unless labelled") {
        auto r = rule("er");
        r.negation_cues = {words("pas de")};
        auto d = testutil::doc("d", words("pas de re positif . re negatif"));
        CHECK(apply_rule(d, r)->value == "neg");
        r.negated_label = "neg";
        CHECK(apply_rule(d, r)->token_index == 2);
    }

    TEST_CASE("recency within a source and precedence across sources") {
        auto old_note = dated("n1", "tumeur de 10 mm", 2015, 1, 1, SourceType::MeetingNote);
        auto new_note = dated("n2", "tumeur de 12 mm", 2015, 3, 1, SourceType::MeetingNote);
        auto letter = dated("h1", "tumeur de 14 mm ki67 a 20 %", 2015, 4, 1, SourceType::HospitalizationLetter);
        auto discharge = dated("s1", "ganglions 2 ki67 a 25 %", 2015, 5, 1, SourceType::DischargeLetter);
        std::vector<const textnorm::NormalizedDocument*> docs = {&new_note, &letter, &old_note, &discharge};
        auto recs = extract_record(docs, default_rules());
        REQUIRE(recs.size() == 3);
        CHECK(recs[0].source_type == SourceType::MeetingNote);
        CHECK(recs[0].fields.at("tumor_size")->value == "12");
        CHECK(recs[0].fields.at("tumor_size")->doc_id == "n2");
        CHECK(!recs[0].fields.at("ki67"));
        auto merged = merge_sources(recs);
        CHECK(!merged.source_type);
        CHECK(merged.fields.at("tumor_size")->value == "12");
        // Meeting notes lack ki67 and nodes; the discharge letter precedes the
        // hospitalization letter.
        CHECK(merged.fields.at("ki67")->value == "25");
        CHECK(merged.fields.at("ki67")->source_type == SourceType::DischargeLetter);
        CHECK(merged.fields.at("nodes")->value == "2");
        CHECK(!merged.fields.at("metastasis"));
    }

    TEST_CASE("a later document without a value keeps the earlier one") {
        auto a = dated("a", "tumeur de 10 mm", 2015, 1, 1, SourceType::MeetingNote);
        auto b = dated("b", "rien a signaler", 2016, 1, 1, SourceType::MeetingNote);
        std::vector<const textnorm::NormalizedDocument*> docs = {&a, &b};
        auto recs = extract_record(docs, default_rules());
        CHECK(recs[0].fields.at("tumor_size")->value == "10");
    }

    TEST_CASE("merging never loses a filled field") {
        std::vector<textnorm::NormalizedDocument> corpus = {
            dated("a", "tumeur de 10 mm grade 2", 2015, 1, 1, SourceType::MeetingNote),
            dated("b", "ki67 a 5 % re positif", 2015, 1, 2, SourceType::HospitalizationLetter),
            dated("c", "pas de metastase ganglions 0", 2015, 1, 3, SourceType::DischargeLetter),
            dated("d", "her2 negatif", 2015, 1, 1, SourceType::MeetingNote, "p2"),
        };
        auto per_source = extract_corpus(corpus, default_rules());
        auto merged = merge_corpus(per_source);
        REQUIRE(merged.size() == 2);
        for (const auto& m : merged) {
            for (const auto& r : per_source) {
                if (r.patient_id != m.patient_id) continue;
                for (const auto& [name, v] : r.fields)
                    if (v) CHECK(m.fields.at(name).has_value());
                CHECK(m.filled() >= r.filled());
            }
        }
        CHECK(merged[0].filled() == 6);
    }

    TEST_CASE("records csv round trip") {
        std::vector<textnorm::NormalizedDocument> corpus = {
            dated("a", "tumeur de 10 mm grade 2", 2015, 1, 1, SourceType::MeetingNote),
            dated("b", "ki67 a 5 %", 2015, 1, 2, SourceType::HospitalizationLetter),
        };
        auto recs = extract_corpus(corpus, default_rules());
        V names;
        for (const auto& r : default_rules()) names.push_back(r.indicator);
        testutil::TempDir dir("records");
        write_records_csv(recs, names, dir / "r.csv");
        V back_names;
        auto back = read_records_csv(dir / "r.csv", &back_names);
        CHECK(back_names == names);
        REQUIRE(back.size() == recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(back[i].patient_id == recs[i].patient_id);
            CHECK(back[i].source_type == recs[i].source_type);
            for (const auto& n : names) CHECK(back[i].fields.at(n) == recs[i].fields.at(n));
        }
    }

    TEST_CASE("search with an augmented dictionary finds a superset") {
        syndict::SynonymDictionary seed;
        syndict::seed_concept(seed, "cancer", "carcinome", V{});
        syndict::SynonymDictionary augmented = seed;
        augmented.at("cancer").accepted.insert("cci");
        augmented.at("cancer").accepted.insert("tumeur maligne");
        std::vector<textnorm::NormalizedDocument> corpus = {
            testutil::doc("1", words("un carcinome")), testutil::doc("2", words("un cci")),
            testutil::doc("3", words("une tumeur maligne")), testutil::doc("4", words("rien")),
        };
        auto canon = [&](const syndict::SynonymDictionary& d) {
            auto c = corpus;
            syndict::Canonicalizer can(d);
            for (auto& doc : c) can.rewrite(doc);
            return search_records(c, "cancer", d);
        };
        auto d1 = canon(seed), d2 = canon(augmented);
        CHECK(d1 == std::set<std::string>{"1"});
        CHECK(d2 == std::set<std::string>{"1", "2", "3"});
        CHECK(std::includes(d2.begin(), d2.end(), d1.begin(), d1.end()));
    }

    TEST_CASE("rules resolve to canonical tokens") {
        syndict::SynonymDictionary d;
        syndict::seed_concept(d, "tumeur", "lesion", V{});
        auto rules = default_rules();
        resolve_concepts(rules, d);
        for (const auto& r : rules) {
            if (r.concept_id == "tumeur")
                CHECK(r.token == "lesion");
            else
                CHECK(r.token == r.concept_id);
        }
    }

    TEST_CASE("rules file errors") {
        CHECK_THROWS_AS(parse_rules("concept = x\n"), Error);
        CHECK_THROWS_AS(parse_rules("[a]\nconcept = x\nkind = fuzzy\n"), Error);
        CHECK_THROWS_AS(parse_rules("[a]\nconcept = x\nkind = category\n"), Error);
        CHECK_THROWS_AS(parse_rules("[a]\nconcept = x\n[a]\nconcept = y\n"), Error);
        CHECK_THROWS_AS(parse_rules("[a]\nconcept = x\ncolour = red\n"), Error);
        CHECK_THROWS_AS(parse_rules("[a]\nconcept = x\nwindow = many\n"), Error);
        CHECK_THROWS_AS(parse_rules("[a]\nconcept = x\nkind = presence\npositive = maybe\n"), Error);
        CHECK_THROWS_AS(parse_rules("[a\nconcept = x\n"), Error);
        auto ok = parse_rules("# comment\n[a]\nconcept = x\nkind = numeric\nunits = mm:1, cm:10\nwindow = 4\n");
        REQUIRE(ok.size() == 1);
        CHECK(ok[0].window == 4);
        CHECK(ok[0].unit_factors.at("cm") == 10);
    }

    TEST_CASE("default rule labels") {
        CHECK(rule("sbr_grade").labels() == V{"I", "II", "III"});
        CHECK(rule("metastasis").labels() == V{"no", "yes"});
        CHECK(rule("cancer_subtype").labels() == V{"ductal", "lobular", "medullary", "mucinous"});
    }
}
