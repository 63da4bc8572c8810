#include <doctest.h>

#include "clinistruct/common.hpp"
#include "clinistruct/ingest.hpp"
#include "helpers.hpp"

using namespace clinistruct;
using namespace clinistruct::ingest;

TEST_SUITE("ingest") {
    TEST_CASE("empty jsonl file gives no documents") {
        testutil::TempDir dir("ingest");
        testutil::write_text(dir / "c.jsonl", "");
        CHECK(load_corpus(dir / "c.jsonl", CorpusFormat::Jsonl).empty());
    }

    TEST_CASE("jsonl documents keep input order") {
        testutil::TempDir dir("ingest");
        testutil::write_text(dir / "c.jsonl",
                             R"({"doc_id":"b","patient_id":"p1","source_type":"meeting_note","authored_date":"2017-07-06","text":"x"})"
                             "\n"
                             R"({"doc_id":"a","patient_id":"p1","source_type":"discharge_letter","authored_date":null,"text":"y"})"
                             "\n"
                             R"({"doc_id":"c","patient_id":"p2","source_type":"hospitalization_letter","authored_date":"2016-01-02","text":"z"})"
                             "\n");
        auto docs = load_corpus(dir / "c.jsonl", CorpusFormat::Jsonl);
        REQUIRE(docs.size() == 3);
        CHECK(docs[0].doc_id == "b");
        CHECK(docs[1].doc_id == "a");
        CHECK(docs[2].doc_id == "c");
        CHECK(docs[0].authored_date == Date{2017, 7, 6});
        CHECK_FALSE(docs[1].authored_date.has_value());
        CHECK(docs[1].source_type == SourceType::DischargeLetter);
    }

    TEST_CASE("duplicate doc_id names both lines") {
        testutil::TempDir dir("ingest");
        testutil::write_text(dir / "c.jsonl",
                             R"({"doc_id":"d1","patient_id":"p1","source_type":"meeting_note","authored_date":null,"text":"x"})"
                             "\n"
                             R"({"doc_id":"d1","patient_id":"p1","source_type":"meeting_note","authored_date":null,"text":"y"})"
                             "\n");
        try {
            load_corpus(dir / "c.jsonl", CorpusFormat::Jsonl);
            FAIL("expected an error");
        } catch (const Error& e) {
            std::string msg = e.what();
            CHECK(msg.find("d1") != std::string::npos);
            CHECK(msg.find('1') != std::string::npos);
            CHECK(msg.find('2') != std::string::npos);
        }
    }

    TEST_CASE("malformed json line is reported with its line number") {
        testutil::TempDir dir("ingest");
        testutil::write_text(dir / "c.jsonl",
                             R"({"doc_id":"d1","patient_id":"p1","source_type":"meeting_note","authored_date":null,"text":"x"})"
                             "\n{oops\n");
        CHECK_THROWS_WITH_AS(load_corpus(dir / "c.jsonl", CorpusFormat::Jsonl), doctest::Contains("line 2"), Error);
    }

    TEST_CASE("plain directory with metadata lines") {
        testutil::TempDir dir("ingest");
        testutil::write_text(dir / "corpus" / "b.txt", "#patient_id: p9\n#source_type: discharge_letter\n#authored_date: 2015-12-31\nLettre de sortie.\n");
        testutil::write_text(dir / "corpus" / "a.txt", "#patient_id: p9\nMOTIF:\nreunion\n");
        auto docs = load_corpus(dir / "corpus", CorpusFormat::PlainDir);
        REQUIRE(docs.size() == 2);
        CHECK(docs[0].doc_id == "a");
        CHECK(docs[1].source_type == SourceType::DischargeLetter);
        CHECK(docs[1].authored_date == Date{2015, 12, 31});
        CHECK(docs[0].sections.at(0).heading == "MOTIF");
    }

    TEST_CASE("headings split sections") {
        auto s = split_sections("ANTECEDENTS:\nfoo\nHISTOLOGIE:\nbar");
        REQUIRE(s.size() == 2);
        CHECK(s[0] == Section{"ANTECEDENTS", "foo"});
        CHECK(s[1] == Section{"HISTOLOGIE", "bar"});
    }

    TEST_CASE("text without headings is one untitled section") {
        auto s = split_sections("just text");
        REQUIRE(s.size() == 1);
        CHECK(s[0] == Section{"", "just text"});
    }

    TEST_CASE("blank line runs collapse to a single break") {
        auto s = split_sections("premier paragraphe\n\n\n\nsecond paragraphe");
        REQUIRE(s.size() == 1);
        CHECK(s[0].body == "premier paragraphe\n\nsecond paragraphe");
    }

    TEST_CASE("section bodies keep every non-heading character") {
        std::string text = "MOTIF:\nreunion du 06/07/2017\npatiente de 54 ans\nCONCLUSION:\nmastectomie, curage.\n";
        auto s = split_sections(text);
        std::string joined;
        for (const auto& sec : s) joined += sec.body + '\n';
        CHECK(joined == "reunion du 06/07/2017\npatiente de 54 ans\nmastectomie, curage.\n");
    }

    TEST_CASE("heading rules from text") {
        auto r = HeadingRules::parse("max_tokens = 2\ncolon_suffix = false\nuppercase = true\npattern = ^Conclusion\\b\n");
        auto s = split_sections("BILAN INITIAL\nx\nConclusion generale\ny\nDIAGNOSTIC DE CE JOUR\nz", r);
        REQUIRE(s.size() == 2);
        CHECK(s[0].heading == "BILAN INITIAL");
        CHECK(s[1].heading == "Conclusion generale");
        CHECK(s[1].body == "y\nDIAGNOSTIC DE CE JOUR\nz");
        CHECK_THROWS_AS(HeadingRules::parse("colour = red"), Error);
    }
}
