#pragma once

#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "clinistruct/common.hpp"

namespace clinistruct::ingest {

struct Section {
    std::string heading;
    std::string body;

    bool operator==(const Section&) const = default;
};

struct RawDocument {
    std::string doc_id;
    std::string patient_id;
    SourceType source_type = SourceType::MeetingNote;
    std::optional<Date> authored_date;
    std::vector<Section> sections;
};

enum class CorpusFormat { Jsonl, PlainDir };

CorpusFormat parse_corpus_format(std::string_view s);

// Heading detection rules. A line is a heading when it has at most
// max_tokens whitespace-separated tokens and either ends with ':' or is fully
// uppercase, or when it matches one of the extra patterns.
struct HeadingRules {
    std::size_t max_tokens = 6;
    bool colon_suffix = true;
    bool all_uppercase = true;
    std::vector<std::regex> patterns;

    // Plain text, one rule per line:
    //   max_tokens = 6
    //   colon_suffix = true
    //   uppercase = true
    //   pattern = ^CONCLUSION\b
    static HeadingRules load(const std::filesystem::path& p);
    static HeadingRules parse(std::string_view text);
};

std::vector<Section> split_sections(std::string_view text, const HeadingRules& rules = {});

// Loads a corpus. jsonl: one object per line with doc_id, patient_id,
// source_type, authored_date (ISO-8601 or null) and text. plain_dir: every
// *.txt file in the directory, sorted by name; optional leading
// "#key: value" lines set patient_id/source_type/authored_date.
std::vector<RawDocument> load_corpus(const std::filesystem::path& path, CorpusFormat format,
                                     const HeadingRules& rules = {});

}  // namespace clinistruct::ingest
