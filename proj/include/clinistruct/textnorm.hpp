#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinistruct/common.hpp"
#include "clinistruct/ingest.hpp"

namespace clinistruct::textnorm {

inline constexpr std::string_view kDateToken = "<date>";

// Replaces every accented Latin letter with its base letter. One codepoint in,
// one codepoint out; ligatures such as oe/ae are left alone.
std::string fold_accents(std::string_view text);

// Splits on whitespace and punctuation and lowercases. Letter/digit runs stay
// whole ("HER2" -> "her2"); digit groups joined by '/', '-', '.' or ',' stay
// one token so dates and decimals survive ("06/07/2017", "2,5").
std::vector<std::string> tokenize(std::string_view text);

bool is_number_token(std::string_view token);

// UTF-8 to codepoints; invalid bytes map to themselves.
std::u32string to_codepoints(std::string_view text);

// Day-first date patterns: dd/mm/yyyy (also '-' and '.'), "d <month> yyyy".
struct DatePatterns {
    std::string separators = "/-.";
    int two_digit_pivot = 40;  // yy >= pivot -> 19yy, else 20yy
    std::map<std::string, int, std::less<>> months;

    static DatePatterns french();
    static DatePatterns load(const std::filesystem::path& p);
    static DatePatterns parse(std::string_view text);
};

struct DateMention {
    std::size_t token_index = 0;
    Date date;

    bool operator==(const DateMention&) const = default;
};

struct DateExtraction {
    std::vector<std::string> tokens;
    std::vector<DateMention> mentions;
    std::vector<std::string> warnings;
};

DateExtraction extract_dates(std::span<const std::string> tokens, const DatePatterns& patterns = DatePatterns::french());

enum class Laterality { Unknown, Left, Right, Both };

std::string_view to_string(Laterality l);
Laterality parse_laterality(std::string_view s);

struct LateralityCues {
    std::set<std::string, std::less<>> left;
    std::set<std::string, std::less<>> right;
    std::set<std::string, std::less<>> both;

    static LateralityCues french();
    // Lines of "left gauche", "right droit", "both bilateral".
    static LateralityCues load(const std::filesystem::path& p);
    static LateralityCues parse(std::string_view text);
};

Laterality detect_laterality(std::span<const std::string> tokens, const LateralityCues& cues = LateralityCues::french());

struct NormalizedDocument {
    std::string doc_id;
    std::string patient_id;
    SourceType source_type = SourceType::MeetingNote;
    std::optional<Date> authored_date;
    std::vector<std::string> tokens;
    std::vector<DateMention> date_mentions;
    Laterality laterality = Laterality::Unknown;
};

struct NormalizeOptions {
    DatePatterns dates = DatePatterns::french();
    LateralityCues cues = LateralityCues::french();
};

// Section bodies are folded and tokenized in order; headings are structure
// and do not enter the token stream.
NormalizedDocument normalize(const ingest::RawDocument& doc, const NormalizeOptions& opts,
                             std::vector<std::string>* warnings = nullptr);

struct TimelineEntry {
    Date date;
    std::string doc_id;
    std::size_t token_index = 0;

    auto operator<=>(const TimelineEntry&) const = default;
};

using Timeline = std::vector<TimelineEntry>;

Timeline build_timeline(std::span<const NormalizedDocument> docs);

nlohmann::json to_json(const NormalizedDocument& d);
NormalizedDocument normalized_from_json(const nlohmann::json& j);

}  // namespace clinistruct::textnorm
