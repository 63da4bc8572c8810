#include "clinistruct/textnorm.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <fmt/format.h>

#include "clinistruct/io.hpp"

namespace clinistruct::textnorm {

namespace {

struct CodepointPair {
    char32_t from;
    char32_t to;
};

#include "latin_tables.inc"

char32_t lookup(std::span<const CodepointPair> table, char32_t cp) {
    auto it = std::lower_bound(table.begin(), table.end(), cp,
                               [](const CodepointPair& p, char32_t v) { return p.from < v; });
    return (it != table.end() && it->from == cp) ? it->to : cp;
}

// Decodes one UTF-8 sequence at s[i]. Invalid bytes decode as themselves
// with length 1 and valid == false.
struct Decoded {
    char32_t cp;
    std::size_t len;
    bool valid;
};

Decoded decode(std::string_view s, std::size_t i) {
    auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) return {b0, 1, true};
    std::size_t len = (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + len > s.size()) return {b0, 1, false};
    char32_t cp = b0 & (0xFF >> (len + 1));
    for (std::size_t k = 1; k < len; ++k) {
        auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) return {b0, 1, false};
        cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, len, true};
}

void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_word_char(char32_t cp) {
    if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) != 0;
    if (cp < 0xC0 || cp == 0xD7 || cp == 0xF7) return false;
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, symbols, arrows
    if (cp >= 0x3000 && cp <= 0x303F) return false;
    return true;
}

bool is_digit(char32_t cp) { return cp >= '0' && cp <= '9'; }

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool parse_int(std::string_view s, int& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace

std::string fold_accents(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        auto d = decode(text, i);
        if (d.valid)
            encode(lookup(kFoldTable, d.cp), out);
        else
            out += text[i];
        i += d.len;
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    bool numeric = true;  // current token is digits joined by separators so far
    auto flush = [&] {
        if (!cur.empty()) tokens.push_back(std::move(cur));
        cur.clear();
        numeric = true;
    };
    for (std::size_t i = 0; i < text.size();) {
        auto d = decode(text, i);
        char32_t cp = d.valid ? d.cp : 0xFFFD;
        if (is_word_char(cp) && d.valid) {
            if (!is_digit(cp)) numeric = false;
            encode(lookup(kLowerTable, cp < 0x80 ? static_cast<char32_t>(std::tolower(static_cast<int>(cp))) : cp), cur);
        } else if ((cp == '/' || cp == '-' || cp == '.' || cp == ',') && numeric && !cur.empty() &&
                   is_digit(static_cast<unsigned char>(cur.back())) && i + 1 < text.size() &&
                   is_digit(static_cast<unsigned char>(text[i + 1]))) {
            cur += static_cast<char>(cp);
        } else {
            flush();
        }
        i += d.len;
    }
    flush();
    return tokens;
}

std::u32string to_codepoints(std::string_view text) {
    std::u32string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        auto d = decode(text, i);
        out += d.cp;
        i += d.len;
    }
    return out;
}

bool is_number_token(std::string_view token) {
    if (token.empty() || !is_digit(static_cast<unsigned char>(token.front()))) return false;
    return std::all_of(token.begin(), token.end(),
                       [](char c) { return (c >= '0' && c <= '9') || c == '.' || c == ',' || c == '/' || c == '-'; });
}

DatePatterns DatePatterns::french() {
    DatePatterns p;
    const char* names[] = {"janvier", "fevrier", "mars",    "avril",    "mai",      "juin",
                           "juillet", "aout",    "septembre", "octobre", "novembre", "decembre"};
    for (int m = 0; m < 12; ++m) p.months.emplace(names[m], m + 1);
    return p;
}

DatePatterns DatePatterns::parse(std::string_view text) {
    DatePatterns p;
    auto lines = io::split(text, '\n');
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto line = io::trim(lines[i]);
        if (line.empty() || line[0] == '#') continue;
        if (line.starts_with("month ")) {
            auto parts = io::split(io::trim(line.substr(6)), ' ');
            int m = 0;
            if (parts.size() != 2 || !parse_int(parts[1], m) || m < 1 || m > 12)
                throw Error(ErrorCode::Parse, fmt::format("date patterns line {}: expected 'month <name> <1-12>'", i + 1));
            p.months[tokenize(fold_accents(parts[0])).at(0)] = m;
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::Parse, fmt::format("date patterns line {}: expected key = value", i + 1));
        auto key = io::trim(line.substr(0, eq));
        auto value = io::trim(line.substr(eq + 1));
        if (key == "separators") {
            p.separators = value;
        } else if (key == "two_digit_pivot") {
            if (!parse_int(value, p.two_digit_pivot))
                throw Error(ErrorCode::Parse, fmt::format("date patterns line {}: bad pivot", i + 1));
        } else {
            throw Error(ErrorCode::Parse, fmt::format("date patterns line {}: unknown key '{}'", i + 1, key));
        }
    }
    return p;
}

DatePatterns DatePatterns::load(const std::filesystem::path& p) { return parse(io::read_file(p)); }

namespace {

int expand_year(std::string_view y, const DatePatterns& p) {
    int v = 0;
    parse_int(y, v);
    if (y.size() == 2) return v >= p.two_digit_pivot ? 1900 + v : 2000 + v;
    return v;
}

// dd/mm/yyyy with a single separator kind. Returns nullopt when the token is
// not date-shaped; sets `ambiguous` when it is shaped like a date but invalid.
std::optional<Date> numeric_date(std::string_view tok, const DatePatterns& p, bool& ambiguous) {
    ambiguous = false;
    for (char sep : p.separators) {
        auto parts = io::split(tok, sep);
        if (parts.size() != 3) continue;
        if (!all_digits(parts[0]) || !all_digits(parts[1]) || !all_digits(parts[2])) continue;
        if (parts[0].size() > 2 || parts[1].size() > 2 || (parts[2].size() != 2 && parts[2].size() != 4)) continue;
        Date d;
        parse_int(parts[0], d.day);
        parse_int(parts[1], d.month);
        d.year = expand_year(parts[2], p);
        if (d.valid()) return d;
        ambiguous = true;
        return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace

DateExtraction extract_dates(std::span<const std::string> tokens, const DatePatterns& p) {
    DateExtraction out;
    for (std::size_t i = 0; i < tokens.size();) {
        bool ambiguous = false;
        if (auto d = numeric_date(tokens[i], p, ambiguous)) {
            out.mentions.push_back({out.tokens.size(), *d});
            out.tokens.emplace_back(kDateToken);
            ++i;
            continue;
        }
        if (ambiguous) out.warnings.push_back(fmt::format("ambiguous date '{}' at token {}", tokens[i], i));

        // "<day> <month-name> <year>"
        if (i + 2 < tokens.size()) {
            auto month = p.months.find(tokens[i + 1]);
            const auto& day_tok = tokens[i];
            const auto& year_tok = tokens[i + 2];
            bool day_ok = (all_digits(day_tok) && day_tok.size() <= 2) || day_tok == "1er";
            if (month != p.months.end() && day_ok && all_digits(year_tok) && year_tok.size() == 4) {
                Date d;
                if (day_tok == "1er")
                    d.day = 1;
                else
                    parse_int(day_tok, d.day);
                d.month = month->second;
                d.year = expand_year(year_tok, p);
                if (d.valid()) {
                    out.mentions.push_back({out.tokens.size(), d});
                    out.tokens.emplace_back(kDateToken);
                    i += 3;
                    continue;
                }
                out.warnings.push_back(fmt::format("ambiguous date '{} {} {}' at token {}", day_tok, tokens[i + 1],
                                                   year_tok, i));
            }
        }
        out.tokens.push_back(tokens[i]);
        ++i;
    }
    return out;
}

std::string_view to_string(Laterality l) {
    switch (l) {
        case Laterality::Left: return "left";
        case Laterality::Right: return "right";
        case Laterality::Both: return "both";
        case Laterality::Unknown: return "unknown";
    }
    return "unknown";
}

Laterality parse_laterality(std::string_view s) {
    if (s == "left") return Laterality::Left;
    if (s == "right") return Laterality::Right;
    if (s == "both") return Laterality::Both;
    if (s == "unknown") return Laterality::Unknown;
    throw Error(ErrorCode::Parse, fmt::format("unknown laterality '{}'", s));
}

LateralityCues LateralityCues::french() {
    LateralityCues c;
    c.left = {"gauche", "gauches"};
    c.right = {"droit", "droite", "droits", "droites"};
    c.both = {"bilateral", "bilaterale", "bilaterales", "bilateraux"};
    return c;
}

LateralityCues LateralityCues::parse(std::string_view text) {
    LateralityCues c;
    auto lines = io::split(text, '\n');
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto line = io::trim(lines[i]);
        if (line.empty() || line[0] == '#') continue;
        auto parts = io::split(line, ' ');
        if (parts.size() < 2)
            throw Error(ErrorCode::Parse, fmt::format("laterality cues line {}: expected '<side> <cue>'", i + 1));
        std::set<std::string, std::less<>>* target = parts[0] == "left"    ? &c.left
                                                     : parts[0] == "right" ? &c.right
                                                     : parts[0] == "both"  ? &c.both
                                                                           : nullptr;
        if (!target) throw Error(ErrorCode::Parse, fmt::format("laterality cues line {}: unknown side '{}'", i + 1, parts[0]));
        for (std::size_t k = 1; k < parts.size(); ++k)
            if (!parts[k].empty()) target->insert(fold_accents(parts[k]));
    }
    return c;
}

LateralityCues LateralityCues::load(const std::filesystem::path& p) { return parse(io::read_file(p)); }

Laterality detect_laterality(std::span<const std::string> tokens, const LateralityCues& cues) {
    bool left = false, right = false;
    for (const auto& t : tokens) {
        if (cues.both.contains(t)) return Laterality::Both;
        left |= cues.left.contains(t);
        right |= cues.right.contains(t);
    }
    if (left && right) return Laterality::Both;
    if (left) return Laterality::Left;
    if (right) return Laterality::Right;
    return Laterality::Unknown;
}

NormalizedDocument normalize(const ingest::RawDocument& doc, const NormalizeOptions& opts,
                             std::vector<std::string>* warnings) {
    std::vector<std::string> tokens;
    for (const auto& s : doc.sections) {
        auto t = tokenize(fold_accents(s.body));
        tokens.insert(tokens.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
    }
    auto dates = extract_dates(tokens, opts.dates);
    if (warnings)
        for (auto& w : dates.warnings) warnings->push_back(fmt::format("{}: {}", doc.doc_id, w));
    NormalizedDocument n;
    n.doc_id = doc.doc_id;
    n.patient_id = doc.patient_id;
    n.source_type = doc.source_type;
    n.authored_date = doc.authored_date;
    n.tokens = std::move(dates.tokens);
    n.date_mentions = std::move(dates.mentions);
    n.laterality = detect_laterality(n.tokens, opts.cues);
    return n;
}

Timeline build_timeline(std::span<const NormalizedDocument> docs) {
    Timeline t;
    for (const auto& d : docs)
        for (const auto& m : d.date_mentions) t.push_back({m.date, d.doc_id, m.token_index});
    std::sort(t.begin(), t.end());
    return t;
}

nlohmann::json to_json(const NormalizedDocument& d) {
    nlohmann::json dates = nlohmann::json::array();
    for (const auto& m : d.date_mentions) dates.push_back({m.token_index, m.date.iso()});
    return {{"doc_id", d.doc_id},
            {"patient_id", d.patient_id},
            {"source_type", to_string(d.source_type)},
            {"authored_date", d.authored_date ? nlohmann::json(d.authored_date->iso()) : nlohmann::json(nullptr)},
            {"laterality", to_string(d.laterality)},
            {"tokens", d.tokens},
            {"dates", dates}};
}

NormalizedDocument normalized_from_json(const nlohmann::json& j) {
    NormalizedDocument d;
    try {
        d.doc_id = j.at("doc_id").get<std::string>();
        d.patient_id = j.at("patient_id").get<std::string>();
        d.source_type = parse_source_type(j.at("source_type").get<std::string>());
        if (j.contains("authored_date") && !j["authored_date"].is_null())
            d.authored_date = Date::parse_iso(j["authored_date"].get<std::string>());
        d.laterality = parse_laterality(j.value("laterality", std::string("unknown")));
        d.tokens = j.at("tokens").get<std::vector<std::string>>();
        for (const auto& m : j.value("dates", nlohmann::json::array())) {
            auto date = Date::parse_iso(m.at(1).get<std::string>());
            if (!date) throw Error(ErrorCode::Parse, "bad date in normalized document");
            d.date_mentions.push_back({m.at(0).get<std::size_t>(), *date});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, fmt::format("malformed normalized document: {}", e.what()));
    }
    return d;
}

}  // namespace clinistruct::textnorm
