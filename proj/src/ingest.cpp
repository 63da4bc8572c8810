#include "clinistruct/ingest.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "clinistruct/io.hpp"

namespace clinistruct::ingest {

namespace fs = std::filesystem;

CorpusFormat parse_corpus_format(std::string_view s) {
    if (s == "jsonl") return CorpusFormat::Jsonl;
    if (s == "plain_dir") return CorpusFormat::PlainDir;
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown corpus format '{}'", s));
}

namespace {

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw Error(ErrorCode::Parse, fmt::format("expected a boolean, got '{}'", v));
}

std::string collapse_spaces(std::string_view line) {
    std::string out;
    bool pending_space = false;
    for (char c : line) {
        if (c == ' ' || c == '\t' || c == '\f' || c == '\v' || c == '\r') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

// True when the line has letters and none of them is lowercase. Two-byte
// UTF-8 sequences starting with 0xC3 cover the Latin-1 letters; 0xC3 0x9F..0xBF
// are the lowercase ones.
bool is_uppercase_line(std::string_view line) {
    bool letters = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        auto c = static_cast<unsigned char>(line[i]);
        if (c >= 'a' && c <= 'z') return false;
        if (c >= 'A' && c <= 'Z') letters = true;
        if (c == 0xC3 && i + 1 < line.size()) {
            auto n = static_cast<unsigned char>(line[i + 1]);
            if (n >= 0x9F) return false;
            letters = true;
            ++i;
        }
    }
    return letters;
}

bool is_heading(const std::string& line, const HeadingRules& rules) {
    if (line.empty()) return false;
    for (const auto& re : rules.patterns)
        if (std::regex_search(line, re)) return true;
    auto ntok = static_cast<std::size_t>(std::count(line.begin(), line.end(), ' ')) + 1;
    if (ntok > rules.max_tokens) return false;
    if (rules.colon_suffix && line.back() == ':') return true;
    return rules.all_uppercase && is_uppercase_line(line);
}

std::string heading_text(std::string line) {
    while (!line.empty() && (line.back() == ':' || line.back() == ' ')) line.pop_back();
    return line;
}

}  // namespace

HeadingRules HeadingRules::parse(std::string_view text) {
    HeadingRules r;
    auto lines = io::split(text, '\n');
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto line = io::trim(lines[i]);
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::Parse, fmt::format("heading rules line {}: expected key = value", i + 1));
        auto key = io::trim(line.substr(0, eq));
        auto value = io::trim(line.substr(eq + 1));
        if (key == "max_tokens") {
            r.max_tokens = static_cast<std::size_t>(std::stoul(value));
        } else if (key == "colon_suffix") {
            r.colon_suffix = parse_bool(value);
        } else if (key == "uppercase") {
            r.all_uppercase = parse_bool(value);
        } else if (key == "pattern") {
            r.patterns.emplace_back(value, std::regex::ECMAScript);
        } else {
            throw Error(ErrorCode::Parse, fmt::format("heading rules line {}: unknown key '{}'", i + 1, key));
        }
    }
    return r;
}

HeadingRules HeadingRules::load(const fs::path& p) { return parse(io::read_file(p)); }

std::vector<Section> split_sections(std::string_view text, const HeadingRules& rules) {
    std::vector<Section> out;
    std::string heading;
    std::vector<std::string> body;

    auto flush = [&] {
        while (!body.empty() && body.back().empty()) body.pop_back();
        std::size_t first = 0;
        while (first < body.size() && body[first].empty()) ++first;
        std::string joined;
        for (std::size_t i = first; i < body.size(); ++i) {
            if (i > first) joined += '\n';
            joined += body[i];
        }
        if (!joined.empty()) out.push_back({heading, std::move(joined)});
        body.clear();
    };

    for (const auto& raw : io::split(text, '\n')) {
        auto line = collapse_spaces(raw);
        if (is_heading(line, rules)) {
            flush();
            heading = heading_text(line);
            continue;
        }
        if (line.empty() && !body.empty() && body.back().empty()) continue;
        body.push_back(std::move(line));
    }
    flush();
    return out;
}

namespace {

RawDocument from_json(const nlohmann::json& j, std::size_t line, const HeadingRules& rules) {
    auto fail = [&](const std::string& msg) { return Error(ErrorCode::Parse, fmt::format("line {}: {}", line, msg)); };
    if (!j.is_object()) throw fail("expected an object");
    for (const char* key : {"doc_id", "patient_id", "source_type", "text"})
        if (!j.contains(key) || !j[key].is_string()) throw fail(fmt::format("missing string field '{}'", key));
    RawDocument d;
    d.doc_id = j["doc_id"].get<std::string>();
    d.patient_id = j["patient_id"].get<std::string>();
    if (d.doc_id.empty()) throw fail("empty doc_id");
    try {
        d.source_type = parse_source_type(j["source_type"].get<std::string>());
    } catch (const Error& e) {
        throw fail(e.what());
    }
    if (j.contains("authored_date") && !j["authored_date"].is_null()) {
        if (!j["authored_date"].is_string()) throw fail("authored_date must be a string or null");
        d.authored_date = Date::parse_iso(j["authored_date"].get<std::string>());
        if (!d.authored_date) throw fail("authored_date is not an ISO-8601 date");
    }
    d.sections = split_sections(j["text"].get<std::string>(), rules);
    if (d.sections.empty()) throw fail(fmt::format("document '{}' has no text", d.doc_id));
    return d;
}

RawDocument from_plain_file(const fs::path& p, const HeadingRules& rules) {
    RawDocument d;
    d.doc_id = p.stem().string();
    d.patient_id = d.doc_id;
    auto lines = io::read_lines(p);
    std::size_t i = 0;
    for (; i < lines.size() && lines[i].starts_with('#'); ++i) {
        auto colon = lines[i].find(':');
        if (colon == std::string::npos) break;
        auto key = io::trim(std::string_view(lines[i]).substr(1, colon - 1));
        auto value = io::trim(std::string_view(lines[i]).substr(colon + 1));
        if (key == "patient_id") {
            d.patient_id = value;
        } else if (key == "source_type") {
            d.source_type = parse_source_type(value);
        } else if (key == "authored_date") {
            d.authored_date = Date::parse_iso(value);
            if (!d.authored_date)
                throw Error(ErrorCode::Parse, fmt::format("{}: bad authored_date '{}'", p.string(), value));
        } else {
            break;
        }
    }
    std::string text;
    for (; i < lines.size(); ++i) {
        text += lines[i];
        text += '\n';
    }
    d.sections = split_sections(text, rules);
    if (d.sections.empty()) throw Error(ErrorCode::Parse, fmt::format("{}: document has no text", p.string()));
    return d;
}

}  // namespace

std::vector<RawDocument> load_corpus(const fs::path& path, CorpusFormat format, const HeadingRules& rules) {
    if (!fs::exists(path)) throw Error(ErrorCode::Io, fmt::format("corpus path '{}' does not exist", path.string()));
    std::vector<RawDocument> docs;
    std::map<std::string, std::size_t> seen;  // doc_id -> line number / file index

    auto check_unique = [&](const RawDocument& d, std::size_t where, const char* what) {
        auto [it, inserted] = seen.emplace(d.doc_id, where);
        if (!inserted)
            throw Error(ErrorCode::Conflict, fmt::format("duplicate doc_id '{}' at {} {} and {} {}", d.doc_id, what,
                                                         it->second, what, where));
    };

    if (format == CorpusFormat::Jsonl) {
        auto lines = io::read_lines(path);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (io::trim(lines[i]).empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(lines[i]);
            } catch (const nlohmann::json::exception&) {
                throw Error(ErrorCode::Parse, fmt::format("line {}: malformed json", i + 1));
            }
            if (io::is_header_record(j)) continue;
            auto d = from_json(j, i + 1, rules);
            check_unique(d, i + 1, "line");
            docs.push_back(std::move(d));
        }
    } else {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (std::size_t i = 0; i < files.size(); ++i) {
            auto d = from_plain_file(files[i], rules);
            check_unique(d, i + 1, "file");
            docs.push_back(std::move(d));
        }
    }
    return docs;
}

}  // namespace clinistruct::ingest
