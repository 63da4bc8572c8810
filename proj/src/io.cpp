#include "clinistruct/io.hpp"

#include <sstream>

#include <fmt/format.h>

#include "clinistruct/common.hpp"

namespace clinistruct::io {

AtomicFile::AtomicFile(fs::path target) : target_(std::move(target)) {
    if (target_.has_parent_path()) fs::create_directories(target_.parent_path());
    tmp_ = target_;
    tmp_ += ".partial";
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorCode::Io, fmt::format("cannot open '{}' for writing", tmp_.string()));
}

AtomicFile::~AtomicFile() {
    if (!committed_) {
        out_.close();
        std::error_code ec;
        fs::remove(tmp_, ec);
    }
}

void AtomicFile::commit() {
    out_.flush();
    if (!out_) throw Error(ErrorCode::Io, fmt::format("write failed for '{}'", tmp_.string()));
    out_.close();
    fs::rename(tmp_, target_);
    committed_ = true;
}

std::string Provenance::comment_line() const {
    return fmt::format("# clinistruct {} config={}", version, config_hash);
}

nlohmann::json Provenance::json_header() const {
    return {{"_header", {{"tool", "clinistruct"}, {"version", version}, {"config", config_hash}}}};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot read '{}'", p.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot read '{}'", p.string()));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

bool is_header_record(const nlohmann::json& j) { return j.is_object() && j.contains("_header"); }

std::vector<nlohmann::json> read_jsonl(const fs::path& p) {
    std::vector<nlohmann::json> out;
    auto lines = read_lines(p);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(lines[i]);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::Parse, fmt::format("{}:{}: malformed json: {}", p.string(), i + 1, e.what()));
        }
        if (is_header_record(j)) continue;
        out.push_back(std::move(j));
    }
    return out;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string csv_join(const Row& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(row[i]);
    }
    return out;
}

Row csv_split(std::string_view line) {
    Row row;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    row.push_back(std::move(cur));
    return row;
}

int Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

Table read_delimited(const fs::path& p, bool csv) {
    Table t;
    bool have_header = false;
    auto lines = read_lines(p);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& line = lines[i];
        if (line.empty() || line[0] == '#') continue;
        Row row = csv ? csv_split(line) : split(line, '\t');
        if (!have_header) {
            t.header = std::move(row);
            have_header = true;
            continue;
        }
        if (row.size() != t.header.size())
            throw Error(ErrorCode::Parse, fmt::format("{}:{}: expected {} fields, got {}", p.string(), i + 1,
                                                      t.header.size(), row.size()));
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace

Table read_csv(const fs::path& p) { return read_delimited(p, true); }
Table read_tsv(const fs::path& p) { return read_delimited(p, false); }

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace clinistruct::io
