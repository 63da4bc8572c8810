#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace clinistruct::io {

namespace fs = std::filesystem;

// Writes into a sibling temporary file; commit() renames it over the target.
// An uncommitted writer removes its temporary on destruction, so a failed
// stage never leaves a partial artifact behind.
class AtomicFile {
public:
    explicit AtomicFile(fs::path target);
    ~AtomicFile();
    AtomicFile(const AtomicFile&) = delete;
    AtomicFile& operator=(const AtomicFile&) = delete;

    std::ostream& stream() { return out_; }
    void commit();

private:
    fs::path target_;
    fs::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

// Provenance stamped on every artifact the pipeline writes.
struct Provenance {
    std::string version;
    std::string config_hash;

    std::string comment_line() const;  // "# clinistruct <version> config=<hash>"
    nlohmann::json json_header() const;
};

std::string read_file(const fs::path& p);
std::vector<std::string> read_lines(const fs::path& p);

bool is_header_record(const nlohmann::json& j);

// Reads a jsonl file, skipping blank lines and provenance headers. Parse
// errors name the 1-based line number.
std::vector<nlohmann::json> read_jsonl(const fs::path& p);

using Row = std::vector<std::string>;

std::string csv_escape(std::string_view field);
std::string csv_join(const Row& row);
Row csv_split(std::string_view line);

// Delimited table with a header row; lines starting with '#' are skipped.
struct Table {
    Row header;
    std::vector<Row> rows;

    int column(std::string_view name) const;  // -1 when absent
};

Table read_csv(const fs::path& p);
Table read_tsv(const fs::path& p);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace clinistruct::io
