#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "clinistruct/textnorm.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

void write_text(const fs::path& p, const std::string& text);
fs::path source_dir();

clinistruct::textnorm::NormalizedDocument doc(std::string id, std::vector<std::string> tokens,
                                              std::string patient = "p1",
                                              clinistruct::SourceType source = clinistruct::SourceType::MeetingNote);

std::vector<std::string> words(const std::string& text);

}  // namespace testutil
