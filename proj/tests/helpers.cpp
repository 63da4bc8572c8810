#include "helpers.hpp"

#include <atomic>
#include <fstream>
#include <random>
#include <sstream>

namespace testutil {

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("clinistruct-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << text;
}

fs::path source_dir() { return CLINISTRUCT_SOURCE_DIR; }

clinistruct::textnorm::NormalizedDocument doc(std::string id, std::vector<std::string> tokens, std::string patient,
                                              clinistruct::SourceType source) {
    clinistruct::textnorm::NormalizedDocument d;
    d.doc_id = std::move(id);
    d.patient_id = std::move(patient);
    d.source_type = source;
    d.tokens = std::move(tokens);
    return d;
}

std::vector<std::string> words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

}  // namespace testutil
