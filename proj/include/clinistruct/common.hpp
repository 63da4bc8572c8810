#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace clinistruct {

inline constexpr std::string_view kVersion = "0.1.0";

enum class ErrorCode {
    InvalidArgument,
    Io,
    Parse,
    NotFound,
    Conflict,
    State,
};

// Every failure inside the core is raised as an Error; the C API maps the
// code onto a status value.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

enum class SourceType { MeetingNote, HospitalizationLetter, DischargeLetter };

std::string_view to_string(SourceType s);
SourceType parse_source_type(std::string_view s);

struct Date {
    int year = 0;
    int month = 0;
    int day = 0;

    bool valid() const;
    std::string iso() const;
    static std::optional<Date> parse_iso(std::string_view s);

    auto operator<=>(const Date&) const = default;
};

// FNV-1a, used for config hashes in artifact headers.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

}  // namespace clinistruct
