#include "clinistruct/common.hpp"

#include <charconv>
#include <chrono>

#include <fmt/format.h>

namespace clinistruct {

std::string_view to_string(SourceType s) {
    switch (s) {
        case SourceType::MeetingNote: return "meeting_note";
        case SourceType::HospitalizationLetter: return "hospitalization_letter";
        case SourceType::DischargeLetter: return "discharge_letter";
    }
    return "meeting_note";
}

SourceType parse_source_type(std::string_view s) {
    if (s == "meeting_note") return SourceType::MeetingNote;
    if (s == "hospitalization_letter") return SourceType::HospitalizationLetter;
    if (s == "discharge_letter") return SourceType::DischargeLetter;
    throw Error(ErrorCode::Parse, fmt::format("unknown source_type '{}'", s));
}

bool Date::valid() const {
    using namespace std::chrono;
    return year_month_day{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                          std::chrono::day{static_cast<unsigned>(day)}}
               .ok() &&
           month >= 1 && day >= 1;
}

std::string Date::iso() const { return fmt::format("{:04d}-{:02d}-{:02d}", year, month, day); }

std::optional<Date> Date::parse_iso(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    Date d;
    auto field = [&](std::size_t pos, std::size_t len, int& out) {
        auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
        return ec == std::errc{} && p == s.data() + pos + len;
    };
    if (!field(0, 4, d.year) || !field(5, 2, d.month) || !field(8, 2, d.day)) return std::nullopt;
    if (!d.valid()) return std::nullopt;
    return d;
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

}  // namespace clinistruct
