#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace longsynth {

// Civil-time conversions on the proleptic Gregorian calendar, no time zone.
// Timestamps throughout the library are integer seconds since 1970-01-01
// 00:00:00 and render as "YYYY-MM-DD HH:MM:SS".

inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
    int year;
    int month;
    int day;
};

inline CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

inline bool is_leap_year(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline int days_in_month(int y, int m) {
    static constexpr int lengths[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap_year(y)) return 29;
    return lengths[m - 1];
}

// Renderable range: years 0001..9999.
inline constexpr std::int64_t kMinTimestamp = -62135596800LL;   // 0001-01-01 00:00:00
inline constexpr std::int64_t kMaxTimestamp = 253402300799LL;   // 9999-12-31 23:59:59

inline bool timestamp_in_range(std::int64_t ts) {
    return ts >= kMinTimestamp && ts <= kMaxTimestamp;
}

inline std::string format_timestamp(std::int64_t ts) {
    std::int64_t days = ts / 86400;
    std::int64_t rem = ts % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    const CivilDate cd = civil_from_days(days);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:%02d", cd.year, cd.month, cd.day,
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                  static_cast<int>(rem % 60));
    return std::string(buf);
}

// Strict parse of "YYYY-MM-DD HH:MM:SS" with calendar validation.
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
    if (s.size() != 19) return std::nullopt;
    auto digit = [&](std::size_t i) -> int {
        const char c = s[i];
        return (c >= '0' && c <= '9') ? c - '0' : -1;
    };
    for (std::size_t i : {4u, 7u}) {
        if (s[i] != '-') return std::nullopt;
    }
    if (s[10] != ' ' || s[13] != ':' || s[16] != ':') return std::nullopt;
    for (std::size_t i = 0; i < 19; ++i) {
        if (i == 4 || i == 7 || i == 10 || i == 13 || i == 16) continue;
        if (digit(i) < 0) return std::nullopt;
    }
    const int year = digit(0) * 1000 + digit(1) * 100 + digit(2) * 10 + digit(3);
    const int month = digit(5) * 10 + digit(6);
    const int day = digit(8) * 10 + digit(9);
    const int hour = digit(11) * 10 + digit(12);
    const int minute = digit(14) * 10 + digit(15);
    const int second = digit(17) * 10 + digit(18);
    if (year < 1 || month < 1 || month > 12) return std::nullopt;
    if (day < 1 || day > days_in_month(year, month)) return std::nullopt;
    if (hour > 23 || minute > 59 || second > 59) return std::nullopt;
    return days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 + second;
}

inline int hour_of_day(std::int64_t ts) {
    std::int64_t rem = ts % 86400;
    if (rem < 0) rem += 86400;
    return static_cast<int>(rem / 3600);
}

}  // namespace longsynth
