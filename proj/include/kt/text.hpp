#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>
#include <system_error>

namespace kt {

// Shortest decimal form that parses back to the same double ("0.0001",
// "0.2"); plain notation for magnitudes in [1e-6, 1e6). Ledger keys rely on
// this being stable.
inline std::string format_real(double v) {
    char buf[400];
    const double a = std::fabs(v);
    const bool plain = a == 0.0 || (a >= 1e-6 && a < 1e6);
    auto [end, ec] = plain ? std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed)
                           : std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return std::to_string(v);
    return std::string(buf, end);
}

// Fixed-point with `digits` decimals.
inline std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace kt
