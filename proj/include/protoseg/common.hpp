#pragma once

#include <cctype>
#include <cstddef>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace protoseg {

// Runtime failure in pipeline code (I/O, contract violations, bad input).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

inline void log_warn(std::string_view msg) {
    std::cerr << "[warn] " << msg << "\n";
}

inline void log_info(std::string_view msg) {
    std::cerr << "[info] " << msg << "\n";
}

// Lowercased filesystem-safe token: alphanumerics kept, runs of anything else
// collapsed to single dashes, trimmed, capped at `max_len`.
inline std::string slugify(std::string_view text, std::size_t max_len = 24) {
    std::string out;
    for (char c : text) {
        if (out.size() >= max_len) break;
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!out.empty() && out.back() != '-') {
            out += '-';
        }
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

}  // namespace protoseg
