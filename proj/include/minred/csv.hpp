#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace minred {

inline constexpr const char* kArtifactVersion = "0.3.0";

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// `# key: value` lines. Every CSV the tools emit starts with one.
inline void write_metadata(std::ostream& os, const Metadata& meta) {
    os << "# artifact_version: " << kArtifactVersion << '\n';
    for (const auto& [k, v] : meta) os << "# " << k << ": " << v << '\n';
}

/// Shortest round-trip-safe rendering, `nan` for missing values.
inline std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) os << ',';
        os << cells[i];
    }
    os << '\n';
}

}  // namespace minred
