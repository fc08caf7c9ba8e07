#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace qwm::csv {

/// Fixed 12-significant-digit rendering used by every CSV writer.
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) v = 0.0; // no "-0"
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) os << ',';
        os << cells[i];
    }
    os << '\n';
}

/// Splits one CSV line on commas. No quoting support; none of our files need it.
inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

/// Two-column (coordinate, value) curve.
inline void write_curve(std::ostream& os, std::string_view x_name, std::string_view y_name,
                        const std::vector<double>& x, const std::vector<double>& y) {
    os << x_name << ',' << y_name << '\n';
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) os << num(x[i]) << ',' << num(y[i]) << '\n';
}

} // namespace qwm::csv
