#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tcs/common.hpp"

namespace tcs {

// Grayscale PGM (plain P2) of a k x k map, min/max normalized.
inline void write_pgm(const std::string& path, const std::vector<double>& data, int k) {
    if (static_cast<std::size_t>(k) * k != data.size()) {
        throw ShapeMismatch("write_pgm: data is not k*k");
    }
    double mn = data[0], mx = data[0];
    for (double v : data) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    const double span = (mx - mn) > 1e-12 ? (mx - mn) : 1.0;
    std::ofstream os(path);
    if (!os) throw IoError("write_pgm: cannot open " + path);
    os << "P2\n" << k << ' ' << k << "\n255\n";
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const int g = static_cast<int>(std::lround((data[i * k + j] - mn) / span * 255.0));
            os << g << (j + 1 == k ? '\n' : ' ');
        }
    }
    if (!os) throw IoError("write_pgm: write failed for " + path);
}

struct CurveSeries {
    std::string name;
    std::vector<double> values;  // NaN entries are skipped
};

// Minimal SVG line chart; one polyline per series, shared y-scaling.
inline void write_svg_curves(const std::string& path, const std::string& title,
                             const std::vector<CurveSeries>& series) {
    std::size_t n = 0;
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& s : series) {
        n = std::max(n, s.values.size());
        for (double v : s.values) {
            if (!std::isfinite(v)) continue;
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
    }
    if (n == 0 || !std::isfinite(mn)) throw EmptyInput("write_svg_curves: nothing to plot");
    if (mx - mn < 1e-12) {
        mx += 1.0;
        mn -= 1.0;
    }

    const int width = 720, height = 420, margin = 50;
    const double px = static_cast<double>(width - 2 * margin);
    const double py = static_cast<double>(height - 2 * margin);
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
       << title << "</text>\n";
    os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
       << width - margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
       << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << margin - 6 << "\" y=\"" << margin + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << mx << "</text>\n";
    os << "<text x=\"" << margin - 6 << "\" y=\"" << height - margin + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << mn << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        std::ostringstream pts;
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            if (!std::isfinite(s.values[i])) continue;
            const double x = margin + (n > 1 ? px * i / (n - 1) : px / 2);
            const double y = height - margin - py * (s.values[i] - mn) / (mx - mn);
            pts << x << ',' << y << ' ';
        }
        os << "<polyline fill=\"none\" stroke=\"" << colors[si % 6]
           << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
        os << "<text x=\"" << width - margin + 4 << "\" y=\"" << margin + 16 * si + 12
           << "\" font-size=\"11\" fill=\"" << colors[si % 6] << "\">" << s.name
           << "</text>\n";
    }
    os << "</svg>\n";

    std::ofstream file(path);
    if (!file) throw IoError("write_svg_curves: cannot open " + path);
    file << os.str();
}

// Parses a simple CSV into named numeric columns; non-numeric cells become
// NaN so report columns with "-" plot as gaps.
inline std::vector<CurveSeries> csv_numeric_columns(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("csv_numeric_columns: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw SchemaError("csv_numeric_columns: empty file " + path);
    std::vector<CurveSeries> cols;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back({cell, {}});
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t i = 0;
        while (std::getline(ss, cell, ',') && i < cols.size()) {
            double v = std::numeric_limits<double>::quiet_NaN();
            try {
                std::size_t pos = 0;
                const double parsed = std::stod(cell, &pos);
                if (pos == cell.size()) v = parsed;
            } catch (...) {
            }
            cols[i].values.push_back(v);
            ++i;
        }
    }
    return cols;
}

}  // namespace tcs
