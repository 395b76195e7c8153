#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ourdb/errors.hpp"

namespace ourdb::plots {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

namespace plot_detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

}  // namespace plot_detail

/// Self-contained SVG line chart. Axis ranges cover the data min/max with a
/// small pad; needs at least two points.
inline std::string render_line_chart(const std::string& title, const std::string& x_label,
                                     const std::string& y_label, const Series& s) {
    if (s.x.size() < 2 || s.x.size() != s.y.size())
        throw DataError("plot '" + title + "': need at least 2 data points");

    double xmin = *std::min_element(s.x.begin(), s.x.end());
    double xmax = *std::max_element(s.x.begin(), s.x.end());
    double ymin = *std::min_element(s.y.begin(), s.y.end());
    double ymax = *std::max_element(s.y.begin(), s.y.end());
    if (xmax == xmin) xmax = xmin + 1.0;
    const double ypad = (ymax - ymin) > 0 ? 0.05 * (ymax - ymin) : std::abs(ymin) * 0.1 + 0.01;
    ymin -= ypad;
    ymax += ypad;

    const double w = 640, h = 400;
    const double ml = 70, mr = 20, mt = 40, mb = 50;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    svg << "  <rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
        << "\" fill=\"white\"/>\n";
    svg << "  <text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << title << "</text>\n";
    // axes
    svg << "  <line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
        << h - mb << "\" stroke=\"black\"/>\n";
    svg << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    // tick labels at the range ends
    svg << "  <text x=\"" << ml << "\" y=\"" << h - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << plot_detail::fmt(xmin) << "</text>\n";
    svg << "  <text x=\"" << w - mr << "\" y=\"" << h - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << plot_detail::fmt(xmax) << "</text>\n";
    svg << "  <text x=\"" << ml - 6 << "\" y=\"" << h - mb + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << plot_detail::fmt(ymin) << "</text>\n";
    svg << "  <text x=\"" << ml - 6 << "\" y=\"" << mt + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << plot_detail::fmt(ymax) << "</text>\n";
    svg << "  <text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    svg << "  <text x=\"16\" y=\"" << (mt + h - mb) / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
        << (mt + h - mb) / 2 << ")\">" << y_label << "</text>\n";
    // data
    svg << "  <polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i)
        svg << (i ? " " : "") << plot_detail::fmt(px(s.x[i])) << "," << plot_detail::fmt(py(s.y[i]));
    svg << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
        svg << "  <circle cx=\"" << plot_detail::fmt(px(s.x[i])) << "\" cy=\""
            << plot_detail::fmt(py(s.y[i])) << "\" r=\"3\" fill=\"#1f6fb2\"/>\n";
    svg << "</svg>\n";
    return svg.str();
}

inline void write_chart(const std::string& path, const std::string& title,
                        const std::string& x_label, const std::string& y_label, const Series& s) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << render_line_chart(title, x_label, y_label, s);
}

}  // namespace ourdb::plots
