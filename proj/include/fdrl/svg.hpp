#pragma once

// Minimal SVG rendering for 2D particle scatters and line series.

#include "fdrl/core.hpp"

#include <array>
#include <cstdio>
#include <string>
#include <vector>

namespace fdrl::svg {

struct Viewport {
    double xmin = -3, xmax = 3, ymin = -3, ymax = 3;
};

struct PointSet {
    std::string label;
    Matrix points;  // first two columns are plotted
    std::string color;
};

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color;
};

inline const std::array<const char*, 6> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

namespace detail {

constexpr double kSize = 480, kMargin = 40;

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string header(const std::string& title) {
    const std::string s = num(kSize + 2 * kMargin);
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + s + "\" height=\"" + s + "\" viewBox=\"0 0 " + s +
           " " + s + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"" + num(kMargin) +
           "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" + title + "</text>\n";
}

inline std::string axes(const Viewport& v) {
    const double lo = kMargin, hi = kMargin + kSize;
    std::string out = "<rect x=\"" + num(lo) + "\" y=\"" + num(lo) + "\" width=\"" + num(kSize) + "\" height=\"" +
                      num(kSize) + "\" fill=\"none\" stroke=\"black\"/>\n";
    auto label = [&](double x, double y, const std::string& text, const char* anchor) {
        out += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"11\" "
               "text-anchor=\"" + anchor + "\">" + text + "</text>\n";
    };
    label(lo, hi + 15, num(v.xmin), "start");
    label(hi, hi + 15, num(v.xmax), "end");
    label(lo - 4, hi, num(v.ymin), "end");
    label(lo - 4, lo + 10, num(v.ymax), "end");
    return out;
}

inline double sx(const Viewport& v, double x) { return kMargin + (x - v.xmin) / (v.xmax - v.xmin) * kSize; }
inline double sy(const Viewport& v, double y) { return kMargin + (v.ymax - y) / (v.ymax - v.ymin) * kSize; }

inline std::string legend(std::size_t i, const std::string& label, const std::string& color) {
    const double y = kMargin + 14 + 14 * static_cast<double>(i);
    return "<rect x=\"" + num(kMargin + kSize - 120) + "\" y=\"" + num(y - 8) + "\" width=\"8\" height=\"8\" fill=\"" +
           color + "\"/>\n<text x=\"" + num(kMargin + kSize - 108) + "\" y=\"" + num(y) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + label + "</text>\n";
}

}  // namespace detail

/// Points outside the viewport are dropped.
inline std::string scatter(const std::string& title, const std::vector<PointSet>& sets, const Viewport& v = {}) {
    using namespace detail;
    std::string out = header(title) + axes(v);
    for (std::size_t s = 0; s < sets.size(); ++s) {
        const auto& set = sets[s];
        require(set.points.cols() >= 2, "svg::scatter: need at least two columns");
        const std::string color = set.color.empty() ? kPalette[s % kPalette.size()] : set.color;
        out += "<g fill=\"" + color + "\" fill-opacity=\"0.5\">\n";
        for (Index i = 0; i < set.points.rows(); ++i) {
            const double x = set.points(i, 0), y = set.points(i, 1);
            if (!(x >= v.xmin && x <= v.xmax && y >= v.ymin && y <= v.ymax)) continue;
            out += "<circle cx=\"" + num(sx(v, x)) + "\" cy=\"" + num(sy(v, y)) + "\" r=\"1.5\"/>\n";
        }
        out += "</g>\n" + legend(s, set.label, color);
    }
    return out + "</svg>\n";
}

/// Line plot; the viewport is fitted to the data with a 5% margin.
inline std::string lines(const std::string& title, const std::vector<Series>& series) {
    using namespace detail;
    Viewport v{1e300, -1e300, 1e300, -1e300};
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            v.xmin = std::min(v.xmin, s.x[i]);
            v.xmax = std::max(v.xmax, s.x[i]);
            v.ymin = std::min(v.ymin, s.y[i]);
            v.ymax = std::max(v.ymax, s.y[i]);
        }
    if (v.xmin > v.xmax) v = Viewport{};
    const double px = std::max(1e-9, 0.05 * (v.xmax - v.xmin)), py = std::max(1e-9, 0.05 * (v.ymax - v.ymin));
    v = Viewport{v.xmin - px, v.xmax + px, v.ymin - py, v.ymax + py};
    std::string out = header(title) + axes(v);
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& ser = series[s];
        const std::string color = ser.color.empty() ? kPalette[s % kPalette.size()] : ser.color;
        out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < ser.x.size(); ++i)
            out += num(sx(v, ser.x[i])) + "," + num(sy(v, ser.y[i])) + " ";
        out += "\"/>\n" + legend(s, ser.label, color);
    }
    return out + "</svg>\n";
}

}  // namespace fdrl::svg
