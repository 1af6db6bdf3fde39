#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace adnsim::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline std::string color(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                    "#bcbd22", "#17becf", "#393b79", "#ad494a"};
    return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

inline std::string fmt(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

struct Mapper {
    double lo, hi, px0, px1;
    [[nodiscard]] double operator()(double v) const {
        if (hi == lo) return (px0 + px1) / 2;
        return px0 + (v - lo) / (hi - lo) * (px1 - px0);
    }
};

inline void axes(std::ostringstream& out, const Mapper& mx, const Mapper& my,
                 const std::string& xlabel, const std::string& ylabel) {
    out << "<line x1='" << mx.px0 << "' y1='" << my.px1 << "' x2='" << mx.px1 << "' y2='"
        << my.px1 << "' stroke='black'/>\n";
    out << "<line x1='" << mx.px0 << "' y1='" << my.px0 << "' x2='" << mx.px0 << "' y2='"
        << my.px1 << "' stroke='black'/>\n";
    for (int k = 0; k <= 5; ++k) {
        double fx = mx.lo + (mx.hi - mx.lo) * k / 5.0;
        double fy = my.lo + (my.hi - my.lo) * k / 5.0;
        double px = mx(fx), py = my(fy);
        out << "<text x='" << px << "' y='" << my.px1 + 16
            << "' font-size='10' text-anchor='middle'>" << fmt(fx) << "</text>\n";
        out << "<text x='" << mx.px0 - 6 << "' y='" << py + 3
            << "' font-size='10' text-anchor='end'>" << fmt(fy) << "</text>\n";
        out << "<line x1='" << px << "' y1='" << my.px1 << "' x2='" << px << "' y2='"
            << my.px1 + 4 << "' stroke='black'/>\n";
        out << "<line x1='" << mx.px0 - 4 << "' y1='" << py << "' x2='" << mx.px0
            << "' y2='" << py << "' stroke='black'/>\n";
    }
    out << "<text x='" << (mx.px0 + mx.px1) / 2 << "' y='" << my.px1 + 32
        << "' font-size='11' text-anchor='middle'>" << xlabel << "</text>\n";
    out << "<text x='14' y='" << (my.px0 + my.px1) / 2
        << "' font-size='11' text-anchor='middle' transform='rotate(-90 14 "
        << (my.px0 + my.px1) / 2 << ")'>" << ylabel << "</text>\n";
}

}  // namespace detail

/// Multi-series line chart (voltage traces and the like).
inline std::string line_chart(const std::vector<Series>& series, const std::string& xlabel,
                              const std::string& ylabel, int width = 860, int height = 420) {
    double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xlo = std::min(xlo, s.x[i]);
            xhi = std::max(xhi, s.x[i]);
            ylo = std::min(ylo, s.y[i]);
            yhi = std::max(yhi, s.y[i]);
        }
    if (xlo > xhi) {
        xlo = 0;
        xhi = 1;
        ylo = 0;
        yhi = 1;
    }
    double pad = (yhi - ylo) * 0.05 + 1e-12;
    detail::Mapper mx{xlo, xhi, 52, width - 140.0};
    detail::Mapper my{ylo - pad, yhi + pad, height - 44.0, 12};

    std::ostringstream out;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
        << height << "' viewBox='0 0 " << width << ' ' << height << "'>\n";
    detail::axes(out, mx, my, xlabel, ylabel);
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        out << "<polyline fill='none' stroke='" << detail::color(si)
            << "' stroke-width='1.2' points='";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            out << mx(s.x[i]) << ',' << my(s.y[i]) << ' ';
        out << "'/>\n";
        double ly = 18.0 + 14.0 * static_cast<double>(si);
        out << "<line x1='" << width - 128 << "' y1='" << ly << "' x2='" << width - 112
            << "' y2='" << ly << "' stroke='" << detail::color(si) << "' stroke-width='2'/>\n";
        out << "<text x='" << width - 108 << "' y='" << ly + 3 << "' font-size='10'>"
            << s.label << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

/// Bar chart with optional symmetric error bars.
inline std::string bar_chart(const std::vector<std::string>& labels,
                             const std::vector<double>& values,
                             const std::vector<double>& half_widths,
                             const std::string& ylabel, int width = 720, int height = 380) {
    double ymax = 1e-12;
    for (double v : values) ymax = std::max(ymax, v);
    for (std::size_t i = 0; i < half_widths.size() && i < values.size(); ++i)
        ymax = std::max(ymax, values[i] + half_widths[i]);
    detail::Mapper my{0.0, ymax * 1.05, height - 44.0, 12};

    const double x0 = 52, x1 = width - 20.0;
    const double n = static_cast<double>(values.size());
    const double slot = (x1 - x0) / std::max(1.0, n);
    const double bw = slot * 0.6;

    std::ostringstream out;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
        << height << "' viewBox='0 0 " << width << ' ' << height << "'>\n";
    out << "<line x1='" << x0 << "' y1='" << my.px0 << "' x2='" << x1 << "' y2='" << my.px0
        << "' stroke='black'/>\n";
    out << "<line x1='" << x0 << "' y1='" << my.px1 << "' x2='" << x0 << "' y2='" << my.px0
        << "' stroke='black'/>\n";
    for (int k = 0; k <= 5; ++k) {
        double fy = my.lo + (my.hi - my.lo) * k / 5.0;
        out << "<text x='" << x0 - 6 << "' y='" << my(fy) + 3
            << "' font-size='10' text-anchor='end'>" << detail::fmt(fy) << "</text>\n";
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        double cx = x0 + slot * (static_cast<double>(i) + 0.5);
        double top = my(values[i]);
        out << "<rect x='" << cx - bw / 2 << "' y='" << top << "' width='" << bw
            << "' height='" << my.px0 - top << "' fill='" << detail::color(i % 2 ? 1 : 0)
            << "'/>\n";
        if (i < half_widths.size() && half_widths[i] > 0) {
            double e0 = my(values[i] - half_widths[i]);
            double e1 = my(values[i] + half_widths[i]);
            out << "<line x1='" << cx << "' y1='" << e0 << "' x2='" << cx << "' y2='" << e1
                << "' stroke='black'/>\n";
        }
        out << "<text x='" << cx << "' y='" << my.px0 + 14
            << "' font-size='9' text-anchor='middle'>" << labels[i] << "</text>\n";
    }
    out << "<text x='14' y='" << height / 2
        << "' font-size='11' text-anchor='middle' transform='rotate(-90 14 " << height / 2
        << ")'>" << ylabel << "</text>\n";
    out << "</svg>\n";
    return out.str();
}

struct HeatCell {
    double x, y;
    bool has_value;
    double value;  // in [0, 1]
};

/// Heatmap on a regular lattice; monotone grayscale from black (0) to
/// white (1); cells without a value drawn in pale blue.
inline std::string heatmap(const std::vector<HeatCell>& cells, double cell_w, double cell_h,
                           const std::string& xlabel, const std::string& ylabel,
                           int width = 720, int height = 560) {
    double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
    for (const auto& c : cells) {
        xlo = std::min(xlo, c.x);
        xhi = std::max(xhi, c.x);
        ylo = std::min(ylo, c.y);
        yhi = std::max(yhi, c.y);
    }
    if (xlo > xhi) {
        xlo = ylo = 0;
        xhi = yhi = 1;
    }
    detail::Mapper mx{xlo - cell_w / 2, xhi + cell_w / 2, 52, width - 90.0};
    detail::Mapper my{ylo - cell_h / 2, yhi + cell_h / 2, height - 44.0, 12};

    std::ostringstream out;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
        << height << "' viewBox='0 0 " << width << ' ' << height << "'>\n";
    for (const auto& c : cells) {
        double px = mx(c.x - cell_w / 2), py = my(c.y + cell_h / 2);
        double w = mx(c.x + cell_w / 2) - px;
        double h = my(c.y - cell_h / 2) - py;
        std::string fill = "#cfe7f5";
        if (c.has_value) {
            int level = static_cast<int>(std::lround(std::clamp(c.value, 0.0, 1.0) * 255));
            char buf[8];
            std::snprintf(buf, sizeof buf, "#%02x%02x%02x", level, level, level);
            fill = buf;
        }
        out << "<rect x='" << px << "' y='" << py << "' width='" << w << "' height='" << h
            << "' fill='" << fill << "'/>\n";
    }
    detail::axes(out, mx, my, xlabel, ylabel);
    // grayscale legend
    for (int k = 0; k <= 10; ++k) {
        int level = static_cast<int>(std::lround(255.0 * k / 10.0));
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", level, level, level);
        double py = my.px0 - (my.px0 - my.px1) * k / 10.0;
        out << "<rect x='" << width - 60 << "' y='" << py - (my.px0 - my.px1) / 10.0
            << "' width='14' height='" << (my.px0 - my.px1) / 10.0 << "' fill='" << buf
            << "'/>\n";
    }
    out << "<text x='" << width - 42 << "' y='" << my.px1 + 8 << "' font-size='10'>1</text>\n";
    out << "<text x='" << width - 42 << "' y='" << my.px0 << "' font-size='10'>0</text>\n";
    out << "</svg>\n";
    return out.str();
}

}  // namespace adnsim::svg
