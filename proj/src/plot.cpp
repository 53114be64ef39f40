#include "gnnstab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gnnstab/error.hpp"

namespace gnnstab::plot {

namespace {

constexpr const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string tick(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

}  // namespace

std::string render_svg(const Figure& figure, int width, int height) {
    double x0 = std::numeric_limits<double>::infinity();
    double x1 = -x0;
    double y0 = x0;
    double y1 = -x0;
    for (const auto& s : figure.series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!(x0 <= x1)) {
        x0 = 0.0;
        x1 = 1.0;
        y0 = 0.0;
        y1 = 1.0;
    }
    if (figure.series.size() > 0 &&
        std::any_of(figure.series.begin(), figure.series.end(),
                    [](const Series& s) { return s.style == Style::stems; })) {
        y0 = std::min(y0, 0.0);
    }
    if (x1 - x0 < 1e-12) { x0 -= 0.5; x1 += 0.5; }
    if (y1 - y0 < 1e-12) { y0 -= 0.5; y1 += 0.5; }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    const double left = 70, right = 20, top = 40, bottom = 55;
    const double pw = width - left - right;
    const double ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(figure.title) << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = x0 + (x1 - x0) * t / 4.0;
        const double yv = y0 + (y1 - y0) * t / 4.0;
        o << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 16
          << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
        o << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
          << tick(yv) << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">" << escape(figure.x_label) << "</text>\n";
    o << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << top + ph / 2 << ")\">" << escape(figure.y_label) << "</text>\n";

    for (std::size_t k = 0; k < figure.series.size(); ++k) {
        const auto& s = figure.series[k];
        const char* colour = kColours[k % std::size(kColours)];
        const std::size_t n = std::min(s.x.size(), s.y.size());
        if (s.style == Style::line) {
            o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < n; ++i) {
                if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
                    o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
                }
            }
            o << "\"/>\n";
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                if (s.style == Style::stems) {
                    o << "<line x1=\"" << px(s.x[i]) << "\" y1=\"" << py(0.0) << "\" x2=\""
                      << px(s.x[i]) << "\" y2=\"" << py(s.y[i]) << "\" stroke=\"" << colour
                      << "\"/>\n";
                }
                o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
                  << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
            }
        }
        const double ly = top + 14 + 16.0 * static_cast<double>(k);
        o << "<rect x=\"" << left + pw - 150 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\""
          << colour << "\"/>\n";
        o << "<text x=\"" << left + pw - 135 << "\" y=\"" << ly << "\">" << escape(s.label)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

void write_svg(const std::filesystem::path& path, const Figure& figure) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write plot '" + path.string() + "'");
    }
    out << render_svg(figure);
}

}  // namespace gnnstab::plot
