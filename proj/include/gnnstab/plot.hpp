#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gnnstab::plot {

enum class Style { line, markers, stems };

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    Style style = Style::line;
};

struct Figure {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
};

// Minimal standalone SVG: axes with a few ticks, one colour per series and a
// legend. Non-finite points are skipped.
std::string render_svg(const Figure& figure, int width = 640, int height = 400);
void write_svg(const std::filesystem::path& path, const Figure& figure);

}  // namespace gnnstab::plot
