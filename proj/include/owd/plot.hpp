#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace owd {

struct PlotSeries {
    std::string name;
    std::vector<double> y;  // x is the index
    std::uint8_t r = 0, g = 0, b = 0;
};

/// Minimal line plot written as a PPM image: axes, ticks, one polyline per
/// series, legend swatches top-right.
void render_line_plot(const std::vector<PlotSeries>& series, const std::string& path,
                      int width = 720, int height = 440);

/// Stable palette for up to ~10 series.
void plot_color(int index, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b);

}  // namespace owd
