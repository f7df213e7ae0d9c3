#include "owd/plot.hpp"

#include <algorithm>
#include <cmath>

#include "owd/imageio.hpp"

namespace owd {

void plot_color(int index, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b) {
    static const std::uint8_t palette[][3] = {
        {214, 69, 65},  {31, 119, 180}, {44, 160, 44},  {148, 103, 189}, {255, 127, 14},
        {23, 190, 207}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127}, {188, 189, 34},
    };
    const auto& c = palette[index % 10];
    r = c[0];
    g = c[1];
    b = c[2];
}

namespace {

void put(ImageU8& img, int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    img.at(y, x, 0) = r;
    img.at(y, x, 1) = g;
    img.at(y, x, 2) = b;
}

void line(ImageU8& img, int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
          std::uint8_t b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        put(img, x0, y0, r, g, b);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

}  // namespace

void render_line_plot(const std::vector<PlotSeries>& series, const std::string& path, int width,
                      int height) {
    ImageU8 img;
    img.width = width;
    img.height = height;
    img.pixels.assign(static_cast<std::size_t>(width) * height * 3, 255);

    const int ml = 50, mr = 20, mt = 20, mb = 35;
    const int x0 = ml, x1 = width - mr, y0 = height - mb, y1 = mt;

    double lo = 0.0, hi = 1.0;
    std::size_t max_n = 2;
    bool any = false;
    for (const auto& s : series) {
        for (double v : s.y) {
            if (!any) {
                lo = hi = v;
                any = true;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        max_n = std::max(max_n, s.y.size());
    }
    if (!any || hi == lo) {
        hi = lo + 1.0;
        lo -= 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    // axes + ticks
    line(img, x0, y0, x1, y0, 0, 0, 0);
    line(img, x0, y0, x0, y1, 0, 0, 0);
    for (int t = 0; t <= 4; ++t) {
        const int ty = y0 + (y1 - y0) * t / 4;
        line(img, x0 - 4, ty, x0, ty, 0, 0, 0);
        for (int gx = x0; gx <= x1; gx += 4) put(img, gx, ty, 225, 225, 225);
    }
    for (int t = 0; t <= 4; ++t) {
        const int tx = x0 + (x1 - x0) * t / 4;
        line(img, tx, y0, tx, y0 + 4, 0, 0, 0);
    }

    auto sx = [&](std::size_t i) {
        return x0 + static_cast<int>((x1 - x0) * static_cast<double>(i) /
                                     std::max<std::size_t>(1, max_n - 1));
    };
    auto sy = [&](double v) {
        return y0 + static_cast<int>((y1 - y0) * (v - lo) / (hi - lo));
    };

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        if (s.y.empty()) continue;
        for (std::size_t i = 1; i < s.y.size(); ++i)
            line(img, sx(i - 1), sy(s.y[i - 1]), sx(i), sy(s.y[i]), s.r, s.g, s.b);
        // legend swatch
        const int ly = mt + static_cast<int>(k) * 12;
        for (int dy = 0; dy < 8; ++dy)
            for (int dx = 0; dx < 8; ++dx) put(img, width - mr - 12 + dx, ly + dy, s.r, s.g, s.b);
    }

    write_ppm(path, img);
}

}  // namespace owd
