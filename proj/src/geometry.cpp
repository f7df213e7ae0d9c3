#include "owd/geometry.hpp"

#include <algorithm>
#include <numeric>

namespace owd {

std::size_t BinaryMask::popcount() const {
    std::size_t n = 0;
    for (auto v : cells) n += (v != 0);
    return n;
}

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

double giou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    const double hw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
    const double hh = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
    const double hull = hw * hh;
    const double i = uni > 0.0 ? inter / uni : 0.0;
    if (hull <= 0.0) return i;
    return i - (hull - uni) / hull;
}

Box mask_to_box(const BinaryMask& m) {
    int rmin = m.height, rmax = -1, cmin = m.width, cmax = -1;
    for (int r = 0; r < m.height; ++r) {
        const std::uint8_t* row = m.cells.data() + static_cast<std::size_t>(r) * m.width;
        for (int c = 0; c < m.width; ++c) {
            if (row[c]) {
                rmin = std::min(rmin, r);
                rmax = std::max(rmax, r);
                cmin = std::min(cmin, c);
                cmax = std::max(cmax, c);
            }
        }
    }
    if (rmax < 0) throw EmptyMask();
    return Box{static_cast<double>(cmin), static_cast<double>(rmin),
               static_cast<double>(cmax + 1), static_cast<double>(rmax + 1)};
}

std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_thresh) {
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::vector<int> kept;
    for (int idx : order) {
        bool suppressed = false;
        for (int k : kept) {
            if (iou(boxes[idx], boxes[k]) > iou_thresh) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(idx);
    }
    return kept;
}

Box clamp_box(const Box& b, double w, double h) {
    Box r;
    r.x1 = std::clamp(b.x1, 0.0, w);
    r.y1 = std::clamp(b.y1, 0.0, h);
    r.x2 = std::clamp(b.x2, 0.0, w);
    r.y2 = std::clamp(b.y2, 0.0, h);
    return r;
}

}  // namespace owd
