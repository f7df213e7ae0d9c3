#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace owd {

/// Axis-aligned box in pixel coordinates, origin top-left, right/bottom
/// edges exclusive. Zero-area boxes are legal values; they overlap nothing.
struct Box {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
    bool valid() const { return x1 <= x2 && y1 <= y2; }

    bool operator==(const Box&) const = default;
};

/// H x W occupancy grid with values in {0, 1}.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> cells;  // row-major, size height*width

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), cells(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t at(int r, int c) const { return cells[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t& at(int r, int c) { return cells[static_cast<std::size_t>(r) * width + c]; }

    std::size_t popcount() const;
};

struct EmptyMask : std::runtime_error {
    EmptyMask() : std::runtime_error("mask has no nonzero cells") {}
};

/// Intersection over union. Degenerate (zero-area) inputs and zero unions
/// give 0.
double iou(const Box& a, const Box& b);

/// Generalized IoU: iou - (hull - union) / hull, in [-1, 1].
double giou(const Box& a, const Box& b);

/// Tightest box covering every nonzero cell (exclusive right/bottom edges).
/// Throws EmptyMask when all cells are zero.
Box mask_to_box(const BinaryMask& m);

/// Greedy score-descending suppression. Returns indices of kept entries,
/// ordered by (score desc, input index asc). Kept boxes have pairwise IoU
/// <= iou_thresh against every higher-scored kept box.
std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_thresh);

/// Clamp a box to [0,w] x [0,h]; idempotent.
Box clamp_box(const Box& b, double w, double h);

}  // namespace owd
