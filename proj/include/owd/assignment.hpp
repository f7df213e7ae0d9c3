#pragma once

#include <limits>
#include <utility>
#include <vector>

namespace owd {

/// Sentinel marking a disallowed (row, col) pair. Kept distinct from large
/// finite costs so gated-out pairs can never distort the optimum.
inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

/// Dense rectangular cost matrix with a FORBIDDEN sentinel.
struct CostMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> entries;  // row-major

    CostMatrix() = default;
    CostMatrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), entries(static_cast<std::size_t>(r) * c, fill) {}

    double at(int r, int c) const { return entries[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return entries[static_cast<std::size_t>(r) * cols + c]; }
    bool forbidden(int r, int c) const { return !(at(r, c) < kForbidden); }
};

/// Minimum-cost assignment among maximum-size feasible matchings.
/// FORBIDDEN pairs are never assigned; an all-FORBIDDEN matrix yields an
/// empty matching. Result is sorted by (row, col).
std::vector<std::pair<int, int>> hungarian(const CostMatrix& cost);

/// Greedy matching: repeatedly take the highest score >= thresh among
/// still-unmatched rows and cols, ties broken by (row, col).
/// Pairs are returned in the order they were taken.
std::vector<std::pair<int, int>> greedy_match(const CostMatrix& scores, double thresh);

}  // namespace owd
