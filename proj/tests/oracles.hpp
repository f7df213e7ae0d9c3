#pragma once

// Independent brute-force reference implementations used as test oracles.
// Everything here is deliberately naive and kept apart from the library
// code paths it checks.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "owd/assignment.hpp"
#include "owd/geometry.hpp"
#include "owd/nn.hpp"

namespace oracles {

// IoU / GIoU for integer-coordinate boxes by rasterizing on the unit grid
// and counting cells. Exact for integer boxes.
struct GridOverlap {
    long long inter = 0, uni = 0, hull = 0;
};

inline GridOverlap rasterize_overlap(const owd::Box& a, const owd::Box& b) {
    const int x0 = static_cast<int>(std::floor(std::min(a.x1, b.x1)));
    const int y0 = static_cast<int>(std::floor(std::min(a.y1, b.y1)));
    const int x1 = static_cast<int>(std::ceil(std::max(a.x2, b.x2)));
    const int y1 = static_cast<int>(std::ceil(std::max(a.y2, b.y2)));
    GridOverlap g;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const bool in_a = x >= a.x1 && x < a.x2 && y >= a.y1 && y < a.y2;
            const bool in_b = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
            g.inter += in_a && in_b;
            g.uni += in_a || in_b;
        }
    g.hull = static_cast<long long>(x1 - x0) * (y1 - y0);
    return g;
}

inline double grid_iou(const owd::Box& a, const owd::Box& b) {
    const auto g = rasterize_overlap(a, b);
    if (g.uni == 0) return 0.0;
    return static_cast<double>(g.inter) / static_cast<double>(g.uni);
}

inline double grid_giou(const owd::Box& a, const owd::Box& b) {
    const auto g = rasterize_overlap(a, b);
    const double i = g.uni > 0 ? static_cast<double>(g.inter) / static_cast<double>(g.uni) : 0.0;
    if (g.hull <= 0) return i;
    return i - static_cast<double>(g.hull - g.uni) / static_cast<double>(g.hull);
}

// Greedy NMS, re-derived from the contract text.
inline std::vector<int> naive_nms(const std::vector<owd::Box>& boxes,
                                  const std::vector<double>& scores, double thresh) {
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    });
    std::vector<int> kept;
    std::vector<char> dead(boxes.size(), 0);
    for (int i : order) {
        if (dead[i]) continue;
        kept.push_back(i);
        for (int j : order)
            if (!dead[j] && j != i && owd::iou(boxes[i], boxes[j]) > thresh) dead[j] = 1;
    }
    return kept;
}

// Exhaustive min-cost maximum matching (n <= ~7). Enumerates every partial
// injective assignment row by row.
struct BruteMatch {
    int size = 0;
    double cost = 0.0;
    std::vector<std::pair<int, int>> pairs;
};

inline void brute_recurse(const owd::CostMatrix& m, int row, std::vector<int>& col_used,
                          std::vector<std::pair<int, int>>& cur, double cur_cost,
                          BruteMatch& best) {
    if (row == m.rows) {
        const int sz = static_cast<int>(cur.size());
        auto sorted = cur;
        std::sort(sorted.begin(), sorted.end());
        if (sz > best.size || (sz == best.size && cur_cost < best.cost - 1e-12) ||
            (sz == best.size && std::abs(cur_cost - best.cost) <= 1e-12 && sorted < best.pairs)) {
            best.size = sz;
            best.cost = cur_cost;
            best.pairs = sorted;
        }
        return;
    }
    brute_recurse(m, row + 1, col_used, cur, cur_cost, best);  // leave row unmatched
    for (int c = 0; c < m.cols; ++c) {
        if (col_used[c] || m.forbidden(row, c)) continue;
        col_used[c] = 1;
        cur.emplace_back(row, c);
        brute_recurse(m, row + 1, col_used, cur, cur_cost + m.at(row, c), best);
        cur.pop_back();
        col_used[c] = 0;
    }
}

inline BruteMatch brute_force_assignment(const owd::CostMatrix& m) {
    BruteMatch best;
    best.size = -1;
    std::vector<int> used(m.cols, 0);
    std::vector<std::pair<int, int>> cur;
    brute_recurse(m, 0, used, cur, 0.0, best);
    return best;
}

// Repeated-argmax greedy matching (the contract's literal wording).
inline std::vector<std::pair<int, int>> naive_greedy(const owd::CostMatrix& scores,
                                                     double thresh) {
    std::vector<char> row_used(scores.rows, 0), col_used(scores.cols, 0);
    std::vector<std::pair<int, int>> out;
    while (true) {
        int br = -1, bc = -1;
        double best = -std::numeric_limits<double>::infinity();
        for (int r = 0; r < scores.rows; ++r) {
            if (row_used[r]) continue;
            for (int c = 0; c < scores.cols; ++c) {
                if (col_used[c]) continue;
                const double v = scores.at(r, c);
                if (std::isfinite(v) && v >= thresh && v > best) {
                    best = v;
                    br = r;
                    bc = c;
                }
            }
        }
        if (br < 0) break;
        row_used[br] = 1;
        col_used[bc] = 1;
        out.emplace_back(br, bc);
    }
    return out;
}

// Central finite differences over every parameter; returns the max
// relative error against the analytic gradient.
template <typename LossFn>
double max_grad_rel_error(owd::ParamDict& params, const owd::ParamDict& analytic, LossFn loss,
                          double eps = 1e-5) {
    double worst = 0.0;
    std::size_t flat = 0;
    for (std::size_t item = 0; item < params.items.size(); ++item) {
        auto& t = params.items[item].second;
        const auto& g = analytic.items[item].second;
        for (std::size_t i = 0; i < t.size(); ++i, ++flat) {
            const double keep = t.data[i];
            t.data[i] = keep + eps;
            const double up = loss(params);
            t.data[i] = keep - eps;
            const double down = loss(params);
            t.data[i] = keep;
            const double fd = (up - down) / (2.0 * eps);
            const double an = g.data[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace oracles
