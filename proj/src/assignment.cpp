#include "owd/assignment.hpp"

#include <algorithm>
#include <cmath>

namespace owd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Node layout for the shortest-path search: rows are 0..R-1,
// cols are R..R+C-1. Source fans out to every free row at cost 0.
struct SearchState {
    std::vector<double> dist;
    std::vector<int> prev;  // predecessor node index, -1 at roots
    std::vector<char> done;
};

}  // namespace

// Successive shortest augmenting paths with node potentials. Each
// augmentation adds one match along the globally cheapest path from any
// free row to any free column, which yields the minimum-total-cost
// matching among maximum-size feasible matchings.
std::vector<std::pair<int, int>> hungarian(const CostMatrix& cost) {
    const int R = cost.rows;
    const int C = cost.cols;
    if (R <= 0 || C <= 0) return {};

    // Shift so all feasible entries are >= 0; adding a constant to every
    // entry changes all size-k matchings by the same amount.
    double shift = kInf;
    for (double e : cost.entries)
        if (e < kInf) shift = std::min(shift, e);
    if (shift == kInf) return {};  // everything forbidden
    auto entry = [&](int r, int c) -> double {
        const double e = cost.at(r, c);
        return e < kInf ? e - shift : kInf;
    };

    std::vector<int> row_match(R, -1), col_match(C, -1);
    std::vector<double> pot(R + C, 0.0);  // node potentials

    const int N = R + C;
    SearchState s;
    while (true) {
        s.dist.assign(N, kInf);
        s.prev.assign(N, -1);
        s.done.assign(N, 0);
        for (int r = 0; r < R; ++r)
            if (row_match[r] < 0) s.dist[r] = 0.0;

        // Dense Dijkstra, deterministic node order on ties.
        int best_col = -1;
        double best_col_dist = kInf;
        while (true) {
            int u = -1;
            double du = kInf;
            for (int n = 0; n < N; ++n)
                if (!s.done[n] && s.dist[n] < du) {
                    du = s.dist[n];
                    u = n;
                }
            if (u < 0 || du >= best_col_dist) break;
            s.done[u] = 1;
            if (u < R) {
                const int r = u;
                for (int c = 0; c < C; ++c) {
                    if (col_match[c] == r) continue;
                    const double w = entry(r, c);
                    if (w == kInf) continue;
                    const double nd = du + w + pot[r] - pot[R + c];
                    if (nd < s.dist[R + c]) {
                        s.dist[R + c] = nd;
                        s.prev[R + c] = r;
                    }
                }
            } else {
                const int c = u - R;
                if (col_match[c] < 0) {
                    if (du < best_col_dist) {
                        best_col_dist = du;
                        best_col = c;
                    }
                } else {
                    const int r = col_match[c];
                    const double w = -entry(r, c);
                    const double nd = du + w + pot[R + c] - pot[r];
                    if (nd < s.dist[r]) {
                        s.dist[r] = nd;
                        s.prev[r] = u;
                    }
                }
            }
        }
        if (best_col < 0) break;

        for (int n = 0; n < N; ++n)
            pot[n] += std::min(s.dist[n], best_col_dist);

        // Walk back the alternating path, flipping matched edges.
        int c = best_col;
        while (c >= 0) {
            const int r = s.prev[R + c];
            const int next_col = (row_match[r] >= 0) ? row_match[r] : -1;
            row_match[r] = c;
            col_match[c] = r;
            c = next_col;
        }
    }

    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < R; ++r)
        if (row_match[r] >= 0) out.emplace_back(r, row_match[r]);
    return out;
}

std::vector<std::pair<int, int>> greedy_match(const CostMatrix& scores, double thresh) {
    struct Entry {
        double score;
        int r, c;
    };
    std::vector<Entry> all;
    all.reserve(scores.entries.size());
    for (int r = 0; r < scores.rows; ++r)
        for (int c = 0; c < scores.cols; ++c) {
            const double v = scores.at(r, c);
            if (std::isfinite(v) && v >= thresh) all.push_back({v, r, c});
        }
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.r != b.r) return a.r < b.r;
        return a.c < b.c;
    });
    std::vector<char> row_used(scores.rows, 0), col_used(scores.cols, 0);
    std::vector<std::pair<int, int>> out;
    for (const Entry& e : all) {
        if (row_used[e.r] || col_used[e.c]) continue;
        row_used[e.r] = 1;
        col_used[e.c] = 1;
        out.emplace_back(e.r, e.c);
    }
    return out;
}

}  // namespace owd
