#include <doctest.h>

#include <algorithm>

#include "oracles.hpp"
#include "owd/assignment.hpp"
#include "owd/rng.hpp"

using owd::CostMatrix;
using owd::kForbidden;

namespace {

CostMatrix random_matrix(owd::Rng& rng, int rows, int cols, double forbid_prob) {
    CostMatrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            m.at(r, c) = rng.uniform() < forbid_prob ? kForbidden : rng.uniform(-2.0, 5.0);
    return m;
}

double total_cost(const CostMatrix& m, const std::vector<std::pair<int, int>>& pairs) {
    double s = 0.0;
    for (const auto& [r, c] : pairs) s += m.at(r, c);
    return s;
}

}  // namespace

TEST_CASE("hungarian trivial cases") {
    CostMatrix one(1, 1);
    one.at(0, 0) = 0.2;
    CHECK(owd::hungarian(one) == std::vector<std::pair<int, int>>{{0, 0}});

    CostMatrix diag(3, 3, 1.0);
    for (int i = 0; i < 3; ++i) diag.at(i, i) = 0.0;
    CHECK(owd::hungarian(diag) == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});

    CostMatrix forb(2, 3, kForbidden);
    CHECK(owd::hungarian(forb).empty());
}

TEST_CASE("hungarian equals exhaustive search, with and without forbidden pairs") {
    owd::Rng rng(43, 0);
    for (int trial = 0; trial < 250; ++trial) {
        const int rows = static_cast<int>(rng.uniform_int(1, 6));
        const int cols = static_cast<int>(rng.uniform_int(1, 6));
        const double forbid = trial % 3 == 0 ? 0.4 : (trial % 3 == 1 ? 0.15 : 0.0);
        const CostMatrix m = random_matrix(rng, rows, cols, forbid);
        const auto got = owd::hungarian(m);
        const auto want = oracles::brute_force_assignment(m);
        CHECK(static_cast<int>(got.size()) == want.size);
        CHECK(total_cost(m, got) == doctest::Approx(want.cost).epsilon(1e-9));
        // random continuous costs: the optimum is unique, so the pair sets match
        CHECK(got == want.pairs);
    }
}

TEST_CASE("hungarian never assigns forbidden pairs, partial matchings allowed") {
    // A matching is forced through the only feasible column per row.
    CostMatrix m(3, 2, kForbidden);
    m.at(0, 0) = 5.0;
    m.at(1, 0) = 1.0;
    m.at(2, 1) = 2.0;
    const auto got = owd::hungarian(m);
    CHECK(got == std::vector<std::pair<int, int>>{{1, 0}, {2, 1}});
}

TEST_CASE("hungarian picks the cheaper row when columns are scarce") {
    CostMatrix m(2, 1);
    m.at(0, 0) = 5.0;
    m.at(1, 0) = 1.0;
    CHECK(owd::hungarian(m) == std::vector<std::pair<int, int>>{{1, 0}});
}

TEST_CASE("hungarian cost is never above greedy cost on fully feasible matrices") {
    owd::Rng rng(47, 0);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(2, 7));
        const CostMatrix m = random_matrix(rng, n, n, 0.0);
        // greedy on costs: match lowest cost first == greedy_match on negated scores
        CostMatrix neg(n, n);
        for (std::size_t i = 0; i < m.entries.size(); ++i) neg.entries[i] = -m.entries[i];
        const auto greedy = owd::greedy_match(neg, -1e18);
        const auto optimal = owd::hungarian(m);
        REQUIRE(greedy.size() == optimal.size());
        CHECK(total_cost(m, optimal) <= total_cost(m, greedy) + 1e-9);
    }
}

TEST_CASE("hungarian equivariant under row permutation") {
    owd::Rng rng(53, 0);
    for (int trial = 0; trial < 40; ++trial) {
        const int rows = 5, cols = 6;
        const CostMatrix m = random_matrix(rng, rows, cols, 0.2);
        const auto base = owd::hungarian(m);

        std::vector<int> perm(rows);
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = rows - 1; i > 0; --i)
            std::swap(perm[i], perm[static_cast<int>(rng.uniform_int(0, i))]);
        CostMatrix pm(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) pm.at(perm[r], c) = m.at(r, c);

        auto permuted = owd::hungarian(pm);
        // map back and compare as sets
        for (auto& [r, c] : permuted) {
            const auto it = std::find(perm.begin(), perm.end(), r);
            r = static_cast<int>(it - perm.begin());
        }
        std::sort(permuted.begin(), permuted.end());
        auto expected = base;
        std::sort(expected.begin(), expected.end());
        CHECK(permuted == expected);
    }
}

TEST_CASE("hungarian invariant to adding a constant to every entry") {
    owd::Rng rng(59, 0);
    for (int trial = 0; trial < 40; ++trial) {
        const CostMatrix m = random_matrix(rng, 4, 5, 0.25);
        CostMatrix shifted = m;
        const double delta = rng.uniform(-10.0, 10.0);
        for (auto& e : shifted.entries)
            if (e < kForbidden) e += delta;
        CHECK(owd::hungarian(m) == owd::hungarian(shifted));
    }
}

TEST_CASE("greedy_match trivial cases") {
    CostMatrix m(2, 2, 0.1);
    CHECK(owd::greedy_match(m, 0.5).empty());
    m.at(1, 0) = 0.9;
    CHECK(owd::greedy_match(m, 0.5) == std::vector<std::pair<int, int>>{{1, 0}});
}

TEST_CASE("greedy_match equals repeated-argmax oracle") {
    owd::Rng rng(61, 0);
    for (int trial = 0; trial < 80; ++trial) {
        const int rows = static_cast<int>(rng.uniform_int(1, 5));
        const int cols = static_cast<int>(rng.uniform_int(1, 5));
        CostMatrix m(rows, cols);
        for (auto& e : m.entries) e = rng.uniform();
        const double thresh = rng.uniform(0.0, 0.8);
        CHECK(owd::greedy_match(m, thresh) == oracles::naive_greedy(m, thresh));
    }
}
