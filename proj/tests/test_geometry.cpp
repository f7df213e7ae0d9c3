#include <doctest.h>

#include "oracles.hpp"
#include "owd/geometry.hpp"
#include "owd/rng.hpp"

using owd::BinaryMask;
using owd::Box;

namespace {

Box random_int_box(owd::Rng& rng, int extent) {
    const int x1 = static_cast<int>(rng.uniform_int(0, extent - 1));
    const int y1 = static_cast<int>(rng.uniform_int(0, extent - 1));
    const int x2 = static_cast<int>(rng.uniform_int(x1, extent));
    const int y2 = static_cast<int>(rng.uniform_int(y1, extent));
    return Box{static_cast<double>(x1), static_cast<double>(y1), static_cast<double>(x2),
               static_cast<double>(y2)};
}

}  // namespace

TEST_CASE("iou basic cases") {
    CHECK(owd::iou({0, 0, 4, 4}, {0, 0, 4, 4}) == doctest::Approx(1.0));
    CHECK(owd::iou({0, 0, 1, 1}, {5, 5, 6, 6}) == 0.0);
    // 2x2 vs 2x2 shifted by 1: inter 1, union 7
    CHECK(owd::iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0));
    CHECK(owd::iou({0, 0, 2, 2}, {1, 1, 3, 3}) ==
          oracles::grid_iou({0, 0, 2, 2}, {1, 1, 3, 3}));
    // zero-area boxes are legal and match nothing
    CHECK(owd::iou({2, 2, 2, 2}, {0, 0, 4, 4}) == 0.0);
    CHECK(owd::iou({2, 2, 2, 2}, {2, 2, 2, 2}) == 0.0);
}

TEST_CASE("giou basic cases") {
    CHECK(owd::giou({1, 1, 3, 5}, {1, 1, 3, 5}) == doctest::Approx(1.0));
    // disjoint: iou 0, union 2, hull 3 -> -1/3
    CHECK(owd::giou({0, 0, 1, 1}, {2, 0, 3, 1}) == doctest::Approx(-1.0 / 3.0));
    // zero-area a against b: -(hull - area(b)) / hull
    const Box a{5, 5, 5, 5}, b{0, 0, 2, 2};
    const double hull = 5.0 * 5.0;
    CHECK(owd::giou(a, b) == doctest::Approx(-(hull - 4.0) / hull));
}

TEST_CASE("iou/giou match grid rasterization on random integer boxes") {
    owd::Rng rng(7, 0);
    for (int i = 0; i < 300; ++i) {
        const Box a = random_int_box(rng, 12);
        const Box b = random_int_box(rng, 12);
        CHECK(owd::iou(a, b) == oracles::grid_iou(a, b));
        CHECK(owd::giou(a, b) == oracles::grid_giou(a, b));
    }
}

TEST_CASE("iou properties: symmetry, range, giou <= iou") {
    owd::Rng rng(11, 0);
    for (int i = 0; i < 200; ++i) {
        Box a{rng.uniform(0, 30), rng.uniform(0, 30), 0, 0};
        a.x2 = a.x1 + rng.uniform(0, 20);
        a.y2 = a.y1 + rng.uniform(0, 20);
        Box b{rng.uniform(0, 30), rng.uniform(0, 30), 0, 0};
        b.x2 = b.x1 + rng.uniform(0, 20);
        b.y2 = b.y1 + rng.uniform(0, 20);
        const double v = owd::iou(a, b);
        CHECK(v == owd::iou(b, a));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(owd::giou(a, b) <= v + 1e-12);
        CHECK(owd::giou(a, b) >= -1.0);
        if (a.area() > 0) CHECK(owd::iou(a, a) == doctest::Approx(1.0));
    }
}

TEST_CASE("giou equals iou for nested boxes") {
    const Box outer{0, 0, 10, 10}, inner{2, 3, 6, 8};
    CHECK(owd::giou(outer, inner) == doctest::Approx(owd::iou(outer, inner)));
}

TEST_CASE("mask_to_box basic cases") {
    BinaryMask full(8, 8);
    std::fill(full.cells.begin(), full.cells.end(), 1);
    CHECK(owd::mask_to_box(full) == Box{0, 0, 8, 8});

    BinaryMask single(8, 8);
    single.at(3, 5) = 1;
    CHECK(owd::mask_to_box(single) == Box{5, 3, 6, 4});

    BinaryMask empty(4, 4);
    CHECK_THROWS_AS(owd::mask_to_box(empty), owd::EmptyMask);
}

TEST_CASE("mask_to_box equals full-scan oracle and is tight") {
    owd::Rng rng(23, 0);
    for (int trial = 0; trial < 50; ++trial) {
        BinaryMask m(10, 14);
        int nonzero = 0;
        for (auto& c : m.cells) {
            c = rng.uniform() < 0.15 ? 1 : 0;
            nonzero += c;
        }
        if (nonzero == 0) {
            m.at(static_cast<int>(rng.uniform_int(0, 9)), static_cast<int>(rng.uniform_int(0, 13))) = 1;
        }
        // independent full-scan oracle
        int rmin = 10, rmax = -1, cmin = 14, cmax = -1;
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 14; ++c)
                if (m.at(r, c)) {
                    rmin = std::min(rmin, r);
                    rmax = std::max(rmax, r);
                    cmin = std::min(cmin, c);
                    cmax = std::max(cmax, c);
                }
        const Box got = owd::mask_to_box(m);
        CHECK(got == Box{static_cast<double>(cmin), static_cast<double>(rmin),
                         static_cast<double>(cmax + 1), static_cast<double>(rmax + 1)});

        // every nonzero cell covered
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 14; ++c)
                if (m.at(r, c)) {
                    CHECK(c >= got.x1);
                    CHECK(c < got.x2);
                    CHECK(r >= got.y1);
                    CHECK(r < got.y2);
                }
        // no tighter box: shrinking any edge by 1 drops a nonzero cell
        auto covers_all = [&](const Box& b) {
            for (int r = 0; r < 10; ++r)
                for (int c = 0; c < 14; ++c)
                    if (m.at(r, c) && !(c >= b.x1 && c < b.x2 && r >= b.y1 && r < b.y2))
                        return false;
            return true;
        };
        CHECK_FALSE(covers_all({got.x1 + 1, got.y1, got.x2, got.y2}));
        CHECK_FALSE(covers_all({got.x1, got.y1 + 1, got.x2, got.y2}));
        CHECK_FALSE(covers_all({got.x1, got.y1, got.x2 - 1, got.y2}));
        CHECK_FALSE(covers_all({got.x1, got.y1, got.x2, got.y2 - 1}));
    }
}

TEST_CASE("nms basic cases") {
    CHECK(owd::nms({{0, 0, 4, 4}}, {0.7}, 0.5) == std::vector<int>{0});
    // two identical boxes keep only the higher score
    CHECK(owd::nms({{0, 0, 4, 4}, {0, 0, 4, 4}}, {0.8, 0.9}, 0.5) == std::vector<int>{1});
    CHECK(owd::nms({}, {}, 0.5).empty());
}

TEST_CASE("nms equals brute-force greedy oracle") {
    owd::Rng rng(31, 0);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Box> boxes;
        std::vector<double> scores;
        for (int i = 0; i < 20; ++i) {
            Box b{rng.uniform(0, 20), rng.uniform(0, 20), 0, 0};
            b.x2 = b.x1 + rng.uniform(2, 12);
            b.y2 = b.y1 + rng.uniform(2, 12);
            boxes.push_back(b);
            scores.push_back(rng.uniform());
        }
        CHECK(owd::nms(boxes, scores, 0.4) == oracles::naive_nms(boxes, scores, 0.4));
    }
}

TEST_CASE("nms output invariant to input permutation (distinct scores)") {
    owd::Rng rng(37, 0);
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int i = 0; i < 12; ++i) {
        Box b{rng.uniform(0, 20), rng.uniform(0, 20), 0, 0};
        b.x2 = b.x1 + rng.uniform(2, 10);
        b.y2 = b.y1 + rng.uniform(2, 10);
        boxes.push_back(b);
        scores.push_back((i + 1) / 13.0);  // distinct
    }
    const auto base = owd::nms(boxes, scores, 0.45);
    std::vector<Box> kept_base;
    for (int i : base) kept_base.push_back(boxes[i]);

    std::vector<int> perm(boxes.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (int t = 0; t < 5; ++t) {
        for (int i = static_cast<int>(perm.size()) - 1; i > 0; --i)
            std::swap(perm[i], perm[static_cast<int>(rng.uniform_int(0, i))]);
        std::vector<Box> pb;
        std::vector<double> ps;
        for (int i : perm) {
            pb.push_back(boxes[i]);
            ps.push_back(scores[i]);
        }
        const auto got = owd::nms(pb, ps, 0.45);
        std::vector<Box> kept;
        for (int i : got) kept.push_back(pb[i]);
        CHECK(kept == kept_base);
    }
}

TEST_CASE("clamp_box is idempotent") {
    const Box b{-3, -1, 70, 90};
    const Box c = owd::clamp_box(b, 64, 64);
    CHECK(c == Box{0, 0, 64, 64});
    CHECK(owd::clamp_box(c, 64, 64) == c);
}
