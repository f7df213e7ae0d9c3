#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "owd/detector.hpp"
#include "owd/errors.hpp"
#include "owd/rng.hpp"

using namespace owd;

namespace {

DetectorConfig tiny_config() {
    DetectorConfig cfg;
    cfg.trunk_channels = {4, 6};  // stride 4
    cfg.num_known = 2;
    cfg.embed_dim = 3;
    cfg.score_thresh = 0.2;
    return cfg;
}

Tensor random_image(Rng& rng, int h, int w) {
    Tensor img({3, h, w});
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

double inv_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace

TEST_CASE("forward produces stride-divided maps and is deterministic") {
    DetectorConfig cfg;  // defaults: 3 trunk layers, stride 8
    DetectorNet net(cfg);
    Rng rng(5, 0);
    const auto params = net.init_params(rng);
    const auto img = random_image(rng, 64, 64);

    const auto a = net.forward(params, img);
    CHECK(a.out.hf == 8);
    CHECK(a.out.wf == 8);
    CHECK(a.out.stride == 8);
    CHECK(a.out.objectness.shape == std::vector<int>{1, 8, 8});
    CHECK(a.out.cat_logits.shape == std::vector<int>{cfg.num_known, 8, 8});
    CHECK(a.out.box_offsets.shape == std::vector<int>{4, 8, 8});
    CHECK(a.out.embeddings.shape == std::vector<int>{cfg.embed_dim, 8, 8});
    for (double v : a.out.box_offsets.data) CHECK(v >= 0.0);

    const auto b = net.forward(params, img);
    CHECK(std::memcmp(a.out.objectness.ptr(), b.out.objectness.ptr(),
                      a.out.objectness.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.out.embeddings.ptr(), b.out.embeddings.ptr(),
                      a.out.embeddings.size() * sizeof(double)) == 0);

    CHECK_THROWS_AS(net.forward(params, random_image(rng, 60, 64)), ShapeMismatch);
}

TEST_CASE("zero-initialized head stays zero when its input doubles") {
    DetectorNet net(tiny_config());
    Rng rng(9, 0);
    auto params = net.init_params(rng);
    params.find("emb.w")->fill(0.0);
    params.find("emb.b")->fill(0.0);

    auto img = random_image(rng, 16, 16);
    const auto a = net.forward(params, img);
    for (double v : a.out.embeddings.data) CHECK(v == 0.0);
    for (auto& v : img.data) v *= 2.0;
    const auto b = net.forward(params, img);
    for (double v : b.out.embeddings.data) CHECK(v == 0.0);
}

TEST_CASE("decode: empty at saturated-low objectness, exact single-cell box") {
    DetectorConfig cfg;
    cfg.num_known = 4;
    cfg.embed_dim = 8;
    DenseOutput out;
    out.hf = out.wf = 8;
    out.stride = 8;
    out.objectness = Tensor({1, 8, 8}, -10.0);
    out.cat_logits = Tensor({4, 8, 8});
    out.box_raw = Tensor({4, 8, 8});
    out.box_offsets = Tensor({4, 8, 8});
    out.embeddings = Tensor({8, 8, 8}, 0.5);
    CHECK(decode(out, cfg, 64, 64).empty());

    // one confident cell at grid (1, 1): center (12, 12), offsets 4 each way
    const int cell = 1 * 8 + 1;
    out.objectness[cell] = 10.0;
    for (int k = 0; k < 4; ++k) {
        out.box_offsets[k * 64 + cell] = 4.0;
        out.box_raw[k * 64 + cell] = inv_softplus(4.0);
    }
    const auto dets = decode(out, cfg, 64, 64);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].box == Box{8, 8, 16, 16});
    CHECK(dets[0].cell == cell);
    CHECK(dets[0].objectness == doctest::Approx(sigmoid(10.0)));
    // uniform cat logits: max softmax prob = 1/4 < margin -> UNKNOWN
    CHECK(dets[0].label == kUnknownLabel);
    double n2 = 0.0;
    for (double v : dets[0].embedding) n2 += v * v;
    CHECK(n2 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("decode equals a naive per-cell reference") {
    DetectorConfig cfg = tiny_config();
    DetectorNet net(cfg);
    Rng rng(13, 0);
    const auto params = net.init_params(rng);

    for (int trial = 0; trial < 5; ++trial) {
        const auto img = random_image(rng, 32, 32);
        const auto acts = net.forward(params, img);
        DenseOutput out = acts.out;
        // spread objectness so several cells clear the threshold
        for (std::size_t i = 0; i < out.objectness.size(); ++i)
            out.objectness[i] = rng.uniform(-3.0, 3.0);

        const auto got = decode(out, cfg, 32, 32);

        // independent reference: threshold, sort, topk, greedy suppression
        struct Cand {
            int cell;
            double score;
            Box box;
        };
        std::vector<Cand> cands;
        const int cells = out.cells();
        for (int i = 0; i < cells; ++i) {
            const double s = 1.0 / (1.0 + std::exp(-out.objectness[i]));
            if (s < cfg.score_thresh) continue;
            const double cx = (i % out.wf + 0.5) * out.stride;
            const double cy = (i / out.wf + 0.5) * out.stride;
            Box b{cx - out.box_offsets[0 * cells + i], cy - out.box_offsets[1 * cells + i],
                  cx + out.box_offsets[2 * cells + i], cy + out.box_offsets[3 * cells + i]};
            b = clamp_box(b, 32, 32);
            cands.push_back({i, s, b});
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            return a.score != b.score ? a.score > b.score : a.cell < b.cell;
        });
        if (static_cast<int>(cands.size()) > cfg.topk) cands.resize(cfg.topk);
        std::vector<Cand> kept;
        for (const auto& c : cands) {
            bool keep = true;
            for (const auto& k : kept)
                if (iou(c.box, k.box) > cfg.nms_thresh) keep = false;
            if (keep) kept.push_back(c);
        }

        REQUIRE(got.size() == kept.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].cell == kept[i].cell);
            CHECK(got[i].box == kept[i].box);
            CHECK(got[i].objectness == doctest::Approx(kept[i].score));
        }
    }
}

TEST_CASE("decoded boxes stay inside the image; clamping idempotent") {
    DetectorConfig cfg = tiny_config();
    cfg.score_thresh = 0.05;
    DetectorNet net(cfg);
    Rng rng(17, 0);
    const auto params = net.init_params(rng);
    const auto img = random_image(rng, 32, 32);
    auto acts = net.forward(params, img);
    for (std::size_t i = 0; i < acts.out.objectness.size(); ++i)
        acts.out.objectness[i] = 2.0;  // everything decodes
    for (std::size_t i = 0; i < acts.out.box_offsets.size(); ++i)
        acts.out.box_offsets[i] = rng.uniform(0.0, 40.0);  // many boxes spill over
    for (const auto& inst : decode(acts.out, cfg, 32, 32)) {
        CHECK(inst.box.x1 >= 0.0);
        CHECK(inst.box.y1 >= 0.0);
        CHECK(inst.box.x2 <= 32.0);
        CHECK(inst.box.y2 <= 32.0);
        CHECK(clamp_box(inst.box, 32, 32) == inst.box);
    }
}

TEST_CASE("assign_targets basic cases") {
    DetectorConfig cfg;  // stride 8
    SUBCASE("empty gt -> all negative") {
        const auto t = assign_targets({}, 64, 64, cfg);
        CHECK(t.num_pos == 0);
        for (int c : t.category) CHECK(c == -1);
    }
    SUBCASE("full-image box on a 3x3 grid -> center cell, symmetric offsets") {
        const auto t = assign_targets({{Box{0, 0, 24, 24}, 1}}, 24, 24, cfg);
        CHECK(t.num_pos == 1);
        const int center = 1 * 3 + 1;
        CHECK(t.category[center] == 1);
        CHECK(t.ltrb[center] == std::array<double, 4>{12, 12, 12, 12});
    }
    SUBCASE("nested boxes: overlapping cells go to the smaller box") {
        const std::vector<GtBox> gts = {{Box{0, 0, 64, 64}, 0}, {Box{24, 24, 40, 40}, 1}};
        const auto t = assign_targets(gts, 64, 64, cfg);
        // brute-force per-cell area comparison
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                const double cx = (c + 0.5) * 8, cy = (r + 0.5) * 8;
                int want = -1;
                double want_area = 0.0;
                for (std::size_t g = 0; g < gts.size(); ++g) {
                    const Box& b = gts[g].box;
                    const double hw = 0.25 * b.width(), hh = 0.25 * b.height();
                    if (cx >= b.cx() - hw && cx <= b.cx() + hw && cy >= b.cy() - hh &&
                        cy <= b.cy() + hh) {
                        if (want < 0 || b.area() < want_area) {
                            want = gts[g].category;
                            want_area = b.area();
                        }
                    }
                }
                CHECK(t.category[r * 8 + c] == want);
            }
    }
}

TEST_CASE("detection_loss at the optimum and with zero positives") {
    DetectorConfig cfg;
    cfg.num_known = 3;
    const std::vector<GtBox> gts = {{Box{8, 8, 24, 28}, 1}, {Box{40, 36, 60, 56}, 2}};
    const auto targets = assign_targets(gts, 64, 64, cfg);
    REQUIRE(targets.num_pos > 0);

    DenseOutput out;
    out.hf = out.wf = 8;
    out.stride = 8;
    out.objectness = Tensor({1, 8, 8});
    out.cat_logits = Tensor({3, 8, 8});
    out.box_raw = Tensor({4, 8, 8}, 1.0);
    out.box_offsets = Tensor({4, 8, 8}, softplus(1.0));
    out.embeddings = Tensor({2, 8, 8});
    const int cells = 64;
    for (int i = 0; i < cells; ++i) {
        const bool pos = targets.category[i] >= 0;
        out.objectness[i] = pos ? 14.0 : -14.0;
        for (int k = 0; k < 3; ++k)
            out.cat_logits[k * cells + i] = (pos && targets.category[i] == k) ? 14.0 : -14.0;
        if (pos)
            for (int k = 0; k < 4; ++k) {
                out.box_offsets[k * cells + i] = targets.ltrb[i][k];
                out.box_raw[k * cells + i] = inv_softplus(targets.ltrb[i][k]);
            }
    }
    const auto res = detection_loss(out, targets);
    CHECK(res.box == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(res.category < 1e-3);
    CHECK(res.objectness < 1e-3);

    // zero positives: only the objectness term remains
    const auto none = assign_targets({}, 64, 64, cfg);
    const auto res2 = detection_loss(out, none);
    CHECK(res2.category == 0.0);
    CHECK(res2.box == 0.0);
    CHECK(res2.total == res2.objectness);
}

TEST_CASE("detection_loss positive for random init on non-empty scenes") {
    DetectorConfig cfg = tiny_config();
    DetectorNet net(cfg);
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        Rng rng(seed, 0);
        const auto params = net.init_params(rng);
        const auto img = random_image(rng, 32, 32);
        const auto acts = net.forward(params, img);
        const std::vector<GtBox> gts = {{Box{4, 4, 16, 16}, 0}, {Box{18, 14, 30, 30}, 1}};
        const auto targets = assign_targets(gts, 32, 32, cfg);
        const auto res = detection_loss(acts.out, targets);
        CHECK(res.total > 0.0);
        CHECK(res.objectness >= 0.0);
        CHECK(res.category >= 0.0);
        CHECK(res.box >= 0.0);
        CHECK(std::isfinite(res.total));
    }
}

TEST_CASE("detection_loss gradients match central finite differences") {
    DetectorConfig cfg = tiny_config();
    DetectorNet net(cfg);
    const std::vector<GtBox> gts = {{Box{3, 5, 14, 15}, 0}, {Box{17, 13, 31, 29}, 1}};
    const auto targets = assign_targets(gts, 32, 32, cfg);
    REQUIRE(targets.num_pos > 0);

    for (std::uint64_t seed : {101ull, 202ull, 303ull}) {
        Rng rng(seed, 0);
        auto params = net.init_params(rng);
        CHECK(params.total_size() < 5000);
        const auto img = random_image(rng, 32, 32);

        auto grads = ParamDict::zeros_like(params);
        const auto acts = net.forward(params, img);
        const auto res = detection_loss(acts.out, targets);
        net.backward(params, acts, res.grads, grads);

        const double err = oracles::max_grad_rel_error(
            params, grads,
            [&](const ParamDict& p) {
                return detection_loss(net.forward(p, img).out, targets).total;
            });
        CHECK(err < 1e-4);
    }
}
