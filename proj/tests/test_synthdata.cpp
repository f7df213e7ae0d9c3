#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "owd/embed_transfer.hpp"
#include "owd/errors.hpp"
#include "owd/rng.hpp"
#include "owd/synthdata.hpp"

using namespace owd;
namespace fs = std::filesystem;

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

bool records_equal(const AnnotationRecord& a, const AnnotationRecord& b) {
    return a.box == b.box && a.category == b.category && a.split == b.split &&
           a.track_id == b.track_id && a.mask.cells == b.mask.cells;
}

}  // namespace

TEST_CASE("generate_scene is deterministic and respects the spec") {
    const SceneSpec spec = SceneSpec::defaults();
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Scene a = generate_scene(seed, spec);
        CHECK(static_cast<int>(a.records.size()) >= spec.min_instances);
        CHECK(static_cast<int>(a.records.size()) <= spec.max_instances);
        for (const auto& r : a.records) {
            CHECK(mask_to_box(r.mask) == r.box);  // by-construction invariant
            CHECK(r.box.x1 >= 0);
            CHECK(r.box.y1 >= 0);
            CHECK(r.box.x2 <= spec.width);
            CHECK(r.box.y2 <= spec.height);
        }
        if (seed < 10) {
            const Scene b = generate_scene(seed, spec);
            CHECK(a.image.pixels == b.image.pixels);
            REQUIRE(a.records.size() == b.records.size());
            for (std::size_t i = 0; i < a.records.size(); ++i)
                CHECK(records_equal(a.records[i], b.records[i]));
        }
    }
}

TEST_CASE("placement honors the pairwise overlap cap") {
    const SceneSpec spec = SceneSpec::defaults();
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Scene s = generate_scene(seed, spec);
        for (std::size_t i = 0; i < s.records.size(); ++i)
            for (std::size_t j = i + 1; j < s.records.size(); ++j)
                CHECK(iou(s.records[i].box, s.records[j].box) <= spec.max_overlap_iou + 1e-9);
    }
}

TEST_CASE("impossible placement raises PlacementFailure") {
    SceneSpec spec = SceneSpec::defaults();
    spec.width = spec.height = 16;
    spec.min_size = 14;
    spec.max_size = 16;
    spec.min_instances = spec.max_instances = 6;
    spec.max_overlap_iou = 0.0;
    CHECK_THROWS_AS(generate_scene(0, spec), PlacementFailure);
}

TEST_CASE("unknown-split instances are present in images but hidden from training gt") {
    const SceneSpec spec = SceneSpec::defaults();
    int unknown_seen = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Scene s = generate_scene(seed, spec);
        const auto known = s.known_gt();
        for (const auto& g : known)
            CHECK(spec.category(g.category)->split == Split::Known);
        for (const auto& r : s.records)
            if (r.split == Split::Unknown) {
                ++unknown_seen;
                for (const auto& g : known) CHECK(!(g.box == r.box));
            }
    }
    CHECK(unknown_seen > 50);  // the open-world premise: unknowns are common
}

TEST_CASE("oracle_segmenter: identity, dropout, dilation growth") {
    const SceneSpec spec = SceneSpec::defaults();
    const Scene s = generate_scene(5, spec);

    SUBCASE("r=0 p=0 returns ground-truth masks") {
        const auto masks = oracle_segmenter(s, {0, 0.0, 7});
        REQUIRE(masks.size() == s.records.size());
        for (std::size_t i = 0; i < masks.size(); ++i)
            CHECK(masks[i].cells == s.records[i].mask.cells);
    }
    SUBCASE("p=1 drops everything") {
        CHECK(oracle_segmenter(s, {0, 1.0, 7}).empty());
    }
    SUBCASE("r=1 grows each box by at most one pixel per side") {
        const auto masks = oracle_segmenter(s, {1, 0.0, 7});
        REQUIRE(masks.size() == s.records.size());
        for (std::size_t i = 0; i < masks.size(); ++i) {
            const Box b0 = s.records[i].box;
            const Box b1 = mask_to_box(masks[i]);
            CHECK(b1.x1 >= b0.x1 - 1);
            CHECK(b1.y1 >= b0.y1 - 1);
            CHECK(b1.x2 <= b0.x2 + 1);
            CHECK(b1.y2 <= b0.y2 + 1);
            CHECK(b1.x1 <= b0.x1);
            CHECK(b1.y2 >= b0.y2 - 1e-9);
        }
    }
    SUBCASE("erosion shrinks and is deterministic") {
        const auto a = oracle_segmenter(s, {-1, 0.0, 7});
        const auto b = oracle_segmenter(s, {-1, 0.0, 7});
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].cells == b[i].cells);
            CHECK(a[i].popcount() <= s.records[i].mask.popcount());
        }
    }
    SUBCASE("dropout is deterministic given seed") {
        const auto a = oracle_segmenter(s, {0, 0.5, 123});
        const auto b = oracle_segmenter(s, {0, 0.5, 123});
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].cells == b[i].cells);
    }
}

TEST_CASE("oracle_teacher: prototype structure") {
    SceneSpec spec = SceneSpec::defaults();
    spec.min_instances = spec.max_instances = 4;

    SUBCASE("sigma=0: same-category instances pool to cosine 1") {
        // find a scene with two same-category instances
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            const Scene s = generate_scene(seed, spec);
            int a = -1, b = -1;
            for (std::size_t i = 0; i < s.records.size() && b < 0; ++i)
                for (std::size_t j = i + 1; j < s.records.size() && b < 0; ++j)
                    if (s.records[i].category == s.records[j].category) {
                        a = static_cast<int>(i);
                        b = static_cast<int>(j);
                    }
            if (b < 0) continue;
            TeacherConfig tc;
            tc.sigma = 0.0;
            const auto f = oracle_teacher(s, tc);
            // pool over the exact single center cell of each instance to
            // avoid background dilution
            const Box ba = s.records[static_cast<std::size_t>(a)].box;
            const Box bb = s.records[static_cast<std::size_t>(b)].box;
            const Box ca{ba.cx(), ba.cy(), ba.cx(), ba.cy()};
            const Box cb{bb.cx(), bb.cy(), bb.cx(), bb.cy()};
            const auto pooled = roi_pool_teacher(f, {ca, cb});
            CHECK(cosine(pooled[0], pooled[1]) == doctest::Approx(1.0).epsilon(1e-9));
            return;
        }
        FAIL("no scene with duplicate categories found");
    }
    SUBCASE("sigma=0: different categories give the prototype dot product") {
        const Scene s = generate_scene(3, spec);
        TeacherConfig tc;
        tc.sigma = 0.0;
        const auto f = oracle_teacher(s, tc);
        for (std::size_t i = 0; i < s.records.size(); ++i)
            for (std::size_t j = i + 1; j < s.records.size(); ++j) {
                if (s.records[i].category == s.records[j].category) continue;
                const Box bi = s.records[i].box, bj = s.records[j].box;
                const auto pooled = roi_pool_teacher(
                    f, {{bi.cx(), bi.cy(), bi.cx(), bi.cy()}, {bj.cx(), bj.cy(), bj.cx(), bj.cy()}});
                const auto pa = teacher_prototype(s.records[i].category, tc.feat_dim);
                const auto pb = teacher_prototype(s.records[j].category, tc.feat_dim);
                CHECK(cosine(pooled[0], pooled[1]) ==
                      doctest::Approx(cosine(pa, pb)).epsilon(1e-9));
            }
    }
    SUBCASE("sigma=0.05: within-category cosine beats cross-category on average") {
        TeacherConfig tc;  // sigma 0.05
        double within = 0.0, cross = 0.0;
        int nw = 0, nc = 0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const Scene s = generate_scene(seed, spec);
            std::vector<Box> boxes;
            for (const auto& r : s.records) boxes.push_back(r.box);
            const auto pooled = roi_pool_teacher(oracle_teacher(s, tc), boxes);
            for (std::size_t i = 0; i < boxes.size(); ++i)
                for (std::size_t j = i + 1; j < boxes.size(); ++j) {
                    const double c = cosine(pooled[i], pooled[j]);
                    if (s.records[i].category == s.records[j].category) {
                        within += c;
                        ++nw;
                    } else {
                        cross += c;
                        ++nc;
                    }
                }
        }
        REQUIRE(nw > 0);
        REQUIRE(nc > 0);
        CHECK(within / nw > cross / nc + 0.2);
    }
    SUBCASE("noise is stable per track across frames") {
        SceneSpec sp = SceneSpec::defaults();
        sp.min_instances = sp.max_instances = 3;
        const auto frames = generate_sequence(9, sp, 6);
        TeacherConfig tc;
        for (const auto& rec0 : frames[0].records) {
            const auto e0 = roi_pool_teacher(oracle_teacher(frames[0], tc), {rec0.box})[0];
            for (const auto& rec5 : frames[5].records) {
                if (rec5.track_id != rec0.track_id) continue;
                const auto e5 = roi_pool_teacher(oracle_teacher(frames[5], tc), {rec5.box})[0];
                CHECK(cosine(e0, e5) > 0.9);
            }
        }
    }
}

TEST_CASE("generate_sequence: lengths, static case, track consistency") {
    SceneSpec spec = SceneSpec::defaults();

    SUBCASE("length 1 is a single scene") {
        const auto frames = generate_sequence(4, spec, 1);
        CHECK(frames.size() == 1);
        CHECK(frames[0].frame == 0);
    }
    SUBCASE("zero velocity keeps annotations identical") {
        spec.max_speed = 0.0;
        const auto frames = generate_sequence(4, spec, 5);
        for (std::size_t t = 1; t < frames.size(); ++t) {
            REQUIRE(frames[t].records.size() == frames[0].records.size());
            for (std::size_t i = 0; i < frames[t].records.size(); ++i)
                CHECK(records_equal(frames[t].records[i], frames[0].records[i]));
        }
    }
    SUBCASE("track ids are stable with constant category and bounded motion") {
        const auto frames = generate_sequence(11, spec, 20);
        for (std::size_t t = 1; t < frames.size(); ++t) {
            REQUIRE(frames[t].records.size() == frames[0].records.size());
            for (std::size_t i = 0; i < frames[t].records.size(); ++i) {
                const auto& cur = frames[t].records[i];
                const auto& prev = frames[t - 1].records[i];
                CHECK(cur.track_id == prev.track_id);
                CHECK(cur.category == prev.category);
                // continuous motion: at most max_speed plus rounding slack
                CHECK(std::abs(cur.box.x1 - prev.box.x1) <= spec.max_speed + 1.0);
                CHECK(std::abs(cur.box.y1 - prev.box.y1) <= spec.max_speed + 1.0);
            }
        }
    }
}

TEST_CASE("reflect_position equals a step-wise bounce simulation") {
    Rng rng(101, 0);
    for (int trial = 0; trial < 200; ++trial) {
        const double lo = 0.0;
        const double hi = rng.uniform(1.0, 40.0);
        const double x0 = rng.uniform(lo, hi);
        const double v = rng.uniform(-3.0, 3.0);
        const int t = static_cast<int>(rng.uniform_int(0, 60));

        // oracle: integrate in 1000 substeps per frame, reflecting velocity
        double pos = x0, vel = v;
        const int sub = 1000;
        for (int s = 0; s < t * sub; ++s) {
            pos += vel / sub;
            if (pos > hi) {
                pos = hi - (pos - hi);
                vel = -vel;
            } else if (pos < lo) {
                pos = lo + (lo - pos);
                vel = -vel;
            }
        }
        CHECK(reflect_position(x0 + v * t, lo, hi) == doctest::Approx(pos).epsilon(1e-6));
    }
    // degenerate interval pins to lo
    CHECK(reflect_position(12.3, 5.0, 5.0) == 5.0);
}

TEST_CASE("dataset serialization round trip") {
    const SceneSpec spec = SceneSpec::defaults();
    std::vector<Scene> scenes;
    for (std::uint64_t seed = 0; seed < 3; ++seed) scenes.push_back(generate_scene(seed, spec));
    auto frames = generate_sequence(77, spec, 2);
    for (auto& f : frames) {
        f.sequence_id = 0;
        scenes.push_back(std::move(f));
    }

    const fs::path dir = fs::path("test_tmp") / "roundtrip";
    fs::remove_all(dir);
    serialize_dataset(scenes, spec, dir.string());
    const Dataset ds = load_dataset(dir.string());

    REQUIRE(ds.scenes.size() == scenes.size());
    CHECK(ds.spec.categories.size() == spec.categories.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        CHECK(ds.scenes[i].image.pixels == scenes[i].image.pixels);
        CHECK(ds.scenes[i].scene_seed == scenes[i].scene_seed);
        CHECK(ds.scenes[i].sequence_seed == scenes[i].sequence_seed);
        CHECK(ds.scenes[i].sequence_id == scenes[i].sequence_id);
        CHECK(ds.scenes[i].frame == scenes[i].frame);
        REQUIRE(ds.scenes[i].records.size() == scenes[i].records.size());
        for (std::size_t k = 0; k < scenes[i].records.size(); ++k)
            CHECK(records_equal(ds.scenes[i].records[k], scenes[i].records[k]));
    }
}

TEST_CASE("empty dataset round trips") {
    const fs::path dir = fs::path("test_tmp") / "empty";
    fs::remove_all(dir);
    serialize_dataset({}, SceneSpec::defaults(), dir.string());
    const Dataset ds = load_dataset(dir.string());
    CHECK(ds.scenes.empty());
}

TEST_CASE("hand-edited category id raises SchemaError") {
    const SceneSpec spec = SceneSpec::defaults();
    const fs::path dir = fs::path("test_tmp") / "badcat";
    fs::remove_all(dir);
    serialize_dataset({generate_scene(1, spec)}, spec, dir.string());

    const fs::path ann = dir / "annotations.json";
    nlohmann::json j;
    {
        std::ifstream f(ann);
        f >> j;
    }
    j["annotations"][0]["category_id"] = 99;
    {
        std::ofstream f(ann);
        f << j.dump(2);
    }
    CHECK_THROWS_AS(load_dataset(dir.string()), SchemaError);
}

TEST_CASE("missing annotations file raises IoError") {
    CHECK_THROWS_AS(load_dataset("test_tmp/definitely_missing"), IoError);
}
