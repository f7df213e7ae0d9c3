#include "owd/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "owd/errors.hpp"
#include "owd/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace owd {

namespace {

struct Rgb {
    std::uint8_t r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
    const double m = v - c;
    double r = 0, g = 0, b = 0;
    if (h < 60) {
        r = c; g = x;
    } else if (h < 120) {
        r = x; g = c;
    } else if (h < 180) {
        g = c; b = x;
    } else if (h < 240) {
        g = x; b = c;
    } else if (h < 300) {
        r = x; b = c;
    } else {
        r = c; b = x;
    }
    auto q = [m](double u) {
        return static_cast<std::uint8_t>(std::clamp((u + m) * 255.0 + 0.5, 0.0, 255.0));
    };
    return {q(r), q(g), q(b)};
}

bool inside_shape(ShapeKind kind, double u, double v) {
    switch (kind) {
        case ShapeKind::Square:
            return u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0;
        case ShapeKind::Disc: {
            const double du = (u - 0.5) * 2.0, dv = (v - 0.5) * 2.0;
            return du * du + dv * dv <= 1.0;
        }
        case ShapeKind::Triangle:
            return v >= 0.0 && v <= 1.0 && std::abs(u - 0.5) <= 0.5 * v;
        case ShapeKind::Ring: {
            const double du = (u - 0.5) * 2.0, dv = (v - 0.5) * 2.0;
            const double rho = std::sqrt(du * du + dv * dv);
            return rho <= 1.0 && rho >= 0.55;
        }
    }
    return false;
}

struct ObjState {
    int category = 0;
    int w = 0, h = 0;       // bbox extent in px
    double x0 = 0, y0 = 0;  // top-left at frame 0
    double vx = 0, vy = 0;
    double hue = 0, sat = 0, val = 0;
    int track_id = 0;
};

void render_object(const SceneSpec& spec, const ObjState& o, int ix, int iy, ImageU8& img,
                   BinaryMask& mask) {
    const CategorySpec* cat = spec.category(o.category);
    const Rgb base = hsv_to_rgb(o.hue, o.sat, o.val);
    const Rgb dim = hsv_to_rgb(o.hue, o.sat, o.val * 0.7);
    for (int py = std::max(0, iy); py < std::min(spec.height, iy + o.h); ++py) {
        for (int px = std::max(0, ix); px < std::min(spec.width, ix + o.w); ++px) {
            const double u = (px + 0.5 - ix) / o.w;
            const double v = (py + 0.5 - iy) / o.h;
            if (!inside_shape(cat->shape, u, v)) continue;
            mask.at(py, px) = 1;
            const Rgb c = (cat->textured && (px + py) % 4 < 2) ? dim : base;
            img.at(py, px, 0) = c.r;
            img.at(py, px, 1) = c.g;
            img.at(py, px, 2) = c.b;
        }
    }
}

void paint_background(ImageU8& img, Rng rng) {
    for (int py = 0; py < img.height; ++py)
        for (int px = 0; px < img.width; ++px) {
            const int v = 205 + static_cast<int>(rng.uniform_int(-8, 8));
            const auto g = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
            img.at(py, px, 0) = g;
            img.at(py, px, 1) = g;
            img.at(py, px, 2) = g;
        }
}

// Box of object o at frame t under bounce kinematics, integer-placed.
Box box_at_frame(const ObjState& o, const SceneSpec& spec, int t) {
    const double fx =
        reflect_position(o.x0 + o.vx * t, 0.0, static_cast<double>(spec.width - o.w));
    const double fy =
        reflect_position(o.y0 + o.vy * t, 0.0, static_cast<double>(spec.height - o.h));
    const double ix = static_cast<double>(std::lround(fx));
    const double iy = static_cast<double>(std::lround(fy));
    return Box{ix, iy, ix + o.w, iy + o.h};
}

// Sequential rejection placement. The overlap cap is a SceneSpec invariant
// and must hold on every frame, so for sequences each object's position
// AND velocity are drawn against the already-fixed trajectories; velocity
// magnitudes decay over attempts (slow objects always fit somewhere).
std::vector<ObjState> place_objects(std::uint64_t seed, const SceneSpec& spec, int length) {
    Rng rng(seed, 0x5ce9e5);
    int n = static_cast<int>(rng.uniform_int(spec.min_instances, spec.max_instances));
    if (spec.distinct_categories) n = std::min(n, static_cast<int>(spec.categories.size()));
    std::vector<ObjState> objs;
    std::vector<char> used_cat(spec.categories.size(), 0);
    for (int i = 0; i < n; ++i) {
        std::vector<std::size_t> pool;
        for (std::size_t c = 0; c < spec.categories.size(); ++c)
            if (!spec.distinct_categories || !used_cat[c]) pool.push_back(c);
        bool ok = false;
        for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
            ObjState o;
            o.track_id = i;
            const std::size_t ci = pool[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
            o.category = spec.categories[ci].id;
            o.w = static_cast<int>(rng.uniform_int(spec.min_size, spec.max_size));
            o.h = static_cast<int>(rng.uniform_int(spec.min_size, spec.max_size));
            if (o.w > spec.width || o.h > spec.height) continue;
            o.x0 = static_cast<double>(rng.uniform_int(0, spec.width - o.w));
            o.y0 = static_cast<double>(rng.uniform_int(0, spec.height - o.h));
            if (length > 1) {
                const double scale = 1.0 / (1.0 + attempt / 50.0);
                o.vx = scale * rng.uniform(-spec.max_speed, spec.max_speed);
                o.vy = scale * rng.uniform(-spec.max_speed, spec.max_speed);
            }
            bool overlap = false;
            for (int t = 0; t < length && !overlap; ++t) {
                const Box bt = box_at_frame(o, spec, t);
                for (const ObjState& other : objs)
                    if (iou(bt, box_at_frame(other, spec, t)) > spec.max_overlap_iou) {
                        overlap = true;
                        break;
                    }
            }
            if (overlap) continue;
            const CategorySpec* cat = spec.category(o.category);
            o.hue = rng.uniform(cat->hue_lo, cat->hue_hi);
            o.sat = rng.uniform(0.65, 0.95);
            o.val = rng.uniform(0.6, 0.9);
            used_cat[ci] = 1;
            objs.push_back(o);
            ok = true;
        }
        if (!ok)
            throw PlacementFailure("could not satisfy overlap cap after 1000 attempts (instance " +
                                   std::to_string(i) + ")");
    }
    return objs;
}

Scene render_frame(std::uint64_t seed, const SceneSpec& spec, const std::vector<ObjState>& objs,
                   int frame, int sequence_id) {
    Scene scene;
    scene.width = spec.width;
    scene.height = spec.height;
    scene.sequence_seed = seed;
    scene.scene_seed = seed + 0x9e37 * static_cast<std::uint64_t>(frame);
    scene.sequence_id = sequence_id;
    scene.frame = frame;
    scene.image.height = spec.height;
    scene.image.width = spec.width;
    scene.image.pixels.assign(static_cast<std::size_t>(spec.height) * spec.width * 3, 0);
    paint_background(scene.image, Rng(seed, 0xb06));

    for (const ObjState& o : objs) {
        const double fx = reflect_position(o.x0 + o.vx * frame, 0.0, static_cast<double>(spec.width - o.w));
        const double fy = reflect_position(o.y0 + o.vy * frame, 0.0, static_cast<double>(spec.height - o.h));
        const int ix = static_cast<int>(std::lround(fx));
        const int iy = static_cast<int>(std::lround(fy));
        BinaryMask mask(spec.height, spec.width);
        render_object(spec, o, ix, iy, scene.image, mask);
        AnnotationRecord rec;
        rec.mask = std::move(mask);
        rec.box = mask_to_box(rec.mask);
        rec.category = o.category;
        rec.split = spec.category(o.category)->split;
        rec.track_id = o.track_id;
        scene.records.push_back(std::move(rec));
    }
    return scene;
}

}  // namespace

SceneSpec SceneSpec::defaults() {
    SceneSpec s;
    // The unknown categories share one color family sitting next to a
    // known hue: close enough that low-level filters fire on them, while
    // color alone cannot tell the unknown categories apart. Telling them
    // apart takes shape, which is what the embedding transfer has to earn.
    s.categories = {
        {0, ShapeKind::Disc, 0.0, 15.0, false, Split::Known, "red-disc"},
        {1, ShapeKind::Square, 105.0, 135.0, false, Split::Known, "green-square"},
        {2, ShapeKind::Triangle, 210.0, 240.0, false, Split::Known, "blue-triangle"},
        {3, ShapeKind::Ring, 45.0, 65.0, false, Split::Known, "yellow-ring"},
        {4, ShapeKind::Square, 315.0, 345.0, false, Split::Unknown, "magenta-square"},
        {5, ShapeKind::Triangle, 315.0, 345.0, false, Split::Unknown, "magenta-triangle"},
        {6, ShapeKind::Ring, 315.0, 345.0, false, Split::Unknown, "magenta-ring"},
        {7, ShapeKind::Disc, 315.0, 345.0, false, Split::Unknown, "magenta-disc"},
    };
    return s;
}

int SceneSpec::num_known() const {
    int n = 0;
    for (const auto& c : categories) n += c.split == Split::Known;
    return n;
}

int SceneSpec::num_unknown() const { return static_cast<int>(categories.size()) - num_known(); }

const CategorySpec* SceneSpec::category(int id) const {
    for (const auto& c : categories)
        if (c.id == id) return &c;
    return nullptr;
}

Tensor Scene::to_input() const {
    Tensor t({3, height, width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) t.at3(c, y, x) = image.at(y, x, c) / 255.0;
    return t;
}

std::vector<GtBox> Scene::known_gt() const {
    std::vector<GtBox> out;
    for (const auto& r : records)
        if (r.split == Split::Known) out.push_back({r.box, r.category});
    return out;
}

std::vector<Box> Scene::known_gt_boxes() const {
    std::vector<Box> out;
    for (const auto& r : records)
        if (r.split == Split::Known) out.push_back(r.box);
    return out;
}

double reflect_position(double p, double lo, double hi) {
    if (hi <= lo) return lo;
    const double period = 2.0 * (hi - lo);
    double q = std::fmod(p - lo, period);
    if (q < 0) q += period;
    return lo + (q <= hi - lo ? q : period - q);
}

Scene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
    const auto objs = place_objects(seed, spec, 1);
    return render_frame(seed, spec, objs, 0, -1);
}

std::vector<Scene> generate_sequence(std::uint64_t seed, const SceneSpec& spec, int length) {
    const auto objs = place_objects(seed, spec, length);
    std::vector<Scene> frames;
    frames.reserve(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t)
        frames.push_back(render_frame(seed, spec, objs, t, static_cast<int>(seed & 0x7fffffff)));
    return frames;
}

std::vector<BinaryMask> oracle_segmenter(const Scene& scene, const SegmenterConfig& cfg) {
    Rng rng(cfg.seed, scene.scene_seed);
    std::vector<BinaryMask> out;
    for (std::size_t k = 0; k < scene.records.size(); ++k) {
        if (rng.fork(k).uniform() < cfg.drop_prob) continue;
        BinaryMask m = scene.records[k].mask;
        const int steps = std::abs(cfg.radius);
        for (int s = 0; s < steps; ++s) {
            BinaryMask next(m.height, m.width);
            for (int r = 0; r < m.height; ++r)
                for (int c = 0; c < m.width; ++c) {
                    bool any = false, all = true;
                    for (int dr = -1; dr <= 1; ++dr)
                        for (int dc = -1; dc <= 1; ++dc) {
                            const int rr = r + dr, cc = c + dc;
                            const bool v = rr >= 0 && rr < m.height && cc >= 0 && cc < m.width &&
                                           m.at(rr, cc) != 0;
                            any = any || v;
                            all = all && v;
                        }
                    if (cfg.radius > 0)
                        next.at(r, c) = (m.at(r, c) || any) ? 1 : 0;
                    else
                        next.at(r, c) = (m.at(r, c) && all) ? 1 : 0;
                }
            m = std::move(next);
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<double> teacher_prototype(int category_id, int feat_dim) {
    std::vector<double> p(static_cast<std::size_t>(feat_dim), 0.0);
    const int slot = category_id < 0 ? 0 : 1 + category_id;
    p[static_cast<std::size_t>(slot % feat_dim)] = 1.0;
    return p;
}

TeacherFeatureMap oracle_teacher(const Scene& scene, const TeacherConfig& cfg) {
    TeacherFeatureMap map;
    map.stride = cfg.stride;
    const int ht = scene.height / cfg.stride;
    const int wt = scene.width / cfg.stride;
    map.features = Tensor({cfg.feat_dim, ht, wt});

    // per-instance noise, keyed by (teacher seed, sequence seed, track id)
    // so an instance keeps its vector across the frames of a sequence
    std::vector<std::vector<double>> noise(scene.records.size());
    for (std::size_t k = 0; k < scene.records.size(); ++k) {
        Rng rng = Rng(cfg.seed, scene.sequence_seed)
                      .fork(static_cast<std::uint64_t>(scene.records[k].track_id));
        noise[k].resize(static_cast<std::size_t>(cfg.feat_dim));
        for (auto& v : noise[k]) v = cfg.sigma * rng.normal();
    }

    const auto bg = teacher_prototype(-1, cfg.feat_dim);
    for (int r = 0; r < ht; ++r) {
        for (int c = 0; c < wt; ++c) {
            const int py = std::min(scene.height - 1,
                                    static_cast<int>((r + 0.5) * cfg.stride));
            const int px = std::min(scene.width - 1,
                                    static_cast<int>((c + 0.5) * cfg.stride));
            // cells covered by several instances average their vectors
            std::vector<double> acc(static_cast<std::size_t>(cfg.feat_dim), 0.0);
            int owners = 0;
            for (std::size_t k = 0; k < scene.records.size(); ++k) {
                if (!scene.records[k].mask.at(py, px)) continue;
                const auto proto =
                    teacher_prototype(scene.records[k].category, cfg.feat_dim);
                for (int d = 0; d < cfg.feat_dim; ++d)
                    acc[static_cast<std::size_t>(d)] +=
                        proto[static_cast<std::size_t>(d)] + noise[k][static_cast<std::size_t>(d)];
                ++owners;
            }
            if (owners == 0) {
                for (int d = 0; d < cfg.feat_dim; ++d)
                    map.features.at3(d, r, c) = bg[static_cast<std::size_t>(d)];
            } else {
                for (int d = 0; d < cfg.feat_dim; ++d)
                    map.features.at3(d, r, c) = acc[static_cast<std::size_t>(d)] / owners;
            }
        }
    }
    return map;
}

// ---------------------------------------------------------------------------
// serialization

const char* shape_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::Disc: return "disc";
        case ShapeKind::Square: return "square";
        case ShapeKind::Triangle: return "triangle";
        case ShapeKind::Ring: return "ring";
    }
    return "?";
}

namespace {

ShapeKind parse_shape(const std::string& s) {
    if (s == "disc") return ShapeKind::Disc;
    if (s == "square") return ShapeKind::Square;
    if (s == "triangle") return ShapeKind::Triangle;
    if (s == "ring") return ShapeKind::Ring;
    throw SchemaError("unknown shape kind: " + s);
}

json spec_to_json(const SceneSpec& spec) {
    json cats = json::array();
    for (const auto& c : spec.categories) {
        cats.push_back({{"id", c.id},
                        {"name", c.name},
                        {"shape", shape_name(c.shape)},
                        {"hue", {c.hue_lo, c.hue_hi}},
                        {"textured", c.textured},
                        {"split", c.split == Split::Known ? "known" : "unknown"}});
    }
    return json{{"width", spec.width},
                {"height", spec.height},
                {"min_instances", spec.min_instances},
                {"max_instances", spec.max_instances},
                {"max_overlap_iou", spec.max_overlap_iou},
                {"min_size", spec.min_size},
                {"max_size", spec.max_size},
                {"max_speed", spec.max_speed},
                {"distinct_categories", spec.distinct_categories},
                {"categories", cats}};
}

SceneSpec spec_from_json(const json& j) {
    SceneSpec spec;
    spec.width = j.at("width").get<int>();
    spec.height = j.at("height").get<int>();
    spec.min_instances = j.at("min_instances").get<int>();
    spec.max_instances = j.at("max_instances").get<int>();
    spec.max_overlap_iou = j.at("max_overlap_iou").get<double>();
    spec.min_size = j.at("min_size").get<int>();
    spec.max_size = j.at("max_size").get<int>();
    spec.max_speed = j.at("max_speed").get<double>();
    spec.distinct_categories = j.value("distinct_categories", false);
    spec.categories.clear();
    for (const auto& c : j.at("categories")) {
        CategorySpec cat;
        cat.id = c.at("id").get<int>();
        cat.name = c.at("name").get<std::string>();
        cat.shape = parse_shape(c.at("shape").get<std::string>());
        cat.hue_lo = c.at("hue")[0].get<double>();
        cat.hue_hi = c.at("hue")[1].get<double>();
        cat.textured = c.at("textured").get<bool>();
        const std::string split = c.at("split").get<std::string>();
        if (split != "known" && split != "unknown") throw SchemaError("bad split: " + split);
        cat.split = split == "known" ? Split::Known : Split::Unknown;
        spec.categories.push_back(cat);
    }
    return spec;
}

}  // namespace

void serialize_dataset(const std::vector<Scene>& scenes, const SceneSpec& spec,
                       const std::string& dir) {
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "images", ec);
    fs::create_directories(fs::path(dir) / "masks", ec);
    if (ec) throw IoError("cannot create dataset dirs under " + dir);

    json images = json::array();
    json annotations = json::array();
    int ann_id = 0;
    char buf[64];
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const Scene& s = scenes[i];
        std::snprintf(buf, sizeof(buf), "img_%06zu", i);
        const std::string stem = buf;
        write_ppm((fs::path(dir) / "images" / (stem + ".ppm")).string(), s.image);
        images.push_back({{"id", static_cast<int>(i)},
                          {"file_name", "images/" + stem + ".ppm"},
                          {"width", s.width},
                          {"height", s.height},
                          {"scene_seed", std::to_string(s.scene_seed)},
                          {"sequence_seed", std::to_string(s.sequence_seed)},
                          {"sequence_id", s.sequence_id},
                          {"frame", s.frame}});
        for (std::size_t k = 0; k < s.records.size(); ++k) {
            const auto& r = s.records[k];
            const std::string mask_file =
                "masks/" + stem + "_a" + std::to_string(k) + ".pgm";
            write_mask_pgm((fs::path(dir) / mask_file).string(), r.mask);
            annotations.push_back(
                {{"id", ann_id++},
                 {"image_id", static_cast<int>(i)},
                 {"category_id", r.category},
                 {"bbox", {r.box.x1, r.box.y1, r.box.width(), r.box.height()}},
                 {"area", r.box.area()},
                 {"track_id", r.track_id},
                 {"split", r.split == Split::Known ? "known" : "unknown"},
                 {"mask_file", mask_file}});
        }
    }
    json root{{"info", {{"generator", "owdkit"}, {"version", 1}}},
              {"spec", spec_to_json(spec)},
              {"images", images},
              {"annotations", annotations},
              {"categories", spec_to_json(spec).at("categories")}};
    std::ofstream f(fs::path(dir) / "annotations.json");
    if (!f) throw IoError("cannot write annotations.json under " + dir);
    f << root.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "annotations.json");
    if (!f) throw IoError("cannot open " + dir + "/annotations.json");
    json root;
    try {
        f >> root;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("annotations.json parse error: ") + e.what());
    }

    Dataset ds;
    try {
        ds.spec = spec_from_json(root.at("spec"));

        std::vector<int> roster;
        for (const auto& c : ds.spec.categories) roster.push_back(c.id);

        std::map<int, Scene> by_id;
        for (const auto& im : root.at("images")) {
            Scene s;
            s.width = im.at("width").get<int>();
            s.height = im.at("height").get<int>();
            s.image = read_ppm((fs::path(dir) / im.at("file_name").get<std::string>()).string());
            if (s.image.width != s.width || s.image.height != s.height)
                throw SchemaError("image dims mismatch for " +
                                  im.at("file_name").get<std::string>());
            s.scene_seed = std::stoull(im.at("scene_seed").get<std::string>());
            s.sequence_seed = std::stoull(im.at("sequence_seed").get<std::string>());
            s.sequence_id = im.at("sequence_id").get<int>();
            s.frame = im.at("frame").get<int>();
            by_id[im.at("id").get<int>()] = std::move(s);
        }

        for (const auto& an : root.at("annotations")) {
            const int image_id = an.at("image_id").get<int>();
            auto it = by_id.find(image_id);
            if (it == by_id.end())
                throw SchemaError("annotation references missing image " +
                                  std::to_string(image_id));
            AnnotationRecord rec;
            rec.category = an.at("category_id").get<int>();
            if (std::find(roster.begin(), roster.end(), rec.category) == roster.end())
                throw SchemaError("category id " + std::to_string(rec.category) +
                                  " not in roster");
            const auto& bb = an.at("bbox");
            rec.box = Box{bb[0].get<double>(), bb[1].get<double>(),
                          bb[0].get<double>() + bb[2].get<double>(),
                          bb[1].get<double>() + bb[3].get<double>()};
            rec.track_id = an.at("track_id").get<int>();
            const std::string split = an.at("split").get<std::string>();
            rec.split = split == "known" ? Split::Known : Split::Unknown;
            if (ds.spec.category(rec.category)->split != rec.split)
                throw SchemaError("annotation split disagrees with category split");
            rec.mask = read_mask_pgm(
                (fs::path(dir) / an.at("mask_file").get<std::string>()).string());
            it->second.records.push_back(std::move(rec));
        }

        for (auto& [id, scene] : by_id) ds.scenes.push_back(std::move(scene));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("annotations.json schema error: ") + e.what());
    }
    return ds;
}

}  // namespace owd
