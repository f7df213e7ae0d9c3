#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "owd/detector.hpp"
#include "owd/embed_transfer.hpp"
#include "owd/geometry.hpp"
#include "owd/imageio.hpp"

namespace owd {

enum class Split { Known, Unknown };
enum class ShapeKind { Disc, Square, Triangle, Ring };

struct CategorySpec {
    int id = 0;
    ShapeKind shape = ShapeKind::Disc;
    double hue_lo = 0.0, hue_hi = 30.0;  // degrees; may wrap past 360
    bool textured = false;
    Split split = Split::Known;
    std::string name;
};

struct SceneSpec {
    int width = 64, height = 64;
    int min_instances = 2, max_instances = 6;
    double max_overlap_iou = 0.2;
    int min_size = 12, max_size = 28;
    double max_speed = 2.0;          // px/frame, sequences only
    bool distinct_categories = false;  // at most one instance per category
    std::vector<CategorySpec> categories;

    /// 4 known + 4 unknown categories. The unknowns share one color family
    /// and differ only in shape, so discovering them requires more than a
    /// color histogram.
    static SceneSpec defaults();

    int num_known() const;
    int num_unknown() const;
    const CategorySpec* category(int id) const;
};

struct AnnotationRecord {
    Box box;
    int category = 0;
    Split split = Split::Known;
    BinaryMask mask;  // full-image size
    int track_id = 0;
};

struct Scene {
    int width = 0, height = 0;
    ImageU8 image;
    std::vector<AnnotationRecord> records;
    std::uint64_t scene_seed = 0;
    std::uint64_t sequence_seed = 0;  // == scene_seed outside sequences
    int sequence_id = -1;             // -1 for standalone scenes
    int frame = 0;

    Tensor to_input() const;  // [3][H][W], values in [0,1]
    std::vector<GtBox> known_gt() const;
    std::vector<Box> known_gt_boxes() const;
};

/// Fully determined by (seed, spec). Throws PlacementFailure if the
/// overlap cap cannot be satisfied within 1000 attempts per instance.
Scene generate_scene(std::uint64_t seed, const SceneSpec& spec);

/// Constant per-track velocity with border bounces; category, size and
/// track id stay fixed across frames. The overlap cap applies to frame 0
/// placement only (tracks may cross later).
std::vector<Scene> generate_sequence(std::uint64_t seed, const SceneSpec& spec, int length);

/// Closed-form bounce kinematics: the position reached after traveling to
/// unclamped coordinate p inside [lo, hi] with elastic reflection.
double reflect_position(double p, double lo, double hi);

/// Stand-in for a promptable segmenter: ground-truth masks, optionally
/// dilated (radius > 0) or eroded (radius < 0) and dropped with
/// probability drop_prob. Dropped masks are removed from the list.
struct SegmenterConfig {
    int radius = 0;
    double drop_prob = 0.0;
    std::uint64_t seed = 0;
};
std::vector<BinaryMask> oracle_segmenter(const Scene& scene, const SegmenterConfig& cfg);

/// Stand-in for a frozen VFM: cells inside an instance carry that
/// category's fixed unit prototype plus per-instance seeded Gaussian noise
/// (stable across frames of a sequence), background cells carry the
/// background prototype.
struct TeacherConfig {
    int stride = 4;
    int feat_dim = 16;
    double sigma = 0.05;
    std::uint64_t seed = 0;
};
TeacherFeatureMap oracle_teacher(const Scene& scene, const TeacherConfig& cfg);

/// The prototype assigned to a category (id = -1 for background).
std::vector<double> teacher_prototype(int category_id, int feat_dim);

struct Dataset {
    SceneSpec spec;
    std::vector<Scene> scenes;
};

/// COCO-style annotations.json plus PPM images and per-instance PGM masks.
void serialize_dataset(const std::vector<Scene>& scenes, const SceneSpec& spec,
                       const std::string& dir);
Dataset load_dataset(const std::string& dir);

const char* shape_name(ShapeKind k);

}  // namespace owd
