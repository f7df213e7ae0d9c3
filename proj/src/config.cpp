#include "owd/config.hpp"

#include <fstream>

#include "owd/errors.hpp"

using nlohmann::json;

namespace owd {

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json scene_to_json(const SceneSpec& s) {
    json cats = json::array();
    for (const auto& c : s.categories)
        cats.push_back({{"id", c.id},
                        {"name", c.name},
                        {"shape", shape_name(c.shape)},
                        {"hue", {c.hue_lo, c.hue_hi}},
                        {"textured", c.textured},
                        {"split", c.split == Split::Known ? "known" : "unknown"}});
    return {{"width", s.width},
            {"height", s.height},
            {"min_instances", s.min_instances},
            {"max_instances", s.max_instances},
            {"max_overlap_iou", s.max_overlap_iou},
            {"min_size", s.min_size},
            {"max_size", s.max_size},
            {"max_speed", s.max_speed},
            {"distinct_categories", s.distinct_categories},
            {"categories", cats}};
}

void scene_from_json(const json& j, SceneSpec& s) {
    get_if(j, "width", s.width);
    get_if(j, "height", s.height);
    get_if(j, "min_instances", s.min_instances);
    get_if(j, "max_instances", s.max_instances);
    get_if(j, "max_overlap_iou", s.max_overlap_iou);
    get_if(j, "min_size", s.min_size);
    get_if(j, "max_size", s.max_size);
    get_if(j, "max_speed", s.max_speed);
    get_if(j, "distinct_categories", s.distinct_categories);
    if (j.contains("categories")) {
        s.categories.clear();
        for (const auto& c : j.at("categories")) {
            CategorySpec cat;
            cat.id = c.at("id").get<int>();
            cat.name = c.value("name", "cat" + std::to_string(cat.id));
            const std::string shape = c.at("shape").get<std::string>();
            if (shape == "disc") cat.shape = ShapeKind::Disc;
            else if (shape == "square") cat.shape = ShapeKind::Square;
            else if (shape == "triangle") cat.shape = ShapeKind::Triangle;
            else if (shape == "ring") cat.shape = ShapeKind::Ring;
            else throw SchemaError("unknown shape: " + shape);
            if (c.contains("hue")) {
                cat.hue_lo = c.at("hue")[0].get<double>();
                cat.hue_hi = c.at("hue")[1].get<double>();
            }
            cat.textured = c.value("textured", false);
            const std::string split = c.at("split").get<std::string>();
            if (split != "known" && split != "unknown")
                throw SchemaError("bad category split: " + split);
            cat.split = split == "known" ? Split::Known : Split::Unknown;
            s.categories.push_back(cat);
        }
    }
}

}  // namespace

json to_json(const TrainConfig& cfg) {
    json j;
    j["train"] = {{"epochs", cfg.epochs},
                  {"batch_size", cfg.batch_size},
                  {"seed", cfg.seed},
                  {"lambda_det", cfg.lambda_det},
                  {"lambda_refine", cfg.lambda_refine},
                  {"lambda_transfer", cfg.lambda_transfer},
                  {"enable_refine", cfg.enable_refine},
                  {"enable_transfer", cfg.enable_transfer},
                  {"warmup_epochs", cfg.warmup_epochs},
                  {"pseudo_objectness", cfg.pseudo_objectness},
                  {"train_scenes", cfg.train_scenes},
                  {"val_scenes", cfg.val_scenes},
                  {"dataset", cfg.dataset_path}};
    j["optim"] = {{"lr", cfg.optim.lr},
                  {"momentum", cfg.optim.momentum},
                  {"schedule", cfg.optim.schedule}};
    j["detector"] = {{"embed_dim", cfg.detector.embed_dim},
                     {"trunk_channels", cfg.detector.trunk_channels},
                     {"score_thresh", cfg.detector.score_thresh},
                     {"nms_thresh", cfg.detector.nms_thresh},
                     {"topk", cfg.detector.topk},
                     {"unknown_margin", cfg.detector.unknown_margin},
                     {"center_sampling", cfg.detector.center_sampling}};
    j["refine"] = {{"tau_obj", cfg.refine.tau_obj},
                   {"tau_iou", cfg.refine.tau_iou},
                   {"lambda_l1", cfg.refine.lambda_l1},
                   {"lambda_giou", cfg.refine.lambda_giou},
                   {"max_candidates", cfg.refine.max_candidates},
                   {"known_iou_gate", cfg.refine.known_iou_gate}};
    j["transfer"] = {{"tau_t", cfg.transfer.tau_t},
                     {"loss_kind",
                      cfg.transfer.loss_kind == TransferConfig::LossKind::RowKL ? "row_kl"
                                                                                : "matrix_mse"},
                     {"lambda_transfer", cfg.transfer.lambda_transfer},
                     {"min_instances", cfg.transfer.min_instances}};
    j["scene"] = scene_to_json(cfg.scene);
    j["segmenter"] = {{"radius", cfg.segmenter.radius},
                      {"drop_prob", cfg.segmenter.drop_prob},
                      {"seed", cfg.segmenter.seed}};
    j["teacher"] = {{"stride", cfg.teacher.stride},
                    {"feat_dim", cfg.teacher.feat_dim},
                    {"sigma", cfg.teacher.sigma},
                    {"seed", cfg.teacher.seed}};
    j["tracker"] = {{"sim_thresh", cfg.tracker.sim_thresh},
                    {"iou_gate", cfg.tracker.iou_gate},
                    {"max_misses", cfg.tracker.max_misses},
                    {"ema_alpha", cfg.tracker.ema_alpha},
                    {"birth_score", cfg.tracker.birth_score}};
    j["gen"] = {{"num_scenes", cfg.gen.num_scenes},
                {"num_sequences", cfg.gen.num_sequences},
                {"sequence_length", cfg.gen.sequence_length}};
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    static const char* known_sections[] = {"train",    "optim",   "detector", "refine",
                                           "transfer", "scene",   "segmenter", "teacher",
                                           "tracker",  "gen"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* s : known_sections) ok = ok || key == s;
        if (!ok) throw SchemaError("unknown config section: " + key);
    }

    TrainConfig cfg;
    try {
        if (j.contains("train")) {
            const json& t = j.at("train");
            get_if(t, "epochs", cfg.epochs);
            get_if(t, "batch_size", cfg.batch_size);
            get_if(t, "seed", cfg.seed);
            get_if(t, "lambda_det", cfg.lambda_det);
            get_if(t, "lambda_refine", cfg.lambda_refine);
            get_if(t, "lambda_transfer", cfg.lambda_transfer);
            get_if(t, "enable_refine", cfg.enable_refine);
            get_if(t, "enable_transfer", cfg.enable_transfer);
            get_if(t, "warmup_epochs", cfg.warmup_epochs);
            get_if(t, "pseudo_objectness", cfg.pseudo_objectness);
            get_if(t, "train_scenes", cfg.train_scenes);
            get_if(t, "val_scenes", cfg.val_scenes);
            get_if(t, "dataset", cfg.dataset_path);
        }
        if (j.contains("optim")) {
            const json& t = j.at("optim");
            get_if(t, "lr", cfg.optim.lr);
            get_if(t, "momentum", cfg.optim.momentum);
            get_if(t, "schedule", cfg.optim.schedule);
        }
        if (j.contains("detector")) {
            const json& t = j.at("detector");
            get_if(t, "embed_dim", cfg.detector.embed_dim);
            get_if(t, "trunk_channels", cfg.detector.trunk_channels);
            get_if(t, "score_thresh", cfg.detector.score_thresh);
            get_if(t, "nms_thresh", cfg.detector.nms_thresh);
            get_if(t, "topk", cfg.detector.topk);
            get_if(t, "unknown_margin", cfg.detector.unknown_margin);
            get_if(t, "center_sampling", cfg.detector.center_sampling);
        }
        if (j.contains("refine")) {
            const json& t = j.at("refine");
            get_if(t, "tau_obj", cfg.refine.tau_obj);
            get_if(t, "tau_iou", cfg.refine.tau_iou);
            get_if(t, "lambda_l1", cfg.refine.lambda_l1);
            get_if(t, "lambda_giou", cfg.refine.lambda_giou);
            get_if(t, "max_candidates", cfg.refine.max_candidates);
            get_if(t, "known_iou_gate", cfg.refine.known_iou_gate);
        }
        if (j.contains("transfer")) {
            const json& t = j.at("transfer");
            get_if(t, "tau_t", cfg.transfer.tau_t);
            if (t.contains("loss_kind")) {
                const std::string kind = t.at("loss_kind").get<std::string>();
                if (kind == "row_kl") cfg.transfer.loss_kind = TransferConfig::LossKind::RowKL;
                else if (kind == "matrix_mse")
                    cfg.transfer.loss_kind = TransferConfig::LossKind::MatrixMSE;
                else throw SchemaError("unknown transfer loss_kind: " + kind);
            }
            get_if(t, "lambda_transfer", cfg.transfer.lambda_transfer);
            get_if(t, "min_instances", cfg.transfer.min_instances);
        }
        if (j.contains("scene")) scene_from_json(j.at("scene"), cfg.scene);
        if (j.contains("segmenter")) {
            const json& t = j.at("segmenter");
            get_if(t, "radius", cfg.segmenter.radius);
            get_if(t, "drop_prob", cfg.segmenter.drop_prob);
            get_if(t, "seed", cfg.segmenter.seed);
        }
        if (j.contains("teacher")) {
            const json& t = j.at("teacher");
            get_if(t, "stride", cfg.teacher.stride);
            get_if(t, "feat_dim", cfg.teacher.feat_dim);
            get_if(t, "sigma", cfg.teacher.sigma);
            get_if(t, "seed", cfg.teacher.seed);
        }
        if (j.contains("tracker")) {
            const json& t = j.at("tracker");
            get_if(t, "sim_thresh", cfg.tracker.sim_thresh);
            get_if(t, "iou_gate", cfg.tracker.iou_gate);
            get_if(t, "max_misses", cfg.tracker.max_misses);
            get_if(t, "ema_alpha", cfg.tracker.ema_alpha);
            get_if(t, "birth_score", cfg.tracker.birth_score);
        }
        if (j.contains("gen")) {
            const json& t = j.at("gen");
            get_if(t, "num_scenes", cfg.gen.num_scenes);
            get_if(t, "num_sequences", cfg.gen.num_sequences);
            get_if(t, "sequence_length", cfg.gen.sequence_length);
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("config parse error: ") + e.what());
    }

    // classifier width is derived from the roster
    cfg.detector.num_known = cfg.scene.num_known();
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    if (path.empty()) return train_config_from_json(json::object());
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("config json error: ") + e.what());
    }
    return train_config_from_json(j);
}

std::string config_hash(const json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace owd
