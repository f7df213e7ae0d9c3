#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "owd/detector.hpp"
#include "owd/embed_transfer.hpp"
#include "owd/synthdata.hpp"
#include "owd/tracker.hpp"
#include "owd/unknown_refine.hpp"

namespace owd {

struct OptimConfig {
    double lr = 0.03;
    double momentum = 0.9;
    std::string schedule = "constant";  // constant | cosine
};

/// Dataset generation knobs (gen-data command).
struct GenConfig {
    int num_scenes = 500;
    int num_sequences = 0;
    int sequence_length = 30;
};

/// Everything one run needs. A config file overrides any subset of fields;
/// unset fields keep these defaults.
struct TrainConfig {
    int epochs = 10;
    int batch_size = 8;
    std::uint64_t seed = 0;
    double lambda_det = 1.0;
    double lambda_refine = 1.0;
    double lambda_transfer = 1.0;
    bool enable_refine = true;
    bool enable_transfer = true;
    int warmup_epochs = 2;
    bool pseudo_objectness = true;  // mask-confirmed candidates keep objectness alive
    int train_scenes = 500;
    int val_scenes = 64;
    std::string dataset_path;  // empty: generate scenes in memory

    OptimConfig optim;
    DetectorConfig detector;
    RefineConfig refine;
    TransferConfig transfer;
    SceneSpec scene = SceneSpec::defaults();
    SegmenterConfig segmenter;
    TeacherConfig teacher;
    TrackerConfig tracker;
    GenConfig gen;
};

nlohmann::json to_json(const TrainConfig& cfg);

/// Defaults overlaid with the (possibly partial) json document. Throws
/// SchemaError on unknown top-level sections or malformed values.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::string& path);  // "" -> defaults

/// FNV-1a over the canonical serialized config.
std::string config_hash(const nlohmann::json& j);

}  // namespace owd
