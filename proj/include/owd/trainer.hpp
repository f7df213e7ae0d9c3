#pragma once

#include <string>
#include <vector>

#include "owd/checkpoint.hpp"
#include "owd/config.hpp"
#include "owd/evaluation.hpp"

namespace owd {

/// Per-term (unweighted) loss means plus bookkeeping counts.
struct LossBreakdown {
    double total = 0.0;  // lambda-weighted sum
    double det = 0.0;
    double refine = 0.0;
    double transfer = 0.0;
    int refine_pairs = 0;
    int transfer_instances = 0;
};

struct EpochStats {
    int epoch = 0;
    LossBreakdown loss;
    double val_urecall = 0.0;
};

struct RunManifest {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<EpochStats> epochs;
    std::string config_path;
    std::string checkpoint_path;
    std::string best_checkpoint_path;
    std::string metric_report_path;

    nlohmann::json to_json() const;
    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);  // SchemaError when missing/bad
};

/// Single-writer training loop for the combined objective
/// lambda_det * detection + lambda_refine * refine + lambda_transfer * transfer,
/// with momentum SGD and U-Recall model selection on a held-out split.
class Trainer {
public:
    explicit Trainer(TrainConfig cfg);

    const TrainConfig& config() const { return cfg_; }
    const DetectorNet& net() const { return net_; }

    std::vector<Scene> make_train_scenes() const;
    std::vector<Scene> make_val_scenes() const;

    /// Loss and (optionally) parameter gradients for one image at the
    /// given epoch (the refine/transfer terms gate on the warmup).
    LossBreakdown image_pass(const Scene& scene, const ParamDict& params, int epoch,
                             ParamDict* grads) const;

    /// One momentum-SGD update over a batch; mean loss breakdown.
    /// Throws NonFiniteError naming the offending term.
    LossBreakdown train_step(const std::vector<const Scene*>& batch, ParamDict& params,
                             ParamDict& momentum, int epoch, double lr) const;

    double learning_rate(int epoch) const;

    /// U-Recall@0.5 of the current parameters on the given scenes.
    double validate(const ParamDict& params, const std::vector<Scene>& scenes) const;

    /// Full detection + discovery metrics (mAP, U-Recall, unknown NMI/purity).
    MetricReport evaluate(const ParamDict& params, const std::vector<Scene>& scenes) const;

    /// Run the whole loop, writing config.json, manifest.json, checkpoints,
    /// metric_report.json and metrics.csv under out_dir.
    RunManifest train(const std::string& out_dir, const std::string& resume_path = "");

private:
    TrainConfig cfg_;
    DetectorNet net_;
};

/// L2-normalized student embeddings read at each box's center cell.
std::vector<std::vector<double>> embeddings_at_boxes(const DenseOutput& out,
                                                     const std::vector<Box>& boxes);

/// Deterministic per-scene seed streams (train/val/track splits).
std::uint64_t scene_stream_seed(std::uint64_t base, int split, int index);

}  // namespace owd
