#pragma once

#include <array>
#include <vector>

#include "owd/geometry.hpp"
#include "owd/nn.hpp"

namespace owd {

inline constexpr int kUnknownLabel = -1;

struct DetectorConfig {
    int num_known = 4;                           // K
    int embed_dim = 32;                          // D
    std::vector<int> trunk_channels = {16, 32, 32};  // one stride-2 conv per entry
    double score_thresh = 0.08;
    double nms_thresh = 0.5;
    int topk = 50;
    double unknown_margin = 0.95;  // argmax softmax prob below this => UNKNOWN
    double center_sampling = 0.5;  // fraction of the box counted as positive center region

    int stride() const { return 1 << static_cast<int>(trunk_channels.size()); }
};

/// Raw per-cell maps from one forward pass. objectness and cat_logits are
/// pre-sigmoid/softmax; box_offsets is post-softplus (always >= 0) with the
/// pre-activation kept alongside for the backward pass.
struct DenseOutput {
    int hf = 0, wf = 0, stride = 8;
    Tensor objectness;   // [1][Hf][Wf] logits
    Tensor cat_logits;   // [K][Hf][Wf]
    Tensor box_raw;      // [4][Hf][Wf] pre-activation
    Tensor box_offsets;  // [4][Hf][Wf] softplus(box_raw), order: l, t, r, b
    Tensor embeddings;   // [D][Hf][Wf]

    int cells() const { return hf * wf; }
    double cell_cx(int cell) const { return (cell % wf + 0.5) * stride; }
    double cell_cy(int cell) const { return (cell / wf + 0.5) * stride; }
};

/// Gradients with respect to the raw head maps (same layout as DenseOutput,
/// box part pre-activation).
struct HeadGrads {
    Tensor d_objectness, d_cat, d_box_raw, d_emb;

    static HeadGrads zeros_like(const DenseOutput& out) {
        HeadGrads g;
        g.d_objectness = Tensor(out.objectness.shape);
        g.d_cat = Tensor(out.cat_logits.shape);
        g.d_box_raw = Tensor(out.box_raw.shape);
        g.d_emb = Tensor(out.embeddings.shape);
        return g;
    }
    void accumulate(const HeadGrads& other, double scale);
};

/// One decoded detection. `cell` records the source grid cell so the
/// refine/transfer losses can route gradients back into the dense maps.
struct Instance {
    Box box;
    double objectness = 0.0;
    int label = kUnknownLabel;  // 0..K-1 or kUnknownLabel
    std::vector<double> embedding;  // unit norm
    int cell = -1;
    double known_conf = 0.0;  // max softmax prob over known categories
};

struct GtBox {
    Box box;
    int category = 0;
};

/// Cell marked as containing an object without any category or box
/// supervision (pseudo-labelled unknowns).
inline constexpr int kObjectnessOnly = -2;

/// Per-cell assignment produced by center sampling. category is a known
/// class id at full positives, -1 at negatives, kObjectnessOnly at cells
/// that only carry an objectness target of 1.
struct TargetMap {
    int hf = 0, wf = 0;
    std::vector<int> category;
    std::vector<std::array<double, 4>> ltrb;  // valid at full positives
    int num_pos = 0;                          // full positives only
};

/// Mark the center-sampled cells of `box` as objectness-positive unless
/// they already carry a full target.
void mark_objectness_positive(TargetMap& targets, const Box& box, const DetectorConfig& cfg);

struct DetectionLossResult {
    double total = 0.0;
    double objectness = 0.0;
    double category = 0.0;
    double box = 0.0;
    HeadGrads grads;
};

/// Single-scale dense detector: a short stride-2 conv trunk with four 1x1
/// heads (objectness / known categories / box offsets / embeddings).
class DetectorNet {
public:
    /// Forward context: everything backward() needs.
    struct Acts {
        int in_h = 0, in_w = 0;
        std::vector<Tensor> col;   // im2col buffer per trunk layer
        std::vector<Tensor> pre;   // pre-activation per trunk layer
        std::vector<Tensor> post;  // post-relu per trunk layer
        DenseOutput out;
    };

    explicit DetectorNet(DetectorConfig cfg);

    const DetectorConfig& config() const { return cfg_; }

    ParamDict init_params(Rng& rng) const;

    /// image is [3][H][W] with H, W divisible by the stride; throws
    /// ShapeMismatch otherwise.
    Acts forward(const ParamDict& params, const Tensor& image) const;

    /// Accumulates parameter gradients (+=) for the given head gradients.
    void backward(const ParamDict& params, const Acts& acts, const HeadGrads& dh,
                  ParamDict& grads) const;

private:
    DetectorConfig cfg_;
    std::vector<Conv2dSpec> trunk_;
};

/// Center-sampling target assignment: a cell is positive for the
/// smallest-area gt box whose central region contains the cell center.
TargetMap assign_targets(const std::vector<GtBox>& gts, int img_h, int img_w,
                         const DetectorConfig& cfg);

/// BCE on objectness over all cells + CE over known categories and
/// (L1/diag + (1-GIoU)) box loss over positive cells, each term
/// mean-reduced over its support. Throws NonFiniteError.
DetectionLossResult detection_loss(const DenseOutput& out, const TargetMap& targets);

/// Threshold, top-k, NMS, unknown-margin labelling. Boxes are clamped to
/// the image; embeddings come out unit-norm.
std::vector<Instance> decode(const DenseOutput& out, const DetectorConfig& cfg, int img_h,
                             int img_w);

/// GIoU value plus its gradient with respect to box `a`'s coordinates
/// (order x1, y1, x2, y2). Shared by the detection and refine losses.
double giou_grad(const Box& a, const Box& b, std::array<double, 4>& da);

}  // namespace owd
