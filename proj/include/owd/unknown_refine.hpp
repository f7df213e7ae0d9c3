#pragma once

#include <vector>

#include "owd/detector.hpp"
#include "owd/geometry.hpp"

namespace owd {

struct RefineConfig {
    double tau_obj = 0.15;       // objectness floor for unknown candidates
    double tau_iou = 0.5;        // candidate <-> mask-box match threshold
    double lambda_l1 = 1.0;
    double lambda_giou = 1.0;
    int max_candidates = 20;     // per image, by objectness
    double known_iou_gate = 0.5; // candidates overlapping known gt above this are dropped
};

/// One pseudo box-regression target: mask-derived box assigned to one
/// prediction.
struct PseudoPair {
    int pred_index = -1;  // index into the decoded instance list
    Box target_box;
    double match_iou = 0.0;
};

struct RefineLossResult {
    double loss = 0.0;
    Tensor d_box_raw;  // same layout as DenseOutput.box_raw; zero outside matched cells
};

/// High-objectness instances that overlap no known gt box: the unknown
/// candidates eligible for mask supervision. Returns indices into
/// `instances`, ordered by (objectness desc, index asc).
std::vector<int> select_unknown_candidates(const std::vector<Instance>& instances,
                                           const std::vector<Box>& known_gt,
                                           const RefineConfig& cfg);

/// Convert masks to boxes and optimally assign them to candidates with
/// cost 1 - IoU, pairs below tau_iou forbidden. Empty masks are dropped
/// (counted in *dropped_empty when given). Each mask box supervises at
/// most one candidate. Result sorted by pred_index.
std::vector<PseudoPair> build_pseudo_targets(const std::vector<Instance>& instances,
                                             const std::vector<int>& candidates,
                                             const std::vector<BinaryMask>& masks,
                                             const RefineConfig& cfg,
                                             int* dropped_empty = nullptr);

/// Mean over pairs of lambda_l1 * L1(pred, target)/diag +
/// lambda_giou * (1 - giou). Gradients land only on the box offsets of the
/// matched candidates' cells. Zero (with zero gradients) for empty input.
RefineLossResult refine_loss(const std::vector<PseudoPair>& pairs,
                             const std::vector<Instance>& instances, const DenseOutput& out,
                             const RefineConfig& cfg);

}  // namespace owd
