#include "owd/unknown_refine.hpp"

#include <algorithm>
#include <cmath>

#include "owd/assignment.hpp"
#include "owd/errors.hpp"

namespace owd {

std::vector<int> select_unknown_candidates(const std::vector<Instance>& instances,
                                           const std::vector<Box>& known_gt,
                                           const RefineConfig& cfg) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const Instance& inst = instances[i];
        if (inst.objectness < cfg.tau_obj) continue;
        bool near_known = false;
        for (const Box& g : known_gt) {
            if (iou(inst.box, g) >= cfg.known_iou_gate) {
                near_known = true;
                break;
            }
        }
        if (!near_known) idx.push_back(static_cast<int>(i));
    }
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double oa = instances[static_cast<std::size_t>(a)].objectness;
        const double ob = instances[static_cast<std::size_t>(b)].objectness;
        if (oa != ob) return oa > ob;
        return a < b;
    });
    if (static_cast<int>(idx.size()) > cfg.max_candidates)
        idx.resize(static_cast<std::size_t>(cfg.max_candidates));
    return idx;
}

std::vector<PseudoPair> build_pseudo_targets(const std::vector<Instance>& instances,
                                             const std::vector<int>& candidates,
                                             const std::vector<BinaryMask>& masks,
                                             const RefineConfig& cfg, int* dropped_empty) {
    std::vector<Box> mask_boxes;
    int dropped = 0;
    for (const BinaryMask& m : masks) {
        try {
            mask_boxes.push_back(mask_to_box(m));
        } catch (const EmptyMask&) {
            ++dropped;
        }
    }
    if (dropped_empty) *dropped_empty = dropped;
    if (candidates.empty() || mask_boxes.empty()) return {};

    CostMatrix cost(static_cast<int>(candidates.size()), static_cast<int>(mask_boxes.size()),
                    kForbidden);
    for (int r = 0; r < cost.rows; ++r) {
        const Box& cb = instances[static_cast<std::size_t>(candidates[static_cast<std::size_t>(r)])].box;
        for (int c = 0; c < cost.cols; ++c) {
            const double v = iou(cb, mask_boxes[static_cast<std::size_t>(c)]);
            if (v >= cfg.tau_iou) cost.at(r, c) = 1.0 - v;
        }
    }

    std::vector<PseudoPair> pairs;
    for (const auto& [r, c] : hungarian(cost)) {
        PseudoPair p;
        p.pred_index = candidates[static_cast<std::size_t>(r)];
        p.target_box = mask_boxes[static_cast<std::size_t>(c)];
        p.match_iou = 1.0 - cost.at(r, c);
        pairs.push_back(p);
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const PseudoPair& a, const PseudoPair& b) { return a.pred_index < b.pred_index; });
    return pairs;
}

RefineLossResult refine_loss(const std::vector<PseudoPair>& pairs,
                             const std::vector<Instance>& instances, const DenseOutput& out,
                             const RefineConfig& cfg) {
    RefineLossResult res;
    res.d_box_raw = Tensor(out.box_raw.shape);
    if (pairs.empty()) return res;

    const int cells = out.cells();
    const double diag = std::hypot(out.wf * out.stride, out.hf * out.stride);
    const double inv_n = 1.0 / static_cast<double>(pairs.size());

    double sum = 0.0;
    for (const PseudoPair& p : pairs) {
        const int cell = instances[static_cast<std::size_t>(p.pred_index)].cell;
        const double cx = out.cell_cx(cell), cy = out.cell_cy(cell);
        std::array<double, 4> off;
        for (int k = 0; k < 4; ++k)
            off[static_cast<std::size_t>(k)] =
                out.box_offsets[static_cast<std::size_t>(k) * cells + cell];
        const Box pred{cx - off[0], cy - off[1], cx + off[2], cy + off[3]};
        const Box& tgt = p.target_box;
        // target expressed as offsets from this cell center
        const std::array<double, 4> toff{cx - tgt.x1, cy - tgt.y1, tgt.x2 - cx, tgt.y2 - cy};

        double l1 = 0.0;
        std::array<double, 4> d_off{0, 0, 0, 0};
        for (int k = 0; k < 4; ++k) {
            const double d = off[static_cast<std::size_t>(k)] - toff[static_cast<std::size_t>(k)];
            l1 += std::abs(d);
            d_off[static_cast<std::size_t>(k)] =
                cfg.lambda_l1 * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / diag;
        }
        std::array<double, 4> dg;
        const double g = giou_grad(pred, tgt, dg);
        sum += cfg.lambda_l1 * l1 / diag + cfg.lambda_giou * (1.0 - g);
        d_off[0] += cfg.lambda_giou * dg[0];
        d_off[1] += cfg.lambda_giou * dg[1];
        d_off[2] -= cfg.lambda_giou * dg[2];
        d_off[3] -= cfg.lambda_giou * dg[3];

        for (int k = 0; k < 4; ++k) {
            const double raw = out.box_raw[static_cast<std::size_t>(k) * cells + cell];
            res.d_box_raw[static_cast<std::size_t>(k) * cells + cell] +=
                d_off[static_cast<std::size_t>(k)] * softplus_grad(raw) * inv_n;
        }
    }
    res.loss = sum * inv_n;
    if (!std::isfinite(res.loss)) throw NonFiniteError("refine_loss");
    return res;
}

}  // namespace owd
