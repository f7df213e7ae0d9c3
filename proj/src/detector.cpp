#include "owd/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "owd/errors.hpp"
#include "owd/simd/kernels.hpp"

namespace owd {

void HeadGrads::accumulate(const HeadGrads& other, double scale) {
    const auto& k = simd::active();
    k.axpy(static_cast<int>(d_objectness.size()), scale, other.d_objectness.ptr(),
           d_objectness.ptr());
    k.axpy(static_cast<int>(d_cat.size()), scale, other.d_cat.ptr(), d_cat.ptr());
    k.axpy(static_cast<int>(d_box_raw.size()), scale, other.d_box_raw.ptr(), d_box_raw.ptr());
    k.axpy(static_cast<int>(d_emb.size()), scale, other.d_emb.ptr(), d_emb.ptr());
}

DetectorNet::DetectorNet(DetectorConfig cfg) : cfg_(std::move(cfg)) {
    int in_c = 3;
    for (int out_c : cfg_.trunk_channels) {
        trunk_.push_back(Conv2dSpec{in_c, out_c, 3, 2, 1});
        in_c = out_c;
    }
}

ParamDict DetectorNet::init_params(Rng& rng) const {
    ParamDict p;
    for (std::size_t l = 0; l < trunk_.size(); ++l) {
        const auto& spec = trunk_[l];
        const double scale = std::sqrt(2.0 / spec.patch());
        p.add("trunk" + std::to_string(l) + ".w",
              Tensor::randn({spec.out_c, spec.patch()}, rng, scale));
        p.add("trunk" + std::to_string(l) + ".b", Tensor({spec.out_c}));
    }
    const int c = cfg_.trunk_channels.back();
    const double head_scale = std::sqrt(2.0 / c);
    p.add("obj.w", Tensor::randn({1, c}, rng, head_scale));
    // start with sigmoid(objectness) ~= 0.01 everywhere
    auto& ob = p.add("obj.b", Tensor({1}));
    ob[0] = std::log(0.01 / 0.99);
    p.add("cat.w", Tensor::randn({cfg_.num_known, c}, rng, head_scale));
    p.add("cat.b", Tensor({cfg_.num_known}));
    p.add("box.w", Tensor::randn({4, c}, rng, head_scale));
    // softplus(4) ~= 4.02 px: sane prior extent, unsaturated gradient
    auto& bb = p.add("box.b", Tensor({4}, 4.0));
    (void)bb;
    p.add("emb.w", Tensor::randn({cfg_.embed_dim, c}, rng, head_scale));
    p.add("emb.b", Tensor({cfg_.embed_dim}));
    return p;
}

namespace {

void add_bias_rows(Tensor& t, const Tensor& bias, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* row = t.ptr() + static_cast<std::size_t>(r) * cols;
        const double b = bias[static_cast<std::size_t>(r)];
        for (int c = 0; c < cols; ++c) row[c] += b;
    }
}

// dW += dOut * colT, db += row-sums, and optionally dIn += W^T * dOut.
void conv_backward_common(const Tensor& w, const Tensor& dout, const Tensor& col, int out_c,
                          int patch, int cells, Tensor& dw, Tensor& db, Tensor* dcol) {
    const auto& k = simd::active();
    Tensor colT({cells, patch});
    transpose(patch, cells, col.ptr(), colT.ptr());
    k.gemm(out_c, patch, cells, dout.ptr(), colT.ptr(), dw.ptr(), true);
    for (int r = 0; r < out_c; ++r) {
        const double* row = dout.ptr() + static_cast<std::size_t>(r) * cells;
        double s = 0.0;
        for (int i = 0; i < cells; ++i) s += row[i];
        db[static_cast<std::size_t>(r)] += s;
    }
    if (dcol) {
        Tensor wT({patch, out_c});
        transpose(out_c, patch, w.ptr(), wT.ptr());
        k.gemm(patch, cells, out_c, wT.ptr(), dout.ptr(), dcol->ptr(), true);
    }
}

}  // namespace

DetectorNet::Acts DetectorNet::forward(const ParamDict& params, const Tensor& image) const {
    if (image.shape.size() != 3 || image.dim(0) != 3)
        throw ShapeMismatch("expected [3][H][W] image");
    const int s = cfg_.stride();
    if (image.dim(1) % s != 0 || image.dim(2) % s != 0)
        throw ShapeMismatch("image dims must be divisible by stride " + std::to_string(s));

    const auto& k = simd::active();
    Acts acts;
    acts.in_h = image.dim(1);
    acts.in_w = image.dim(2);

    const Tensor* x = &image;
    int h = acts.in_h, w = acts.in_w;
    for (std::size_t l = 0; l < trunk_.size(); ++l) {
        const auto& spec = trunk_[l];
        Tensor col;
        im2col(*x, spec, col);
        const int oh = spec.out_dim(h), ow = spec.out_dim(w);
        const int cells = oh * ow;
        Tensor pre({spec.out_c, oh, ow});
        const Tensor& wgt = *params.find("trunk" + std::to_string(l) + ".w");
        const Tensor& bias = *params.find("trunk" + std::to_string(l) + ".b");
        k.gemm(spec.out_c, cells, spec.patch(), wgt.ptr(), col.ptr(), pre.ptr(), false);
        add_bias_rows(pre, bias, spec.out_c, cells);
        Tensor post(pre.shape);
        k.relu_fwd(static_cast<int>(pre.size()), pre.ptr(), post.ptr());
        acts.col.push_back(std::move(col));
        acts.pre.push_back(std::move(pre));
        acts.post.push_back(std::move(post));
        h = oh;
        w = ow;
        x = &acts.post.back();
    }

    const Tensor& feat = acts.post.back();
    const int c = cfg_.trunk_channels.back();
    const int cells = h * w;
    auto head = [&](const char* name, int out_c) {
        Tensor t({out_c, h, w});
        const Tensor& wgt = *params.find(std::string(name) + ".w");
        const Tensor& bias = *params.find(std::string(name) + ".b");
        k.gemm(out_c, cells, c, wgt.ptr(), feat.ptr(), t.ptr(), false);
        add_bias_rows(t, bias, out_c, cells);
        return t;
    };

    DenseOutput& out = acts.out;
    out.hf = h;
    out.wf = w;
    out.stride = s;
    out.objectness = head("obj", 1);
    out.cat_logits = head("cat", cfg_.num_known);
    out.box_raw = head("box", 4);
    out.box_offsets = Tensor(out.box_raw.shape);
    for (std::size_t i = 0; i < out.box_raw.size(); ++i)
        out.box_offsets[i] = softplus(out.box_raw[i]);
    out.embeddings = head("emb", cfg_.embed_dim);
    return acts;
}

void DetectorNet::backward(const ParamDict& params, const Acts& acts, const HeadGrads& dh,
                           ParamDict& grads) const {
    const auto& k = simd::active();
    const Tensor& feat = acts.post.back();
    const int c = cfg_.trunk_channels.back();
    const int cells = acts.out.hf * acts.out.wf;

    Tensor dfeat({c, acts.out.hf, acts.out.wf});
    auto head_back = [&](const char* name, const Tensor& dout, int out_c) {
        conv_backward_common(*params.find(std::string(name) + ".w"), dout, feat, out_c, c, cells,
                             *grads.find(std::string(name) + ".w"),
                             *grads.find(std::string(name) + ".b"), nullptr);
        // dfeat += W^T * dout
        Tensor wT({c, out_c});
        transpose(out_c, c, params.find(std::string(name) + ".w")->ptr(), wT.ptr());
        k.gemm(c, cells, out_c, wT.ptr(), dout.ptr(), dfeat.ptr(), true);
    };
    head_back("obj", dh.d_objectness, 1);
    head_back("cat", dh.d_cat, cfg_.num_known);
    head_back("box", dh.d_box_raw, 4);
    head_back("emb", dh.d_emb, cfg_.embed_dim);

    // trunk, last layer to first
    Tensor dpost = std::move(dfeat);
    for (int l = static_cast<int>(trunk_.size()) - 1; l >= 0; --l) {
        const auto& spec = trunk_[l];
        const Tensor& pre = acts.pre[l];
        const int lc = static_cast<int>(pre.size());
        Tensor dpre(pre.shape);
        k.relu_bwd(lc, pre.ptr(), dpost.ptr(), dpre.ptr());

        const int lcells = pre.dim(1) * pre.dim(2);
        Tensor dcol({spec.patch(), lcells});
        conv_backward_common(*params.find("trunk" + std::to_string(l) + ".w"), dpre, acts.col[l],
                             spec.out_c, spec.patch(), lcells,
                             *grads.find("trunk" + std::to_string(l) + ".w"),
                             *grads.find("trunk" + std::to_string(l) + ".b"), &dcol);
        if (l > 0) {
            const Tensor& below = acts.pre[l - 1];
            Tensor dinput;
            col2im(dcol, spec, below.dim(1), below.dim(2), dinput);
            dpost = std::move(dinput);
        }
    }
}

TargetMap assign_targets(const std::vector<GtBox>& gts, int img_h, int img_w,
                         const DetectorConfig& cfg) {
    const int s = cfg.stride();
    TargetMap t;
    t.hf = img_h / s;
    t.wf = img_w / s;
    t.category.assign(static_cast<std::size_t>(t.hf) * t.wf, -1);
    t.ltrb.assign(static_cast<std::size_t>(t.hf) * t.wf, {0, 0, 0, 0});

    for (int r = 0; r < t.hf; ++r) {
        for (int col = 0; col < t.wf; ++col) {
            const double cx = (col + 0.5) * s;
            const double cy = (r + 0.5) * s;
            int best = -1;
            double best_area = 0.0;
            for (std::size_t g = 0; g < gts.size(); ++g) {
                const Box& b = gts[g].box;
                const double half_w = 0.5 * cfg.center_sampling * b.width();
                const double half_h = 0.5 * cfg.center_sampling * b.height();
                if (cx < b.cx() - half_w || cx > b.cx() + half_w) continue;
                if (cy < b.cy() - half_h || cy > b.cy() + half_h) continue;
                const double area = b.area();
                if (best < 0 || area < best_area) {
                    best = static_cast<int>(g);
                    best_area = area;
                }
            }
            if (best >= 0) {
                const std::size_t cell = static_cast<std::size_t>(r) * t.wf + col;
                const Box& b = gts[static_cast<std::size_t>(best)].box;
                t.category[cell] = gts[static_cast<std::size_t>(best)].category;
                t.ltrb[cell] = {cx - b.x1, cy - b.y1, b.x2 - cx, b.y2 - cy};
                ++t.num_pos;
            }
        }
    }
    return t;
}

void mark_objectness_positive(TargetMap& targets, const Box& box, const DetectorConfig& cfg) {
    const int s = cfg.stride();
    const double half_w = 0.5 * cfg.center_sampling * box.width();
    const double half_h = 0.5 * cfg.center_sampling * box.height();
    for (int r = 0; r < targets.hf; ++r) {
        const double cy = (r + 0.5) * s;
        if (cy < box.cy() - half_h || cy > box.cy() + half_h) continue;
        for (int c = 0; c < targets.wf; ++c) {
            const double cx = (c + 0.5) * s;
            if (cx < box.cx() - half_w || cx > box.cx() + half_w) continue;
            auto& cell = targets.category[static_cast<std::size_t>(r) * targets.wf + c];
            if (cell == -1) cell = kObjectnessOnly;
        }
    }
}

double giou_grad(const Box& a, const Box& b, std::array<double, 4>& da) {
    da = {0.0, 0.0, 0.0, 0.0};
    const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
    const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
    const double iw = std::max(0.0, ix2 - ix1), ih = std::max(0.0, iy2 - iy1);
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    const double hw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
    const double hh = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
    const double hull = hw * hh;

    const double iou_val = uni > 0.0 ? inter / uni : 0.0;
    const double val = hull > 0.0 ? iou_val - (hull - uni) / hull : iou_val;

    std::array<double, 4> dI{0, 0, 0, 0};
    if (iw > 0.0 && ih > 0.0) {
        if (a.x1 > b.x1) dI[0] = -ih;
        if (a.y1 > b.y1) dI[1] = -iw;
        if (a.x2 < b.x2) dI[2] = ih;
        if (a.y2 < b.y2) dI[3] = iw;
    }
    const std::array<double, 4> dA{-a.height(), -a.width(), a.height(), a.width()};
    std::array<double, 4> dH{0, 0, 0, 0};
    if (a.x1 < b.x1) dH[0] = -hh;
    if (a.y1 < b.y1) dH[1] = -hw;
    if (a.x2 > b.x2) dH[2] = hh;
    if (a.y2 > b.y2) dH[3] = hw;

    for (int k = 0; k < 4; ++k) {
        const double dU = dA[k] - dI[k];
        const double d_iou = uni > 0.0 ? (dI[k] * uni - inter * dU) / (uni * uni) : 0.0;
        // giou = iou + uni/hull - 1
        const double d_pen = hull > 0.0 ? (dU * hull - uni * dH[k]) / (hull * hull) : 0.0;
        da[k] = d_iou + d_pen;
    }
    return val;
}

DetectionLossResult detection_loss(const DenseOutput& out, const TargetMap& targets) {
    DetectionLossResult res;
    res.grads = HeadGrads::zeros_like(out);
    const int cells = out.cells();
    const int K = out.cat_logits.dim(0);
    const double diag = std::hypot(out.wf * out.stride, out.hf * out.stride);

    // objectness BCE over every cell; pseudo-labelled cells count as 1
    double obj_sum = 0.0;
    for (int i = 0; i < cells; ++i) {
        const double z = out.objectness[static_cast<std::size_t>(i)];
        const double tgt = targets.category[static_cast<std::size_t>(i)] != -1 ? 1.0 : 0.0;
        obj_sum += bce_with_logits(z, tgt);
        res.grads.d_objectness[static_cast<std::size_t>(i)] = (sigmoid(z) - tgt) / cells;
    }
    res.objectness = obj_sum / cells;

    double cat_sum = 0.0, box_sum = 0.0;
    if (targets.num_pos > 0) {
        const double inv_pos = 1.0 / targets.num_pos;
        for (int i = 0; i < cells; ++i) {
            const int cat = targets.category[static_cast<std::size_t>(i)];
            if (cat < 0) continue;

            // softmax cross-entropy over known categories
            double zmax = -1e300;
            for (int k = 0; k < K; ++k)
                zmax = std::max(zmax, out.cat_logits[static_cast<std::size_t>(k) * cells + i]);
            double denom = 0.0;
            for (int k = 0; k < K; ++k)
                denom += std::exp(out.cat_logits[static_cast<std::size_t>(k) * cells + i] - zmax);
            const double lse = zmax + std::log(denom);
            cat_sum += lse - out.cat_logits[static_cast<std::size_t>(cat) * cells + i];
            for (int k = 0; k < K; ++k) {
                const double p =
                    std::exp(out.cat_logits[static_cast<std::size_t>(k) * cells + i] - lse);
                res.grads.d_cat[static_cast<std::size_t>(k) * cells + i] =
                    (p - (k == cat ? 1.0 : 0.0)) * inv_pos;
            }

            // box: L1/diag + (1 - giou)
            const double cx = out.cell_cx(i), cy = out.cell_cy(i);
            std::array<double, 4> off;
            for (int k = 0; k < 4; ++k)
                off[static_cast<std::size_t>(k)] =
                    out.box_offsets[static_cast<std::size_t>(k) * cells + i];
            const auto& tgt = targets.ltrb[static_cast<std::size_t>(i)];
            const Box pred{cx - off[0], cy - off[1], cx + off[2], cy + off[3]};
            const Box tbox{cx - tgt[0], cy - tgt[1], cx + tgt[2], cy + tgt[3]};

            double l1 = 0.0;
            std::array<double, 4> d_off{0, 0, 0, 0};
            for (int k = 0; k < 4; ++k) {
                const double d = off[static_cast<std::size_t>(k)] - tgt[static_cast<std::size_t>(k)];
                l1 += std::abs(d);
                d_off[static_cast<std::size_t>(k)] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / diag;
            }
            std::array<double, 4> dg;
            const double g = giou_grad(pred, tbox, dg);
            box_sum += l1 / diag + (1.0 - g);
            // d(1-g)/d(l,t,r,b): coords are (cx-l, cy-t, cx+r, cy+b)
            d_off[0] += dg[0];
            d_off[1] += dg[1];
            d_off[2] -= dg[2];
            d_off[3] -= dg[3];
            for (int k = 0; k < 4; ++k) {
                const double raw = out.box_raw[static_cast<std::size_t>(k) * cells + i];
                res.grads.d_box_raw[static_cast<std::size_t>(k) * cells + i] =
                    d_off[static_cast<std::size_t>(k)] * softplus_grad(raw) * inv_pos;
            }
        }
        res.category = cat_sum * inv_pos;
        res.box = box_sum * inv_pos;
    }
    res.total = res.objectness + res.category + res.box;
    if (!std::isfinite(res.total)) throw NonFiniteError("detection_loss");
    return res;
}

std::vector<Instance> decode(const DenseOutput& out, const DetectorConfig& cfg, int img_h,
                             int img_w) {
    const int cells = out.cells();
    const int K = out.cat_logits.dim(0);
    const int D = out.embeddings.dim(0);

    std::vector<int> cand;
    for (int i = 0; i < cells; ++i)
        if (sigmoid(out.objectness[static_cast<std::size_t>(i)]) >= cfg.score_thresh)
            cand.push_back(i);
    std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
        const double sa = out.objectness[static_cast<std::size_t>(a)];
        const double sb = out.objectness[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    if (static_cast<int>(cand.size()) > cfg.topk) cand.resize(static_cast<std::size_t>(cfg.topk));

    std::vector<Box> boxes;
    std::vector<double> scores;
    boxes.reserve(cand.size());
    for (int i : cand) {
        const double cx = out.cell_cx(i), cy = out.cell_cy(i);
        const Box b{cx - out.box_offsets[static_cast<std::size_t>(0) * cells + i],
                    cy - out.box_offsets[static_cast<std::size_t>(1) * cells + i],
                    cx + out.box_offsets[static_cast<std::size_t>(2) * cells + i],
                    cy + out.box_offsets[static_cast<std::size_t>(3) * cells + i]};
        boxes.push_back(clamp_box(b, img_w, img_h));
        scores.push_back(sigmoid(out.objectness[static_cast<std::size_t>(i)]));
    }

    std::vector<Instance> result;
    for (int keep : nms(boxes, scores, cfg.nms_thresh)) {
        const int i = cand[static_cast<std::size_t>(keep)];
        Instance inst;
        inst.box = boxes[static_cast<std::size_t>(keep)];
        inst.objectness = scores[static_cast<std::size_t>(keep)];
        inst.cell = i;

        double zmax = -1e300;
        for (int k = 0; k < K; ++k)
            zmax = std::max(zmax, out.cat_logits[static_cast<std::size_t>(k) * cells + i]);
        double denom = 0.0;
        for (int k = 0; k < K; ++k)
            denom += std::exp(out.cat_logits[static_cast<std::size_t>(k) * cells + i] - zmax);
        int argmax = 0;
        double pmax = 0.0;
        for (int k = 0; k < K; ++k) {
            const double p =
                std::exp(out.cat_logits[static_cast<std::size_t>(k) * cells + i] - zmax) / denom;
            if (p > pmax) {
                pmax = p;
                argmax = k;
            }
        }
        inst.known_conf = pmax;
        inst.label = pmax >= cfg.unknown_margin ? argmax : kUnknownLabel;

        inst.embedding.resize(static_cast<std::size_t>(D));
        double norm2 = 0.0;
        for (int d = 0; d < D; ++d) {
            const double v = out.embeddings[static_cast<std::size_t>(d) * cells + i];
            inst.embedding[static_cast<std::size_t>(d)] = v;
            norm2 += v * v;
        }
        const double norm = std::sqrt(norm2);
        if (norm > 1e-12) {
            for (auto& v : inst.embedding) v /= norm;
        } else {
            std::fill(inst.embedding.begin(), inst.embedding.end(), 0.0);
            inst.embedding[0] = 1.0;
        }
        result.push_back(std::move(inst));
    }
    return result;
}

}  // namespace owd
