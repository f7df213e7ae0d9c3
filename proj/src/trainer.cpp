#include "owd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "owd/errors.hpp"
#include "owd/parallel.hpp"
#include "owd/simd/kernels.hpp"
#include "owd/unknown_refine.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace owd {

std::uint64_t scene_stream_seed(std::uint64_t base, int split, int index) {
    return Rng(base, 0xd5 + static_cast<std::uint64_t>(split))
        .fork(static_cast<std::uint64_t>(index))
        .next_u64();
}

json RunManifest::to_json() const {
    json ep = json::array();
    for (const auto& e : epochs)
        ep.push_back({{"epoch", e.epoch},
                      {"total", e.loss.total},
                      {"det", e.loss.det},
                      {"refine", e.loss.refine},
                      {"transfer", e.loss.transfer},
                      {"refine_pairs", e.loss.refine_pairs},
                      {"transfer_instances", e.loss.transfer_instances},
                      {"val_urecall", e.val_urecall}});
    return json{{"config_hash", config_hash},
                {"seed", seed},
                {"epochs", ep},
                {"config", config_path},
                {"checkpoint", checkpoint_path},
                {"best_checkpoint", best_checkpoint_path},
                {"metric_report", metric_report_path}};
}

void RunManifest::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << to_json().dump(2) << "\n";
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SchemaError("missing manifest: " + path);
    json j;
    try {
        f >> j;
        RunManifest m;
        m.config_hash = j.at("config_hash").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& e : j.at("epochs")) {
            EpochStats s;
            s.epoch = e.at("epoch").get<int>();
            s.loss.total = e.at("total").get<double>();
            s.loss.det = e.at("det").get<double>();
            s.loss.refine = e.at("refine").get<double>();
            s.loss.transfer = e.at("transfer").get<double>();
            s.val_urecall = e.at("val_urecall").get<double>();
            m.epochs.push_back(s);
        }
        m.config_path = j.value("config", "");
        m.checkpoint_path = j.at("checkpoint").get<std::string>();
        m.best_checkpoint_path = j.at("best_checkpoint").get<std::string>();
        m.metric_report_path = j.at("metric_report").get<std::string>();
        return m;
    } catch (const json::exception& e) {
        throw SchemaError("bad manifest " + path + ": " + e.what());
    }
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), net_(cfg_.detector) {}

std::vector<Scene> Trainer::make_train_scenes() const {
    if (!cfg_.dataset_path.empty()) {
        Dataset ds = load_dataset(cfg_.dataset_path);
        return std::move(ds.scenes);
    }
    std::vector<Scene> scenes(static_cast<std::size_t>(cfg_.train_scenes));
    parallel_for(cfg_.train_scenes, [&](int i) {
        scenes[static_cast<std::size_t>(i)] =
            generate_scene(scene_stream_seed(cfg_.seed, 0, i), cfg_.scene);
    });
    return scenes;
}

std::vector<Scene> Trainer::make_val_scenes() const {
    std::vector<Scene> scenes(static_cast<std::size_t>(cfg_.val_scenes));
    parallel_for(cfg_.val_scenes, [&](int i) {
        scenes[static_cast<std::size_t>(i)] =
            generate_scene(scene_stream_seed(cfg_.seed, 1, i), cfg_.scene);
    });
    return scenes;
}

LossBreakdown Trainer::image_pass(const Scene& scene, const ParamDict& params, int epoch,
                                  ParamDict* grads) const {
    LossBreakdown lb;
    const auto acts = net_.forward(params, scene.to_input());
    const DenseOutput& out = acts.out;

    const auto known = scene.known_gt();
    auto targets = assign_targets(known, scene.height, scene.width, cfg_.detector);

    const bool aux_active = epoch >= cfg_.warmup_epochs;
    const bool want_refine = cfg_.enable_refine && aux_active;
    const bool want_transfer = cfg_.enable_transfer && aux_active;

    std::vector<Instance> instances;
    std::vector<int> candidates;
    if (want_refine || want_transfer) {
        instances = decode(out, cfg_.detector, scene.height, scene.width);
        candidates = select_unknown_candidates(instances, scene.known_gt_boxes(), cfg_.refine);
    }

    std::vector<PseudoPair> pairs;
    if (want_refine) {
        const auto masks = oracle_segmenter(scene, cfg_.segmenter);
        pairs = build_pseudo_targets(instances, candidates, masks, cfg_.refine);
        // mask-confirmed candidates keep their cells objectness-positive,
        // otherwise the dense head suppresses every unlabeled object
        if (cfg_.pseudo_objectness)
            for (const auto& p : pairs) mark_objectness_positive(targets, p.target_box, cfg_.detector);
    }

    auto det = detection_loss(out, targets);
    lb.det = det.total;

    HeadGrads combined = HeadGrads::zeros_like(out);
    combined.accumulate(det.grads, cfg_.lambda_det);

    if (want_refine) {
        const auto rl = refine_loss(pairs, instances, out, cfg_.refine);
        lb.refine = rl.loss;
        lb.refine_pairs = static_cast<int>(pairs.size());
        const auto& k = owd::simd::active();
        k.axpy(static_cast<int>(combined.d_box_raw.size()), cfg_.lambda_refine, rl.d_box_raw.ptr(),
               combined.d_box_raw.ptr());
    }

    if (want_transfer) {
        const auto ti =
            collect_transfer_instances(scene.known_gt_boxes(), instances, candidates, out);
        lb.transfer_instances = static_cast<int>(ti.boxes.size());
        if (static_cast<int>(ti.boxes.size()) >= cfg_.transfer.min_instances) {
            const auto teacher = oracle_teacher(scene, cfg_.teacher);
            const auto T = similarity_matrix(roi_pool_teacher(teacher, ti.boxes));
            const auto raw = read_embeddings_at(out, ti.cells);
            const auto tr = transfer_loss(T, raw, cfg_.transfer);
            lb.transfer = tr.loss;
            Tensor demb(out.embeddings.shape);
            scatter_embedding_grads(tr.d_embeddings, ti.cells, demb);
            const auto& k = owd::simd::active();
            k.axpy(static_cast<int>(combined.d_emb.size()), cfg_.lambda_transfer, demb.ptr(),
                   combined.d_emb.ptr());
        }
    }

    lb.total = cfg_.lambda_det * lb.det + cfg_.lambda_refine * lb.refine +
               cfg_.lambda_transfer * lb.transfer;
    if (grads) net_.backward(params, acts, combined, *grads);
    return lb;
}

LossBreakdown Trainer::train_step(const std::vector<const Scene*>& batch, ParamDict& params,
                                  ParamDict& momentum, int epoch, double lr) const {
    const int n = static_cast<int>(batch.size());
    std::vector<ParamDict> grads(static_cast<std::size_t>(n));
    std::vector<LossBreakdown> losses(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    parallel_for(n, [&](int i) {
        try {
            grads[static_cast<std::size_t>(i)] = ParamDict::zeros_like(params);
            losses[static_cast<std::size_t>(i)] =
                image_pass(*batch[static_cast<std::size_t>(i)], params, epoch,
                           &grads[static_cast<std::size_t>(i)]);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    });
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    // deterministic reduction in batch order
    LossBreakdown mean;
    ParamDict total = ParamDict::zeros_like(params);
    for (int i = 0; i < n; ++i) {
        total.axpy(1.0 / n, grads[static_cast<std::size_t>(i)]);
        const auto& l = losses[static_cast<std::size_t>(i)];
        mean.total += l.total / n;
        mean.det += l.det / n;
        mean.refine += l.refine / n;
        mean.transfer += l.transfer / n;
        mean.refine_pairs += l.refine_pairs;
        mean.transfer_instances += l.transfer_instances;
    }

    for (std::size_t k = 0; k < params.items.size(); ++k) {
        auto& p = params.items[k].second;
        auto& v = momentum.items[k].second;
        const auto& g = total.items[k].second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            v.data[i] = cfg_.optim.momentum * v.data[i] + g.data[i];
            p.data[i] -= lr * v.data[i];
        }
    }
    if (!params.finite()) throw NonFiniteError("parameters after update");
    return mean;
}

double Trainer::learning_rate(int epoch) const {
    if (cfg_.optim.schedule == "cosine") {
        const double t = static_cast<double>(epoch) / std::max(1, cfg_.epochs);
        return cfg_.optim.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
    }
    return cfg_.optim.lr;
}

namespace {

struct EvalOutputs {
    std::vector<std::vector<Instance>> preds;
    std::vector<std::vector<EvalGt>> gts;
};

EvalOutputs run_inference(const DetectorNet& net, const ParamDict& params,
                          const std::vector<Scene>& scenes, const DetectorConfig& cfg) {
    EvalOutputs out;
    out.preds.resize(scenes.size());
    out.gts.resize(scenes.size());
    parallel_for(static_cast<int>(scenes.size()), [&](int i) {
        const Scene& s = scenes[static_cast<std::size_t>(i)];
        const auto acts = net.forward(params, s.to_input());
        out.preds[static_cast<std::size_t>(i)] = decode(acts.out, cfg, s.height, s.width);
        for (const auto& r : s.records)
            out.gts[static_cast<std::size_t>(i)].push_back({r.box, r.category, r.split});
    });
    return out;
}

}  // namespace

double Trainer::validate(const ParamDict& params, const std::vector<Scene>& scenes) const {
    const auto ev = run_inference(net_, params, scenes, cfg_.detector);
    return unknown_recall(ev.preds, ev.gts, 0.5, true);
}

MetricReport Trainer::evaluate(const ParamDict& params, const std::vector<Scene>& scenes) const {
    const auto ev = run_inference(net_, params, scenes, cfg_.detector);
    MetricReport rep;
    const auto ap = average_precision(ev.preds, ev.gts, 0.5);
    rep.values["map50"] = ap.map;
    for (const auto& [cls, v] : ap.per_class) rep.values["ap_class_" + std::to_string(cls)] = v;
    rep.values["u_recall50"] = unknown_recall(ev.preds, ev.gts, 0.5, true);

    // discovery quality at gt unknown boxes
    std::vector<std::vector<double>> emb;
    std::vector<int> labels;
    for (const auto& s : scenes) {
        std::vector<Box> boxes;
        std::vector<int> cats;
        for (const auto& r : s.records)
            if (r.split == Split::Unknown) {
                boxes.push_back(r.box);
                cats.push_back(r.category);
            }
        if (boxes.empty()) continue;
        const auto acts = net_.forward(params, s.to_input());
        auto e = embeddings_at_boxes(acts.out, boxes);
        for (std::size_t i = 0; i < e.size(); ++i) {
            emb.push_back(std::move(e[i]));
            labels.push_back(cats[i]);
        }
    }
    if (!emb.empty()) {
        const auto q =
            clustering_quality(emb, labels, cfg_.scene.num_unknown(), cfg_.seed, 10);
        rep.values["unknown_nmi"] = q.nmi;
        rep.values["unknown_purity"] = q.purity;
        rep.values["unknown_instances"] = static_cast<double>(emb.size());
    }
    rep.values["num_scenes"] = static_cast<double>(scenes.size());
    rep.info["seed"] = std::to_string(cfg_.seed);
    rep.info["enable_refine"] = cfg_.enable_refine ? "1" : "0";
    rep.info["enable_transfer"] = cfg_.enable_transfer ? "1" : "0";
    rep.info["ap_style"] = "pascal_all_points";
    rep.info["config_hash"] = owd::config_hash(to_json(cfg_));
    return rep;
}

RunManifest Trainer::train(const std::string& out_dir, const std::string& resume_path) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create out dir " + out_dir);

    const json cfg_json = to_json(cfg_);
    RunManifest manifest;
    manifest.config_hash = owd::config_hash(cfg_json);
    manifest.seed = cfg_.seed;
    manifest.config_path = (fs::path(out_dir) / "config.json").string();
    {
        std::ofstream f(manifest.config_path);
        f << cfg_json.dump(2) << "\n";
    }

    const auto train_scenes = make_train_scenes();
    const auto val_scenes = make_val_scenes();

    ParamDict params, momentum;
    int start_epoch = 0;
    if (!resume_path.empty()) {
        Checkpoint ckpt = load_checkpoint(resume_path);
        params = std::move(ckpt.params);
        momentum = ckpt.has_momentum ? std::move(ckpt.momentum) : ParamDict::zeros_like(params);
        start_epoch = ckpt.epoch;
    } else {
        Rng rng(cfg_.seed, 13);
        params = net_.init_params(rng);
        momentum = ParamDict::zeros_like(params);
    }

    manifest.checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();
    manifest.best_checkpoint_path = (fs::path(out_dir) / "checkpoint_best.bin").string();

    auto save = [&](const std::string& path, int epoch, bool with_momentum) {
        Checkpoint ckpt;
        ckpt.detector = cfg_.detector;
        ckpt.params = params;
        if (with_momentum) {
            ckpt.momentum = momentum;
            ckpt.has_momentum = true;
        }
        ckpt.epoch = epoch;
        ckpt.meta = {{"config_hash", manifest.config_hash}, {"seed", cfg_.seed}};
        save_checkpoint(path, ckpt);
    };

    double best_urecall = -1.0;
    for (int epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
        std::vector<int> order(train_scenes.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(cfg_.seed, 1000 + static_cast<std::uint64_t>(epoch));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, i))]);

        const double lr = learning_rate(epoch);
        EpochStats stats;
        stats.epoch = epoch;
        int images = 0;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg_.batch_size)) {
            std::vector<const Scene*> batch;
            for (std::size_t k = at;
                 k < std::min(order.size(), at + static_cast<std::size_t>(cfg_.batch_size)); ++k)
                batch.push_back(&train_scenes[static_cast<std::size_t>(order[k])]);
            const auto lb = train_step(batch, params, momentum, epoch, lr);
            const int bn = static_cast<int>(batch.size());
            stats.loss.total += lb.total * bn;
            stats.loss.det += lb.det * bn;
            stats.loss.refine += lb.refine * bn;
            stats.loss.transfer += lb.transfer * bn;
            stats.loss.refine_pairs += lb.refine_pairs;
            stats.loss.transfer_instances += lb.transfer_instances;
            images += bn;
        }
        if (images > 0) {
            stats.loss.total /= images;
            stats.loss.det /= images;
            stats.loss.refine /= images;
            stats.loss.transfer /= images;
        }
        stats.val_urecall = validate(params, val_scenes);
        if (stats.val_urecall > best_urecall) {
            best_urecall = stats.val_urecall;
            save(manifest.best_checkpoint_path, epoch + 1, false);
        }
        manifest.epochs.push_back(stats);
    }

    save(manifest.checkpoint_path, cfg_.epochs, true);
    if (best_urecall < 0.0) save(manifest.best_checkpoint_path, cfg_.epochs, false);

    const auto report = evaluate(params, val_scenes);
    manifest.metric_report_path = (fs::path(out_dir) / "metric_report.json").string();
    report.save(manifest.metric_report_path);
    report.append_csv((fs::path(out_dir) / "metrics.csv").string());
    manifest.save((fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

std::vector<std::vector<double>> embeddings_at_boxes(const DenseOutput& out,
                                                     const std::vector<Box>& boxes) {
    std::vector<int> cells;
    for (const Box& b : boxes) {
        const int col =
            std::clamp(static_cast<int>(std::floor(b.cx() / out.stride)), 0, out.wf - 1);
        const int row =
            std::clamp(static_cast<int>(std::floor(b.cy() / out.stride)), 0, out.hf - 1);
        cells.push_back(row * out.wf + col);
    }
    auto raw = read_embeddings_at(out, cells);
    for (auto& v : raw) {
        double n2 = 0.0;
        for (double x : v) n2 += x * x;
        const double n = std::sqrt(n2);
        if (n > 1e-12)
            for (auto& x : v) x /= n;
        else
            v[0] = 1.0;
    }
    return raw;
}

}  // namespace owd
