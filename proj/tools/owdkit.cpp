// owdkit - open-world detection toolkit CLI
//
// Subcommands: gen-data, train, eval-detect, eval-embed, discover, track,
// report. Every command is deterministic given (--config, --seed) and
// writes its artifacts under --out with stable names.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "owd/config.hpp"
#include "owd/errors.hpp"
#include "owd/parallel.hpp"
#include "owd/report.hpp"
#include "owd/trainer.hpp"
#include "owd/tracker.hpp"
#include "owd/unknown_refine.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config;
    std::string out = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
};

owd::TrainConfig load_config(const CommonArgs& args) {
    owd::TrainConfig cfg = owd::load_train_config(args.config);
    if (args.seed_set) cfg.seed = args.seed;
    return cfg;
}

void write_command_manifest(const std::string& out, const std::string& command,
                            const owd::TrainConfig& cfg,
                            const std::map<std::string, std::string>& outputs) {
    json j;
    j["command"] = command;
    j["config_hash"] = owd::config_hash(owd::to_json(cfg));
    j["seed"] = cfg.seed;
    for (const auto& [k, v] : outputs) j["outputs"][k] = v;
    std::ofstream f(fs::path(out) / (command + "_manifest.json"));
    f << j.dump(2) << "\n";
}

// forward pass + decode over a dataset, grouped by sequence when asked
std::vector<std::vector<owd::Instance>> detect_all(const owd::DetectorNet& net,
                                                   const owd::ParamDict& params,
                                                   const std::vector<owd::Scene>& scenes) {
    std::vector<std::vector<owd::Instance>> preds(scenes.size());
    owd::parallel_for(static_cast<int>(scenes.size()), [&](int i) {
        const auto& s = scenes[static_cast<std::size_t>(i)];
        const auto acts = net.forward(params, s.to_input());
        preds[static_cast<std::size_t>(i)] =
            owd::decode(acts.out, net.config(), s.height, s.width);
    });
    return preds;
}

int cmd_gen_data(const CommonArgs& args) {
    const owd::TrainConfig cfg = load_config(args);
    fs::create_directories(args.out);

    std::vector<owd::Scene> scenes(static_cast<std::size_t>(cfg.gen.num_scenes));
    owd::parallel_for(cfg.gen.num_scenes, [&](int i) {
        scenes[static_cast<std::size_t>(i)] =
            owd::generate_scene(owd::scene_stream_seed(cfg.seed, 0, i), cfg.scene);
    });
    int images = cfg.gen.num_scenes;
    int annotations = 0;
    for (const auto& s : scenes) annotations += static_cast<int>(s.records.size());

    for (int q = 0; q < cfg.gen.num_sequences; ++q) {
        auto frames = owd::generate_sequence(owd::scene_stream_seed(cfg.seed, 2, q), cfg.scene,
                                             cfg.gen.sequence_length);
        for (auto& f : frames) {
            f.sequence_id = q;
            annotations += static_cast<int>(f.records.size());
            ++images;
            scenes.push_back(std::move(f));
        }
    }

    owd::serialize_dataset(scenes, cfg.scene, args.out);
    write_command_manifest(args.out, "gen-data", cfg,
                           {{"annotations", (fs::path(args.out) / "annotations.json").string()}});
    std::cout << "images: " << images << "\nannotations: " << annotations
              << "\ncategories: " << cfg.scene.categories.size() << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& dataset, const std::string& resume) {
    owd::TrainConfig cfg = load_config(args);
    if (!dataset.empty()) cfg.dataset_path = dataset;
    owd::Trainer trainer(cfg);
    const auto manifest = trainer.train(args.out, resume);
    std::cout << "trained " << manifest.epochs.size() << " epochs; checkpoint at "
              << manifest.checkpoint_path << "\n";
    if (!manifest.epochs.empty())
        std::cout << "final val U-Recall: " << manifest.epochs.back().val_urecall << "\n";
    return 0;
}

int cmd_eval_detect(const CommonArgs& args, const std::string& checkpoint,
                    const std::string& dataset) {
    owd::TrainConfig cfg = load_config(args);
    const owd::Checkpoint ckpt = owd::load_checkpoint(checkpoint);
    cfg.detector = ckpt.detector;
    const owd::Dataset ds = owd::load_dataset(dataset);
    cfg.scene = ds.spec;

    owd::Trainer trainer(cfg);
    const auto rep = trainer.evaluate(ckpt.params, ds.scenes);
    fs::create_directories(args.out);
    const std::string rep_path = (fs::path(args.out) / "metric_report.json").string();
    rep.save(rep_path);
    rep.append_csv((fs::path(args.out) / "metrics.csv").string());
    write_command_manifest(args.out, "eval-detect", cfg, {{"metric_report", rep_path}});
    std::cout << "mAP@0.5: " << rep.values.at("map50")
              << "\nU-Recall@0.5: " << rep.values.at("u_recall50") << "\n";
    return 0;
}

int cmd_eval_embed(const CommonArgs& args, const std::string& checkpoint,
                   const std::string& dataset, bool oracle_teacher_embeddings) {
    owd::TrainConfig cfg = load_config(args);
    const owd::Dataset ds = owd::load_dataset(dataset);
    cfg.scene = ds.spec;

    owd::Checkpoint ckpt;
    owd::DetectorNet* net = nullptr;
    std::unique_ptr<owd::DetectorNet> net_holder;
    if (!oracle_teacher_embeddings) {
        ckpt = owd::load_checkpoint(checkpoint);
        cfg.detector = ckpt.detector;
        net_holder = std::make_unique<owd::DetectorNet>(ckpt.detector);
        net = net_holder.get();
    }

    std::vector<std::vector<double>> emb;
    std::vector<int> labels;
    for (const auto& s : ds.scenes) {
        std::vector<owd::Box> boxes;
        std::vector<int> cats;
        for (const auto& r : s.records)
            if (r.split == owd::Split::Unknown) {
                boxes.push_back(r.box);
                cats.push_back(r.category);
            }
        if (boxes.empty()) continue;
        std::vector<std::vector<double>> e;
        if (oracle_teacher_embeddings) {
            e = owd::roi_pool_teacher(owd::oracle_teacher(s, cfg.teacher), boxes);
        } else {
            const auto acts = net->forward(ckpt.params, s.to_input());
            e = owd::embeddings_at_boxes(acts.out, boxes);
        }
        for (std::size_t i = 0; i < e.size(); ++i) {
            emb.push_back(std::move(e[i]));
            labels.push_back(cats[i]);
        }
    }
    if (emb.empty()) throw owd::SchemaError("dataset has no unknown instances");

    const auto q = owd::clustering_quality(emb, labels, ds.spec.num_unknown(), cfg.seed, 10);
    owd::MetricReport rep;
    rep.values["unknown_nmi"] = q.nmi;
    rep.values["unknown_purity"] = q.purity;
    rep.values["unknown_instances"] = static_cast<double>(emb.size());
    rep.info["seed"] = std::to_string(cfg.seed);
    rep.info["source"] = oracle_teacher_embeddings ? "oracle_teacher" : "checkpoint";
    rep.info["config_hash"] = owd::config_hash(owd::to_json(cfg));

    fs::create_directories(args.out);
    const std::string rep_path = (fs::path(args.out) / "embed_report.json").string();
    rep.save(rep_path);
    rep.append_csv((fs::path(args.out) / "embed_metrics.csv").string());
    write_command_manifest(args.out, "eval-embed", cfg, {{"embed_report", rep_path}});
    std::cout << "unknown NMI: " << q.nmi << "\nunknown purity: " << q.purity << "\n";
    return 0;
}

int cmd_discover(const CommonArgs& args, const std::string& checkpoint,
                 const std::string& dataset, int k_override) {
    owd::TrainConfig cfg = load_config(args);
    const owd::Checkpoint ckpt = owd::load_checkpoint(checkpoint);
    cfg.detector = ckpt.detector;
    const owd::Dataset ds = owd::load_dataset(dataset);
    cfg.scene = ds.spec;

    owd::DetectorNet net(ckpt.detector);
    const auto preds = detect_all(net, ckpt.params, ds.scenes);

    std::vector<std::vector<double>> emb;
    std::vector<std::pair<int, int>> origin;  // (scene, pred index)
    for (std::size_t s = 0; s < preds.size(); ++s)
        for (std::size_t p = 0; p < preds[s].size(); ++p)
            if (preds[s][p].label == owd::kUnknownLabel) {
                emb.push_back(preds[s][p].embedding);
                origin.emplace_back(static_cast<int>(s), static_cast<int>(p));
            }

    fs::create_directories(args.out);
    const int k = k_override > 0 ? k_override : ds.spec.num_unknown();
    std::ofstream f(fs::path(args.out) / "clusters.csv");
    f << "scene,pred,cluster,x1,y1,x2,y2,score\n";
    if (!emb.empty()) {
        const auto assign = owd::kmeans_assign(emb, k, cfg.seed, 10);
        for (std::size_t i = 0; i < origin.size(); ++i) {
            const auto& inst =
                preds[static_cast<std::size_t>(origin[i].first)][static_cast<std::size_t>(origin[i].second)];
            f << origin[i].first << "," << origin[i].second << "," << assign[i] << ","
              << inst.box.x1 << "," << inst.box.y1 << "," << inst.box.x2 << "," << inst.box.y2
              << "," << inst.objectness << "\n";
        }
    }
    write_command_manifest(args.out, "discover", cfg,
                           {{"clusters", (fs::path(args.out) / "clusters.csv").string()}});
    std::cout << "unknown detections: " << emb.size() << " clusters: " << k << "\n";
    return 0;
}

int cmd_track(const CommonArgs& args, const std::string& checkpoint, const std::string& dataset) {
    owd::TrainConfig cfg = load_config(args);
    const owd::Checkpoint ckpt = owd::load_checkpoint(checkpoint);
    cfg.detector = ckpt.detector;
    const owd::Dataset ds = owd::load_dataset(dataset);
    cfg.scene = ds.spec;

    // group frames by sequence id
    std::map<int, std::vector<const owd::Scene*>> sequences;
    for (const auto& s : ds.scenes)
        if (s.sequence_id >= 0) sequences[s.sequence_id].push_back(&s);
    if (sequences.empty()) throw owd::SchemaError("dataset contains no sequences");
    for (auto& [_, frames] : sequences)
        std::sort(frames.begin(), frames.end(),
                  [](const owd::Scene* a, const owd::Scene* b) { return a->frame < b->frame; });

    owd::DetectorNet net(ckpt.detector);
    fs::create_directories(args.out);

    double switches = 0.0, idf1 = 0.0, prec = 0.0, rec = 0.0;
    std::ofstream log(fs::path(args.out) / "assignment_log.txt");
    for (const auto& [sid, frames] : sequences) {
        std::vector<std::vector<owd::Instance>> dets(frames.size());
        std::vector<owd::TrackFrame> gt;
        for (std::size_t f = 0; f < frames.size(); ++f) {
            const auto acts = net.forward(ckpt.params, frames[f]->to_input());
            dets[f] = owd::decode(acts.out, ckpt.detector, frames[f]->height, frames[f]->width);
            for (const auto& r : frames[f]->records)
                gt.push_back({static_cast<int>(f), r.track_id, r.box});
        }
        const auto run = owd::run_tracker(dets, cfg.tracker);
        owd::write_mot((fs::path(args.out) / ("tracks_seq" + std::to_string(sid) + ".txt")).string(),
                       run.rows);
        log << "# sequence " << sid << "\n" << owd::format_event_log(run.events);
        const auto score = owd::tracking_metrics(owd::to_track_frames(run.rows), gt);
        switches += score.id_switches;
        idf1 += score.idf1;
        prec += score.precision;
        rec += score.recall;
    }
    const double n = static_cast<double>(sequences.size());
    owd::MetricReport rep;
    rep.values["mean_id_switches"] = switches / n;
    rep.values["mean_idf1"] = idf1 / n;
    rep.values["mean_track_precision"] = prec / n;
    rep.values["mean_track_recall"] = rec / n;
    rep.values["sequences"] = n;
    rep.info["seed"] = std::to_string(cfg.seed);
    rep.info["config_hash"] = owd::config_hash(owd::to_json(cfg));
    const std::string rep_path = (fs::path(args.out) / "track_report.json").string();
    rep.save(rep_path);
    rep.append_csv((fs::path(args.out) / "track_metrics.csv").string());
    write_command_manifest(args.out, "track", cfg, {{"track_report", rep_path}});
    std::cout << "sequences: " << sequences.size() << "\nmean id switches: " << switches / n
              << "\nmean idf1: " << idf1 / n << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"open-world detection toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string dataset, checkpoint, resume;
    bool oracle_teacher_embeddings = false;
    int k_override = 0;
    std::vector<std::string> run_dirs;

    auto add_common = [&](CLI::App* cmd, bool with_out = true) {
        cmd->add_option("--config", args.config, "config file (json)");
        auto* seed_opt = cmd->add_option("--seed", args.seed, "seed override");
        seed_opt->each([&](const std::string&) { args.seed_set = true; });
        if (with_out) cmd->add_option("--out", args.out, "output directory");
    };

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen);

    auto* train = app.add_subcommand("train", "train the detector");
    add_common(train);
    train->add_option("--dataset", dataset, "load scenes from a dataset dir");
    train->add_option("--resume", resume, "resume from checkpoint");

    auto* evald = app.add_subcommand("eval-detect", "detection + unknown metrics");
    add_common(evald);
    evald->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    evald->add_option("--dataset", dataset, "dataset dir")->required();

    auto* evale = app.add_subcommand("eval-embed", "embedding discovery metrics");
    add_common(evale);
    evale->add_option("--checkpoint", checkpoint, "checkpoint file");
    evale->add_option("--dataset", dataset, "dataset dir")->required();
    evale->add_flag("--oracle-teacher", oracle_teacher_embeddings,
                    "score ROI-pooled oracle-teacher embeddings instead of a checkpoint");

    auto* disc = app.add_subcommand("discover", "cluster unknown detections");
    add_common(disc);
    disc->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    disc->add_option("--dataset", dataset, "dataset dir")->required();
    disc->add_option("--k", k_override, "cluster count (default: unknown category count)");

    auto* track = app.add_subcommand("track", "track sequences with embedding association");
    add_common(track);
    track->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    track->add_option("--dataset", dataset, "dataset dir (must contain sequences)")->required();

    auto* report = app.add_subcommand("report", "merge runs into a comparison report");
    add_common(report);
    report->add_option("runs", run_dirs, "run directories")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(args);
        if (train->parsed()) return cmd_train(args, dataset, resume);
        if (evald->parsed()) return cmd_eval_detect(args, checkpoint, dataset);
        if (evale->parsed()) {
            if (!oracle_teacher_embeddings && checkpoint.empty())
                throw owd::SchemaError("eval-embed needs --checkpoint or --oracle-teacher");
            return cmd_eval_embed(args, checkpoint, dataset, oracle_teacher_embeddings);
        }
        if (disc->parsed()) return cmd_discover(args, checkpoint, dataset, k_override);
        if (track->parsed()) return cmd_track(args, checkpoint, dataset);
        if (report->parsed()) {
            owd::write_comparison_report(run_dirs, args.out);
            std::cout << "report rows: " << run_dirs.size() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
