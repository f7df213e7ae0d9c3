#include "owd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "owd/assignment.hpp"
#include "owd/errors.hpp"
#include "owd/rng.hpp"

using nlohmann::json;

namespace owd {

namespace {

struct RankedPred {
    int image = 0;
    int index = 0;  // within image, for deterministic ties
    double score = 0.0;
    Box box;
};

std::vector<RankedPred> ranked_class_preds(const std::vector<std::vector<Instance>>& preds,
                                           int category) {
    std::vector<RankedPred> out;
    for (std::size_t im = 0; im < preds.size(); ++im)
        for (std::size_t k = 0; k < preds[im].size(); ++k) {
            const Instance& p = preds[im][k];
            if (p.label != category) continue;
            out.push_back({static_cast<int>(im), static_cast<int>(k), p.objectness, p.box});
        }
    std::sort(out.begin(), out.end(), [](const RankedPred& a, const RankedPred& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image != b.image) return a.image < b.image;
        return a.index < b.index;
    });
    return out;
}

}  // namespace

ApResult average_precision(const std::vector<std::vector<Instance>>& preds,
                           const std::vector<std::vector<EvalGt>>& gts, double iou_thresh) {
    ApResult res;
    std::set<int> classes;
    for (const auto& img : gts)
        for (const auto& g : img)
            if (g.split == Split::Known) classes.insert(g.category);

    for (int cls : classes) {
        // per-image gt boxes of this class
        std::vector<std::vector<Box>> cls_gt(gts.size());
        int n_gt = 0;
        for (std::size_t im = 0; im < gts.size(); ++im)
            for (const auto& g : gts[im])
                if (g.split == Split::Known && g.category == cls) {
                    cls_gt[im].push_back(g.box);
                    ++n_gt;
                }

        const auto ranked = ranked_class_preds(preds, cls);
        std::vector<std::vector<char>> used(gts.size());
        for (std::size_t im = 0; im < gts.size(); ++im) used[im].assign(cls_gt[im].size(), 0);

        std::vector<double> prec, rec;
        int tp = 0, fp = 0;
        for (const auto& p : ranked) {
            int best = -1;
            double best_iou = 0.0;
            const auto& boxes = cls_gt[static_cast<std::size_t>(p.image)];
            for (std::size_t g = 0; g < boxes.size(); ++g) {
                if (used[static_cast<std::size_t>(p.image)][g]) continue;
                const double v = iou(p.box, boxes[g]);
                if (v > best_iou) {
                    best = static_cast<int>(g);
                    best_iou = v;
                }
            }
            if (best >= 0 && best_iou >= iou_thresh) {
                used[static_cast<std::size_t>(p.image)][static_cast<std::size_t>(best)] = 1;
                ++tp;
            } else {
                ++fp;
            }
            prec.push_back(static_cast<double>(tp) / (tp + fp));
            rec.push_back(n_gt > 0 ? static_cast<double>(tp) / n_gt : 0.0);
        }

        // all-points interpolation: right-to-left precision envelope
        double ap = 0.0;
        for (int i = static_cast<int>(prec.size()) - 2; i >= 0; --i)
            prec[static_cast<std::size_t>(i)] =
                std::max(prec[static_cast<std::size_t>(i)], prec[static_cast<std::size_t>(i) + 1]);
        double prev_rec = 0.0;
        for (std::size_t i = 0; i < prec.size(); ++i) {
            ap += (rec[i] - prev_rec) * prec[i];
            prev_rec = rec[i];
        }
        res.per_class[cls] = ap;
    }

    if (!res.per_class.empty()) {
        double sum = 0.0;
        for (const auto& [_, ap] : res.per_class) sum += ap;
        res.map = sum / static_cast<double>(res.per_class.size());
    }
    return res;
}

double unknown_recall(const std::vector<std::vector<Instance>>& preds,
                      const std::vector<std::vector<EvalGt>>& gts, double iou_thresh,
                      bool unknown_preds_only) {
    int total = 0, matched = 0;
    for (std::size_t im = 0; im < gts.size(); ++im) {
        std::vector<Box> unk;
        for (const auto& g : gts[im])
            if (g.split == Split::Unknown) unk.push_back(g.box);
        total += static_cast<int>(unk.size());
        if (unk.empty()) continue;

        std::vector<const Instance*> ps;
        if (im < preds.size())
            for (const auto& p : preds[im])
                if (!unknown_preds_only || p.label == kUnknownLabel) ps.push_back(&p);
        std::stable_sort(ps.begin(), ps.end(), [](const Instance* a, const Instance* b) {
            return a->objectness > b->objectness;
        });

        std::vector<char> used(unk.size(), 0);
        for (const Instance* p : ps) {
            int best = -1;
            double best_iou = 0.0;
            for (std::size_t g = 0; g < unk.size(); ++g) {
                if (used[g]) continue;
                const double v = iou(p->box, unk[g]);
                if (v > best_iou) {
                    best = static_cast<int>(g);
                    best_iou = v;
                }
            }
            if (best >= 0 && best_iou >= iou_thresh) {
                used[static_cast<std::size_t>(best)] = 1;
                ++matched;
            }
        }
    }
    return total > 0 ? static_cast<double>(matched) / total : 0.0;
}

// ---------------------------------------------------------------------------
// clustering

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

struct KmeansRun {
    std::vector<int> assign;
    double inertia = 0.0;
};

KmeansRun lloyd(const std::vector<std::vector<double>>& pts, int k, Rng rng) {
    const int n = static_cast<int>(pts.size());
    const std::size_t dim = pts[0].size();

    // k-means++ seeding
    std::vector<std::vector<double>> centers;
    centers.push_back(pts[static_cast<std::size_t>(rng.uniform_int(0, n - 1))]);
    std::vector<double> mind(static_cast<std::size_t>(n), 0.0);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = sq_dist(pts[static_cast<std::size_t>(i)], centers[0]);
            for (std::size_t c = 1; c < centers.size(); ++c)
                best = std::min(best, sq_dist(pts[static_cast<std::size_t>(i)], centers[c]));
            mind[static_cast<std::size_t>(i)] = best;
            total += best;
        }
        if (total <= 0.0) {
            centers.push_back(pts[static_cast<std::size_t>(rng.uniform_int(0, n - 1))]);
            continue;
        }
        const double u = rng.uniform() * total;
        double acc = 0.0;
        int pick = n - 1;
        for (int i = 0; i < n; ++i) {
            acc += mind[static_cast<std::size_t>(i)];
            if (acc >= u) {
                pick = i;
                break;
            }
        }
        centers.push_back(pts[static_cast<std::size_t>(pick)]);
    }

    KmeansRun run;
    run.assign.assign(static_cast<std::size_t>(n), 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = sq_dist(pts[static_cast<std::size_t>(i)], centers[0]);
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(pts[static_cast<std::size_t>(i)],
                                         centers[static_cast<std::size_t>(c)]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (run.assign[static_cast<std::size_t>(i)] != best) {
                run.assign[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
        for (int c = 0; c < k; ++c) {
            std::vector<double> mean(dim, 0.0);
            int count = 0;
            for (int i = 0; i < n; ++i)
                if (run.assign[static_cast<std::size_t>(i)] == c) {
                    for (std::size_t d = 0; d < dim; ++d) mean[d] += pts[static_cast<std::size_t>(i)][d];
                    ++count;
                }
            if (count > 0) {
                for (auto& v : mean) v /= count;
                centers[static_cast<std::size_t>(c)] = std::move(mean);
            }
        }
    }
    run.inertia = 0.0;
    for (int i = 0; i < n; ++i)
        run.inertia += sq_dist(pts[static_cast<std::size_t>(i)],
                               centers[static_cast<std::size_t>(run.assign[static_cast<std::size_t>(i)])]);
    return run;
}

}  // namespace

std::vector<int> kmeans_assign(const std::vector<std::vector<double>>& points, int k,
                               std::uint64_t seed, int restarts) {
    const int n = static_cast<int>(points.size());
    k = std::min(k, n);
    KmeansRun best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        KmeansRun run = lloyd(points, k, Rng(seed, static_cast<std::uint64_t>(r)));
        if (run.inertia < best.inertia) best = std::move(run);
    }
    return best.assign;
}

double nmi_score(const std::vector<int>& a, const std::vector<int>& b) {
    const int n = static_cast<int>(a.size());
    if (n == 0) return 0.0;
    std::map<int, int> ca, cb;
    std::map<std::pair<int, int>, int> cj;
    for (int i = 0; i < n; ++i) {
        ++ca[a[static_cast<std::size_t>(i)]];
        ++cb[b[static_cast<std::size_t>(i)]];
        ++cj[{a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(i)]}];
    }
    auto entropy = [n](const std::map<int, int>& c) {
        double h = 0.0;
        for (const auto& [_, cnt] : c) {
            const double p = static_cast<double>(cnt) / n;
            h -= p * std::log(p);
        }
        return h;
    };
    const double ha = entropy(ca), hb = entropy(cb);
    if (ha == 0.0 && hb == 0.0) return 1.0;  // both trivial partitions agree
    if (ha == 0.0 || hb == 0.0) return 0.0;
    double mi = 0.0;
    for (const auto& [key, cnt] : cj) {
        const double pij = static_cast<double>(cnt) / n;
        const double pi = static_cast<double>(ca[key.first]) / n;
        const double pj = static_cast<double>(cb[key.second]) / n;
        mi += pij * std::log(pij / (pi * pj));
    }
    const double v = 2.0 * mi / (ha + hb);
    return std::clamp(v, 0.0, 1.0);
}

double purity_score(const std::vector<int>& pred, const std::vector<int>& truth) {
    const int n = static_cast<int>(pred.size());
    if (n == 0) return 0.0;
    std::map<int, std::map<int, int>> per_cluster;
    for (int i = 0; i < n; ++i)
        ++per_cluster[pred[static_cast<std::size_t>(i)]][truth[static_cast<std::size_t>(i)]];
    int agree = 0;
    for (const auto& [_, counts] : per_cluster) {
        int best = 0;
        for (const auto& [__, c] : counts) best = std::max(best, c);
        agree += best;
    }
    return static_cast<double>(agree) / n;
}

ClusterQuality clustering_quality(const std::vector<std::vector<double>>& embeddings,
                                  const std::vector<int>& labels, int k, std::uint64_t seed,
                                  int restarts) {
    ClusterQuality q;
    if (embeddings.empty()) {
        q.degenerate = true;
        return q;
    }
    bool identical = true;
    for (const auto& e : embeddings)
        if (e != embeddings.front()) {
            identical = false;
            break;
        }
    if (identical) {
        q.degenerate = true;
        q.nmi = 0.0;
        std::map<int, int> counts;
        for (int l : labels) ++counts[l];
        int best = 0;
        for (const auto& [_, c] : counts) best = std::max(best, c);
        q.purity = static_cast<double>(best) / static_cast<double>(labels.size());
        return q;
    }
    const auto assign = kmeans_assign(embeddings, k, seed, restarts);
    q.nmi = nmi_score(assign, labels);
    q.purity = purity_score(assign, labels);
    return q;
}

// ---------------------------------------------------------------------------
// tracking

TrackingScore tracking_metrics(const std::vector<TrackFrame>& pred,
                               const std::vector<TrackFrame>& gt) {
    TrackingScore score;
    std::map<int, std::vector<const TrackFrame*>> pred_by_frame, gt_by_frame;
    for (const auto& t : pred) pred_by_frame[t.frame].push_back(&t);
    for (const auto& t : gt) gt_by_frame[t.frame].push_back(&t);

    std::map<int, std::vector<std::pair<int, int>>> gt_matches;  // gt id -> (frame, pred id)
    std::map<std::pair<int, int>, int> pair_counts;              // (gt id, pred id) -> frames
    int matched_boxes = 0;

    for (const auto& [frame, gts] : gt_by_frame) {
        const auto it = pred_by_frame.find(frame);
        if (it == pred_by_frame.end()) continue;
        const auto& ps = it->second;
        CostMatrix cost(static_cast<int>(gts.size()), static_cast<int>(ps.size()), kForbidden);
        for (int r = 0; r < cost.rows; ++r)
            for (int c = 0; c < cost.cols; ++c) {
                const double v = iou(gts[static_cast<std::size_t>(r)]->box,
                                     ps[static_cast<std::size_t>(c)]->box);
                if (v >= 0.5) cost.at(r, c) = 1.0 - v;
            }
        for (const auto& [r, c] : hungarian(cost)) {
            const int gid = gts[static_cast<std::size_t>(r)]->id;
            const int pid = ps[static_cast<std::size_t>(c)]->id;
            gt_matches[gid].emplace_back(frame, pid);
            ++pair_counts[{gid, pid}];
            ++matched_boxes;
        }
    }

    for (auto& [gid, timeline] : gt_matches) {
        std::sort(timeline.begin(), timeline.end());
        for (std::size_t i = 1; i < timeline.size(); ++i)
            if (timeline[i].second != timeline[i - 1].second) ++score.id_switches;
    }

    // optimal global id mapping for idf1
    std::set<int> gids, pids;
    for (const auto& [key, _] : pair_counts) {
        gids.insert(key.first);
        pids.insert(key.second);
    }
    const std::vector<int> gv(gids.begin(), gids.end());
    const std::vector<int> pv(pids.begin(), pids.end());
    int idtp = 0;
    if (!gv.empty() && !pv.empty()) {
        CostMatrix cost(static_cast<int>(gv.size()), static_cast<int>(pv.size()), 0.0);
        for (int r = 0; r < cost.rows; ++r)
            for (int c = 0; c < cost.cols; ++c) {
                const auto it = pair_counts.find({gv[static_cast<std::size_t>(r)],
                                                  pv[static_cast<std::size_t>(c)]});
                cost.at(r, c) = it == pair_counts.end() ? 0.0 : -static_cast<double>(it->second);
            }
        for (const auto& [r, c] : hungarian(cost)) {
            const auto it = pair_counts.find({gv[static_cast<std::size_t>(r)],
                                              pv[static_cast<std::size_t>(c)]});
            if (it != pair_counts.end()) idtp += it->second;
        }
    }

    const auto total_gt = static_cast<int>(gt.size());
    const auto total_pred = static_cast<int>(pred.size());
    score.idf1 = (total_gt + total_pred) > 0
                     ? 2.0 * idtp / static_cast<double>(total_gt + total_pred)
                     : 0.0;
    score.precision = total_pred > 0 ? static_cast<double>(matched_boxes) / total_pred : 0.0;
    score.recall = total_gt > 0 ? static_cast<double>(matched_boxes) / total_gt : 0.0;
    return score;
}

// ---------------------------------------------------------------------------
// report plumbing

std::string MetricReport::to_json() const {
    json j;
    j["values"] = values;
    j["info"] = info;
    return j.dump(2);
}

MetricReport MetricReport::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SchemaError("missing metric report: " + path);
    json j;
    try {
        f >> j;
        MetricReport r;
        r.values = j.at("values").get<std::map<std::string, double>>();
        r.info = j.at("info").get<std::map<std::string, std::string>>();
        return r;
    } catch (const json::exception& e) {
        throw SchemaError("bad metric report " + path + ": " + e.what());
    }
}

void MetricReport::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << to_json() << "\n";
}

void MetricReport::append_csv(const std::string& path) const {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream f(path, std::ios::app);
    if (!f) throw IoError("cannot append " + path);
    if (fresh) {
        bool first = true;
        for (const auto& [k, _] : info) {
            f << (first ? "" : ",") << k;
            first = false;
        }
        for (const auto& [k, _] : values) f << (first ? "" : ",") << k;
        f << "\n";
    }
    bool first = true;
    for (const auto& [_, v] : info) {
        f << (first ? "" : ",") << v;
        first = false;
    }
    for (const auto& [_, v] : values) {
        f << (first ? "" : ",") << v;
        first = false;
    }
    f << "\n";
}

}  // namespace owd
