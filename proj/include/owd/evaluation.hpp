#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "owd/detector.hpp"
#include "owd/synthdata.hpp"

namespace owd {

/// One ground-truth box for evaluation (with its open-world split flag).
struct EvalGt {
    Box box;
    int category = 0;
    Split split = Split::Known;
};

struct ApResult {
    std::map<int, double> per_class;  // known category id -> AP
    double map = 0.0;
};

/// PASCAL-style all-points-interpolated AP at a single IoU threshold,
/// greedy score-order matching per class. Classes absent from gt are
/// excluded from the mean.
ApResult average_precision(const std::vector<std::vector<Instance>>& preds,
                           const std::vector<std::vector<EvalGt>>& gts, double iou_thresh = 0.5);

/// Fraction of unknown gt boxes matched one-to-one by predictions at
/// IoU >= thresh, score-descending greedy. By default only predictions
/// labelled UNKNOWN count; unknown_preds_only=false admits every
/// prediction.
double unknown_recall(const std::vector<std::vector<Instance>>& preds,
                      const std::vector<std::vector<EvalGt>>& gts, double iou_thresh = 0.5,
                      bool unknown_preds_only = true);

struct ClusterQuality {
    double nmi = 0.0;
    double purity = 0.0;
    bool degenerate = false;
};

/// k-means (fixed seed, `restarts` restarts, best inertia) followed by NMI
/// and purity against the hidden labels. All-identical embeddings are
/// reported as degenerate with NMI 0.
ClusterQuality clustering_quality(const std::vector<std::vector<double>>& embeddings,
                                  const std::vector<int>& labels, int k, std::uint64_t seed = 0,
                                  int restarts = 10);

/// k-means labels only (used by the discover command).
std::vector<int> kmeans_assign(const std::vector<std::vector<double>>& points, int k,
                               std::uint64_t seed, int restarts);

double nmi_score(const std::vector<int>& a, const std::vector<int>& b);
double purity_score(const std::vector<int>& pred, const std::vector<int>& truth);

/// One tracked box observation.
struct TrackFrame {
    int frame = 0;
    int id = 0;
    Box box;
};

struct TrackingScore {
    int id_switches = 0;
    double idf1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

/// Per-frame hungarian matching at IoU >= 0.5; an id switch is counted
/// whenever a gt track's matched pred id differs from its previously
/// matched pred id. idf1 uses the optimal global gt<->pred id mapping.
TrackingScore tracking_metrics(const std::vector<TrackFrame>& pred,
                               const std::vector<TrackFrame>& gt);

/// Flat run summary written as canonical JSON plus an appendable CSV row.
struct MetricReport {
    std::map<std::string, double> values;
    std::map<std::string, std::string> info;  // config echo, seed, notes

    std::string to_json() const;
    static MetricReport from_json_file(const std::string& path);
    void save(const std::string& path) const;
    void append_csv(const std::string& path) const;
};

}  // namespace owd
