#pragma once

#include <string>
#include <vector>

#include "owd/detector.hpp"
#include "owd/evaluation.hpp"

namespace owd {

struct TrackerConfig {
    double sim_thresh = 0.6;   // min cosine for association
    double iou_gate = 0.1;     // min IoU to allow association; 0 disables
    int max_misses = 3;
    double ema_alpha = 0.9;    // weight on the old embedding
    double birth_score = 0.5;  // min objectness for a new track
};

struct Track {
    int id = 0;
    Box box;
    std::vector<double> embedding;  // unit norm, EMA-smoothed
    int age = 0;                    // frames since birth
    int misses = 0;
    int label = kUnknownLabel;
    double last_score = 0.0;
};

/// One association decision, for the per-frame log.
struct AssignmentEvent {
    enum class Kind { Match, Birth, Death };
    int frame = 0;
    Kind kind = Kind::Match;
    int track_id = -1;
    int detection = -1;  // -1 for deaths
    double cosine = 0.0;
};

/// One emitted track box (MOT-style row).
struct TrackRow {
    int frame = 0;
    int track_id = 0;
    Box box;
    int label = kUnknownLabel;
    double score = 0.0;
};

/// Appearance-first tracking-by-detection: cosine cost on embeddings with
/// an IoU gate, optimal per-frame assignment, EMA appearance updates.
/// One instance per sequence; stateful, single-threaded.
class Tracker {
public:
    explicit Tracker(TrackerConfig cfg) : cfg_(cfg) {}

    std::vector<AssignmentEvent> step(const std::vector<Instance>& detections);

    const std::vector<Track>& tracks() const { return tracks_; }
    int frame() const { return frame_; }

private:
    TrackerConfig cfg_;
    std::vector<Track> tracks_;
    int next_id_ = 0;
    int frame_ = 0;
};

struct TrackRunResult {
    std::vector<TrackRow> rows;           // matched/live track boxes per frame
    std::vector<AssignmentEvent> events;  // full assignment log
};

/// Run a fresh tracker over per-frame detection lists.
TrackRunResult run_tracker(const std::vector<std::vector<Instance>>& per_frame_detections,
                           const TrackerConfig& cfg);

std::vector<TrackFrame> to_track_frames(const std::vector<TrackRow>& rows);

/// MOT-style text: frame, track_id, x, y, w, h, label, score.
void write_mot(const std::string& path, const std::vector<TrackRow>& rows);

std::string format_event_log(const std::vector<AssignmentEvent>& events);

}  // namespace owd
