#include "owd/tracker.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "owd/assignment.hpp"
#include "owd/errors.hpp"

namespace owd {

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void renormalize(std::vector<double>& v) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double n = std::sqrt(n2);
    if (n > 1e-12)
        for (auto& x : v) x /= n;
}

}  // namespace

std::vector<AssignmentEvent> Tracker::step(const std::vector<Instance>& detections) {
    std::vector<AssignmentEvent> log;

    CostMatrix cost(static_cast<int>(tracks_.size()), static_cast<int>(detections.size()),
                    kForbidden);
    for (int r = 0; r < cost.rows; ++r) {
        const Track& t = tracks_[static_cast<std::size_t>(r)];
        for (int c = 0; c < cost.cols; ++c) {
            const Instance& d = detections[static_cast<std::size_t>(c)];
            const double cos = cosine(t.embedding, d.embedding);
            if (cos < cfg_.sim_thresh) continue;
            if (iou(t.box, d.box) < cfg_.iou_gate) continue;
            cost.at(r, c) = 1.0 - cos;
        }
    }
    const auto matches = hungarian(cost);

    std::vector<char> track_matched(tracks_.size(), 0);
    std::vector<char> det_matched(detections.size(), 0);
    for (const auto& [r, c] : matches) {
        Track& t = tracks_[static_cast<std::size_t>(r)];
        const Instance& d = detections[static_cast<std::size_t>(c)];
        track_matched[static_cast<std::size_t>(r)] = 1;
        det_matched[static_cast<std::size_t>(c)] = 1;
        t.box = d.box;
        t.label = d.label;
        t.last_score = d.objectness;
        t.misses = 0;
        for (std::size_t i = 0; i < t.embedding.size(); ++i)
            t.embedding[i] = cfg_.ema_alpha * t.embedding[i] + (1.0 - cfg_.ema_alpha) * d.embedding[i];
        renormalize(t.embedding);
        log.push_back({frame_, AssignmentEvent::Kind::Match, t.id, c, 1.0 - cost.at(r, c)});
    }

    // unmatched tracks age out
    std::vector<Track> alive;
    alive.reserve(tracks_.size());
    for (std::size_t r = 0; r < tracks_.size(); ++r) {
        Track& t = tracks_[r];
        ++t.age;
        if (!track_matched[r]) {
            ++t.misses;
            if (t.misses > cfg_.max_misses) {
                log.push_back({frame_, AssignmentEvent::Kind::Death, t.id, -1, 0.0});
                continue;
            }
        }
        alive.push_back(std::move(t));
    }
    tracks_ = std::move(alive);

    // births
    for (std::size_t c = 0; c < detections.size(); ++c) {
        if (det_matched[c]) continue;
        const Instance& d = detections[c];
        if (d.objectness < cfg_.birth_score) continue;
        Track t;
        t.id = next_id_++;
        t.box = d.box;
        t.embedding = d.embedding;
        renormalize(t.embedding);
        t.age = 0;
        t.misses = 0;
        t.label = d.label;
        t.last_score = d.objectness;
        log.push_back({frame_, AssignmentEvent::Kind::Birth, t.id, static_cast<int>(c), 0.0});
        tracks_.push_back(std::move(t));
    }

    ++frame_;
    return log;
}

TrackRunResult run_tracker(const std::vector<std::vector<Instance>>& per_frame_detections,
                           const TrackerConfig& cfg) {
    Tracker tracker(cfg);
    TrackRunResult res;
    for (std::size_t f = 0; f < per_frame_detections.size(); ++f) {
        auto events = tracker.step(per_frame_detections[f]);
        for (const auto& e : events) {
            if (e.kind == AssignmentEvent::Kind::Death) continue;
            // emit the track's box for this frame on match or birth
            for (const Track& t : tracker.tracks()) {
                if (t.id != e.track_id) continue;
                res.rows.push_back({static_cast<int>(f), t.id, t.box, t.label, t.last_score});
                break;
            }
        }
        res.events.insert(res.events.end(), events.begin(), events.end());
    }
    return res;
}

std::vector<TrackFrame> to_track_frames(const std::vector<TrackRow>& rows) {
    std::vector<TrackFrame> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back({r.frame, r.track_id, r.box});
    return out;
}

void write_mot(const std::string& path, const std::vector<TrackRow>& rows) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.2f,%.2f,%.2f,%.2f,%d,%.4f\n", r.frame,
                      r.track_id, r.box.x1, r.box.y1, r.box.width(), r.box.height(), r.label,
                      r.score);
        f << buf;
    }
}

std::string format_event_log(const std::vector<AssignmentEvent>& events) {
    std::string out;
    char buf[128];
    for (const auto& e : events) {
        const char* kind = e.kind == AssignmentEvent::Kind::Match
                               ? "match"
                               : (e.kind == AssignmentEvent::Kind::Birth ? "birth" : "death");
        std::snprintf(buf, sizeof(buf), "%d %s track=%d det=%d cos=%.6f\n", e.frame, kind,
                      e.track_id, e.detection, e.cosine);
        out += buf;
    }
    return out;
}

}  // namespace owd
