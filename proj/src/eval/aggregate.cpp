#include "drift/eval/aggregate.hpp"

#include "drift/core/error.hpp"
#include "drift/eval/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace drift {
namespace {

// Order-independent mean: sort before summing.
double stable_mean(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

SequenceResult summarize_sequence(std::string sequence, std::vector<ObjectFrameScore> scores,
                                  const std::map<int, bool>& seen) {
    std::sort(scores.begin(), scores.end(), [](const ObjectFrameScore& a, const ObjectFrameScore& b) {
        return a.frame != b.frame ? a.frame < b.frame : a.object < b.object;
    });
    SequenceResult out;
    out.sequence = std::move(sequence);
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> per_object;
    for (const auto& s : scores) {
        per_object[s.object].first.push_back(s.j);
        per_object[s.object].second.push_back(s.f);
    }
    std::vector<double> js;
    std::vector<double> fs;
    for (auto& [object, values] : per_object) {
        ObjectSummary o;
        o.object = object;
        o.frame_count = static_cast<int>(values.first.size());
        o.j_mean = stable_mean(values.first);
        o.f_mean = stable_mean(values.second);
        if (auto it = seen.find(object); it != seen.end()) {
            o.seen = it->second;
        }
        js.push_back(o.j_mean);
        fs.push_back(o.f_mean);
        out.objects.push_back(o);
    }
    out.scores = std::move(scores);
    out.j_mean = stable_mean(js);
    out.f_mean = stable_mean(fs);
    out.jf_mean = (out.j_mean + out.f_mean) / 2.0;
    return out;
}

SequenceResult score_sequence(const SequenceScoringInput& input, const ScoringOptions& options) {
    std::vector<ObjectFrameScore> scores;
    std::vector<int> missing;
    for (const auto& [frame, truth] : input.truth) {
        if (options.drop_last_frame && frame == options.last_frame) {
            continue;
        }
        bool needed = false;
        for (const auto& [object, first] : input.first_frame) {
            needed = needed || frame > first;
        }
        if (!needed) {
            continue;
        }
        const auto pred = input.prediction.find(frame);
        if (pred == input.prediction.end()) {
            missing.push_back(frame);
            continue;
        }
        for (const auto& [object, first] : input.first_frame) {
            if (frame <= first) {
                continue;
            }
            const auto p = pred->second.binary(object);
            const auto g = truth.binary(object);
            scores.push_back({frame, object, jaccard(p, g), boundary_f(p, g, options.boundary_tolerance)});
        }
    }
    if (!missing.empty()) {
        std::ostringstream os;
        os << input.sequence << ": no prediction for annotated frame(s)";
        for (int f : missing) {
            os << ' ' << f;
        }
        throw Error(os.str());
    }
    return summarize_sequence(input.sequence, std::move(scores), input.seen);
}

MetricSummary aggregate(std::span<const SequenceResult> results) {
    MetricSummary out;
    out.sequences = static_cast<int>(results.size());
    std::vector<double> js;
    std::vector<double> fs;
    std::vector<double> js_seen;
    std::vector<double> fs_seen;
    std::vector<double> js_unseen;
    std::vector<double> fs_unseen;
    bool all_tagged = true;
    for (const auto& r : results) {
        for (const auto& o : r.objects) {
            js.push_back(o.j_mean);
            fs.push_back(o.f_mean);
            if (!o.seen.has_value()) {
                all_tagged = false;
            } else if (*o.seen) {
                js_seen.push_back(o.j_mean);
                fs_seen.push_back(o.f_mean);
            } else {
                js_unseen.push_back(o.j_mean);
                fs_unseen.push_back(o.f_mean);
            }
        }
    }
    out.objects = static_cast<int>(js.size());
    out.j_mean = stable_mean(js);
    out.f_mean = stable_mean(fs);
    out.jf_mean = (out.j_mean + out.f_mean) / 2.0;
    if (all_tagged && !js.empty()) {
        if (!js_seen.empty()) {
            out.j_seen = stable_mean(js_seen);
            out.f_seen = stable_mean(fs_seen);
        }
        if (!js_unseen.empty()) {
            out.j_unseen = stable_mean(js_unseen);
            out.f_unseen = stable_mean(fs_unseen);
        }
        if (out.j_seen && out.j_unseen) {
            out.overall = (*out.j_seen + *out.f_seen + *out.j_unseen + *out.f_unseen) / 4.0;
        }
    }
    return out;
}

std::vector<CurvePoint> per_frame_curve(std::span<const SequenceResult> results) {
    std::map<int, std::vector<double>> by_offset;
    for (const auto& r : results) {
        std::map<int, std::vector<double>> per_frame;
        for (const auto& s : r.scores) {
            per_frame[s.frame].push_back((s.j + s.f) / 2.0);
        }
        for (auto& [frame, values] : per_frame) {
            by_offset[frame].push_back(stable_mean(values));
        }
    }
    std::vector<CurvePoint> out;
    for (auto& [offset, values] : by_offset) {
        out.push_back({offset, stable_mean(values), static_cast<int>(values.size())});
    }
    return out;
}

} // namespace drift
