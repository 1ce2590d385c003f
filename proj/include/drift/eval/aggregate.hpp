#pragma once

#include "drift/core/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drift {

struct ObjectFrameScore {
    int frame = 0;
    int object = 0;
    double j = 0.0;
    double f = 0.0;
};

struct ObjectSummary {
    int object = 0;
    double j_mean = 0.0;
    double f_mean = 0.0;
    int frame_count = 0;
    /// Category split when known (true: seen).
    std::optional<bool> seen;
};

struct SequenceResult {
    std::string sequence;
    std::vector<ObjectFrameScore> scores;
    std::vector<ObjectSummary> objects;
    double j_mean = 0.0;
    double f_mean = 0.0;
    double jf_mean = 0.0;
};

/// Benchmark means over objects; each object contributes its mean over frames.
struct MetricSummary {
    int sequences = 0;
    int objects = 0;
    double j_mean = 0.0;
    double f_mean = 0.0;
    double jf_mean = 0.0; // (j_mean + f_mean) / 2
    // Seen/unseen split, present when every object carries a split tag.
    std::optional<double> j_seen;
    std::optional<double> f_seen;
    std::optional<double> j_unseen;
    std::optional<double> f_unseen;
    /// Mean of the four split values when both splits are non-empty.
    std::optional<double> overall;
};

/// Ground truth and prediction of one sequence for scoring.
struct SequenceScoringInput {
    std::string sequence;
    /// Frame index -> ground truth, at annotated frames only.
    std::map<int, HardMask> truth;
    /// Frame index -> prediction; must cover every scored frame.
    std::map<int, HardMask> prediction;
    /// Object id -> first annotated frame (its initialization frame).
    std::map<int, int> first_frame;
    /// Object id -> split tag (true: seen), when known.
    std::map<int, bool> seen;
};

struct ScoringOptions {
    double boundary_tolerance = 0.008;
    /// Also drop the last frame of the sequence (DAVIS 2017 toolkit convention).
    bool drop_last_frame = false;
    /// Index of the sequence's last frame, used with drop_last_frame.
    int last_frame = -1;
};

/// J and F of every object at every annotated frame after its first one.
/// Throws Error listing the frames that lack a prediction.
SequenceResult score_sequence(const SequenceScoringInput& input, const ScoringOptions& options = {});

/// Per-object means from raw scores (helper of score_sequence).
SequenceResult summarize_sequence(std::string sequence, std::vector<ObjectFrameScore> scores,
                                  const std::map<int, bool>& seen = {});

/// Global means; invariant to the order of `results`.
MetricSummary aggregate(std::span<const SequenceResult> results);

struct CurvePoint {
    int offset = 0;
    double jf = 0.0;
    int sequences = 0;
};

/// Mean J&F by frame offset from the sequence's first frame (frame 0), over
/// the sequences scored at that offset.
std::vector<CurvePoint> per_frame_curve(std::span<const SequenceResult> results);

} // namespace drift
