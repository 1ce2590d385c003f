#pragma once

#include "drift/eval/aggregate.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>

namespace drift {

/// Global summary keyed like the benchmark tables: "J&F_m", "J_m", "F_m" and,
/// for split datasets, "J_s", "F_s", "J_u", "F_u", "G".
nlohmann::json summary_to_json(const MetricSummary& summary);

/// Summary plus per-sequence and per-object means.
nlohmann::json results_to_json(std::span<const SequenceResult> results);

/// "frame,object,J,F" rows of one sequence.
void write_sequence_csv(const std::filesystem::path& path, const SequenceResult& result);

/// "offset,J&F,sequences" rows.
void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve);

void write_json(const std::filesystem::path& path, const nlohmann::json& value);

} // namespace drift
