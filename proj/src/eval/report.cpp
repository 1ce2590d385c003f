#include "drift/eval/report.hpp"

#include "drift/core/error.hpp"

#include <fstream>
#include <iomanip>

namespace drift {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << std::setprecision(10);
    return out;
}

} // namespace

nlohmann::json summary_to_json(const MetricSummary& s) {
    nlohmann::json j = {
        {"sequences", s.sequences}, {"objects", s.objects}, {"J&F_m", s.jf_mean}, {"J_m", s.j_mean}, {"F_m", s.f_mean},
    };
    if (s.j_seen) {
        j["J_s"] = *s.j_seen;
        j["F_s"] = *s.f_seen;
    }
    if (s.j_unseen) {
        j["J_u"] = *s.j_unseen;
        j["F_u"] = *s.f_unseen;
    }
    if (s.overall) {
        j["G"] = *s.overall;
    }
    return j;
}

nlohmann::json results_to_json(std::span<const SequenceResult> results) {
    nlohmann::json out;
    out["summary"] = summary_to_json(aggregate(results));
    auto& seqs = out["sequences"] = nlohmann::json::object();
    for (const auto& r : results) {
        nlohmann::json objs = nlohmann::json::array();
        for (const auto& o : r.objects) {
            nlohmann::json jo = {{"object", o.object}, {"J_m", o.j_mean}, {"F_m", o.f_mean}, {"frames", o.frame_count}};
            if (o.seen) {
                jo["seen"] = *o.seen;
            }
            objs.push_back(jo);
        }
        seqs[r.sequence] = {{"J&F_m", r.jf_mean}, {"J_m", r.j_mean}, {"F_m", r.f_mean}, {"objects", objs}};
    }
    return out;
}

void write_sequence_csv(const std::filesystem::path& path, const SequenceResult& result) {
    auto out = open_out(path);
    out << "frame,object,J,F\n";
    for (const auto& s : result.scores) {
        out << s.frame << ',' << s.object << ',' << s.j << ',' << s.f << '\n';
    }
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve) {
    auto out = open_out(path);
    out << "offset,J&F,sequences\n";
    for (const auto& p : curve) {
        out << p.offset << ',' << p.jf << ',' << p.sequences << '\n';
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
    auto out = open_out(path);
    out << value.dump(2) << '\n';
}

} // namespace drift
