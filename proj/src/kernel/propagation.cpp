#include "drift/kernel/propagation.hpp"

#include "drift/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace drift {
namespace {

struct Candidate {
    float value;
    std::uint32_t slot;
    std::uint32_t location;
};

bool ranks_before(const Candidate& a, const Candidate& b) {
    if (a.value != b.value) {
        return a.value > b.value;
    }
    if (a.slot != b.slot) {
        return a.slot < b.slot;
    }
    return a.location < b.location;
}

struct Offset {
    int dy;
    int dx;
};

std::vector<Offset> radius_offsets(double radius) {
    std::vector<Offset> out;
    const int reach = static_cast<int>(std::floor(radius));
    const double r2 = radius * radius;
    for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
            if (dy * dy + dx * dx <= r2) {
                out.push_back({dy, dx});
            }
        }
    }
    return out;
}

// Radius filter, joint top-k and renormalization of one target row.
// `value_at(slot, location)` returns the dense affinity entry.
template <typename ValueAt>
void select_row(int target, const LatticeGeometry& geometry, const std::vector<Offset>& offsets,
                std::span<const int> source_frames, int top_k, ValueAt value_at, std::vector<Candidate>& out) {
    out.clear();
    const int ty = geometry.row_of(target);
    const int tx = geometry.col_of(target);
    const int lh = geometry.latent_height();
    const int lw = geometry.latent_width();
    const auto slot_count = static_cast<std::uint32_t>(source_frames.size());
    for (std::uint32_t s = 0; s < slot_count; ++s) {
        for (const auto& o : offsets) {
            const int y = ty + o.dy;
            const int x = tx + o.dx;
            if (y < 0 || y >= lh || x < 0 || x >= lw) {
                continue;
            }
            const auto loc = static_cast<std::uint32_t>(geometry.location(y, x));
            out.push_back({value_at(s, loc), s, loc});
        }
    }
    if (static_cast<int>(out.size()) > top_k) {
        std::nth_element(out.begin(), out.begin() + (top_k - 1), out.end(), ranks_before);
        out.resize(static_cast<std::size_t>(top_k));
    }
    double total = 0.0;
    for (const auto& c : out) {
        total += std::max(0.0f, c.value);
    }
    if (!(total > 0.0)) {
        // Everything underflowed: keep the co-located cell of the most recent reference.
        std::uint32_t recent = 0;
        for (std::uint32_t s = 1; s < slot_count; ++s) {
            if (source_frames[s] > source_frames[recent]) {
                recent = s;
            }
        }
        out.assign(1, Candidate{1.0f, recent, static_cast<std::uint32_t>(target)});
        return;
    }
    for (auto& c : out) {
        c.value = static_cast<float>(std::max(0.0f, c.value) / total);
    }
    std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        return a.slot != b.slot ? a.slot < b.slot : a.location < b.location;
    });
}

PropagationKernel empty_kernel(const LatticeGeometry& geometry, std::span<const int> source_frames) {
    if (source_frames.empty()) {
        throw ShapeError("propagation kernel needs at least one reference frame");
    }
    PropagationKernel k;
    k.target_count = geometry.location_count();
    k.source_locations = geometry.location_count();
    k.source_frames.assign(source_frames.begin(), source_frames.end());
    k.row_offsets.reserve(static_cast<std::size_t>(k.target_count) + 1);
    k.row_offsets.push_back(0);
    return k;
}

void append_row(PropagationKernel& k, const std::vector<Candidate>& row) {
    for (const auto& c : row) {
        k.slots.push_back(c.slot);
        k.locations.push_back(c.location);
        k.values.push_back(c.value);
    }
    k.row_offsets.push_back(static_cast<std::uint32_t>(k.values.size()));
}

// Fills block[s].row(r) for target rows [start, start + rows) via `fill_row`,
// sparsifies, and appends to the kernel.
template <typename FillRow>
void build_blocked(PropagationKernel& kernel, const LatticeGeometry& geometry, std::span<const int> source_frames,
                   const SparsifyOptions& options, FillRow fill_row) {
    const int n = geometry.location_count();
    const int slots = static_cast<int>(source_frames.size());
    const int block = std::max(1, std::min(options.block_rows, n));
    const auto offsets = radius_offsets(options.radius);
    std::vector<DenseMatrix<float>> buffers(static_cast<std::size_t>(slots), DenseMatrix<float>(block, n));
    std::vector<std::vector<Candidate>> selected(static_cast<std::size_t>(block));
    for (int start = 0; start < n; start += block) {
        const int rows = std::min(block, n - start);
#pragma omp parallel for schedule(dynamic, 4)
        for (int r = 0; r < rows; ++r) {
            for (int s = 0; s < slots; ++s) {
                fill_row(start + r, s, buffers[static_cast<std::size_t>(s)].row(r));
            }
            select_row(start + r, geometry, offsets, source_frames, options.top_k,
                       [&](std::uint32_t slot, std::uint32_t loc) {
                           return buffers[slot](r, static_cast<int>(loc));
                       },
                       selected[static_cast<std::size_t>(r)]);
        }
        for (int r = 0; r < rows; ++r) {
            append_row(kernel, selected[static_cast<std::size_t>(r)]);
        }
    }
}

} // namespace

void SparsifyOptions::validate() const {
    if (!(radius > 0.0)) {
        throw ConfigError("sparsify: radius must be positive");
    }
    if (top_k < 1) {
        throw ConfigError("sparsify: top_k must be at least 1");
    }
    if (block_rows < 1) {
        throw ConfigError("sparsify: block_rows must be at least 1");
    }
}

void PropagationKernel::validate(const LatticeGeometry& geometry, const SparsifyOptions& options,
                                 double tolerance) const {
    if (row_offsets.size() != static_cast<std::size_t>(target_count) + 1) {
        throw ShapeError("kernel: row offsets do not cover every target row");
    }
    const double r2 = options.radius * options.radius;
    for (int q = 0; q < target_count; ++q) {
        const auto b = row_begin(q);
        const auto e = row_end(q);
        if (e - b > static_cast<std::size_t>(options.top_k)) {
            throw ShapeError("kernel: row " + std::to_string(q) + " exceeds top_k");
        }
        double total = 0.0;
        for (auto i = b; i < e; ++i) {
            if (values[i] < 0.0f) {
                throw ShapeError("kernel: negative entry");
            }
            if (slots[i] >= source_frames.size()) {
                throw ShapeError("kernel: slot out of range");
            }
            if (geometry.squared_distance(q, static_cast<int>(locations[i])) > r2) {
                throw ShapeError("kernel: entry outside radius in row " + std::to_string(q));
            }
            total += values[i];
        }
        if (std::abs(total - 1.0) > tolerance) {
            throw ShapeError("kernel: row " + std::to_string(q) + " sums to " + std::to_string(total));
        }
    }
}

PropagationKernel sparsify(std::span<const DenseMatrix<float>> per_reference, std::span<const int> source_frames,
                           const LatticeGeometry& geometry, const SparsifyOptions& options) {
    options.validate();
    if (per_reference.size() != source_frames.size()) {
        throw ShapeError("sparsify: one dense block per reference frame required");
    }
    const int n = geometry.location_count();
    for (const auto& m : per_reference) {
        if (m.rows != n || m.cols != n) {
            throw ShapeError("sparsify: affinity is not location_count x location_count");
        }
    }
    auto kernel = empty_kernel(geometry, source_frames);
    const auto offsets = radius_offsets(options.radius);
    std::vector<Candidate> row;
    for (int q = 0; q < n; ++q) {
        select_row(q, geometry, offsets, source_frames, options.top_k,
                   [&](std::uint32_t slot, std::uint32_t loc) { return per_reference[slot](q, static_cast<int>(loc)); },
                   row);
        append_row(kernel, row);
    }
    return kernel;
}

PropagationKernel build_attention_kernel(const QueryKeySet& target, std::span<const QueryKeySet* const> references,
                                         std::span<const int> source_frames, const HeadWeights& weights,
                                         const LatticeGeometry& geometry, const SparsifyOptions& options) {
    options.validate();
    target.validate();
    const int n = geometry.location_count();
    if (target.location_count != n) {
        throw ShapeError("attention kernel: target locations differ from geometry");
    }
    if (references.size() != source_frames.size()) {
        throw ShapeError("attention kernel: one key set per reference frame required");
    }
    if (weights.size() != target.head_count()) {
        throw ShapeError("attention kernel: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(target.head_count()) + " heads");
    }
    for (const auto* ref : references) {
        if (ref == nullptr || ref->location_count != n || ref->head_dim != target.head_dim ||
            ref->head_count() != target.head_count()) {
            throw ShapeError("attention kernel: reference key layout differs from target");
        }
    }
    const auto w = weights.weights();
    const int d = target.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    auto kernel = empty_kernel(geometry, source_frames);
    build_blocked(kernel, geometry, source_frames, options, [&](int q, int s, std::span<float> out) {
        thread_local std::vector<double> logits;
        logits.resize(static_cast<std::size_t>(n));
        std::fill(out.begin(), out.end(), 0.0f);
        const auto& ref = *references[static_cast<std::size_t>(s)];
        for (int h = 0; h < target.head_count(); ++h) {
            const float* qrow = &target.heads[static_cast<std::size_t>(h)].queries[static_cast<std::size_t>(q) * d];
            const float* keys = ref.heads[static_cast<std::size_t>(h)].keys.data();
            double top = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < n; ++j) {
                const float* k = keys + static_cast<std::size_t>(j) * d;
                double dot = 0.0;
                for (int c = 0; c < d; ++c) {
                    dot += static_cast<double>(qrow[c]) * k[c];
                }
                logits[static_cast<std::size_t>(j)] = dot * scale;
                top = std::max(top, dot * scale);
            }
            double total = 0.0;
            for (auto& v : logits) {
                v = std::exp(v - top);
                total += v;
            }
            const double wh = w[static_cast<std::size_t>(h)];
            for (int j = 0; j < n; ++j) {
                out[static_cast<std::size_t>(j)] += static_cast<float>(wh * logits[static_cast<std::size_t>(j)] / total);
            }
        }
    });
    return kernel;
}

PropagationKernel build_cosine_kernel(const FeatureSet& target, std::span<const FeatureSet* const> references,
                                      std::span<const int> source_frames, double temperature,
                                      const LatticeGeometry& geometry, const SparsifyOptions& options) {
    options.validate();
    if (!(temperature > 0.0)) {
        throw ConfigError("cosine kernel: temperature must be positive");
    }
    const int n = geometry.location_count();
    const int c = target.channels;
    if (target.location_count != n || references.size() != source_frames.size()) {
        throw ShapeError("cosine kernel: shape mismatch");
    }
    auto normalized = [&](const FeatureSet& f) {
        if (f.location_count != n || f.channels != c) {
            throw ShapeError("cosine kernel: reference features differ from target");
        }
        std::vector<double> out(f.values.begin(), f.values.end());
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = 0; k < c; ++k) {
                s += out[static_cast<std::size_t>(i) * c + k] * out[static_cast<std::size_t>(i) * c + k];
            }
            if (!(s > 0.0)) {
                throw ShapeError("cosine kernel: zero-norm feature row " + std::to_string(i));
            }
            s = std::sqrt(s);
            for (int k = 0; k < c; ++k) {
                out[static_cast<std::size_t>(i) * c + k] /= s;
            }
        }
        return out;
    };
    const auto tq = normalized(target);
    std::vector<std::vector<double>> refs;
    for (const auto* r : references) {
        refs.push_back(normalized(*r));
    }
    auto kernel = empty_kernel(geometry, source_frames);
    build_blocked(kernel, geometry, source_frames, options, [&](int q, int s, std::span<float> out) {
        thread_local std::vector<double> logits;
        logits.resize(static_cast<std::size_t>(n));
        const double* a = &tq[static_cast<std::size_t>(q) * c];
        const auto& ref = refs[static_cast<std::size_t>(s)];
        double top = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            const double* b = &ref[static_cast<std::size_t>(j) * c];
            double dot = 0.0;
            for (int k = 0; k < c; ++k) {
                dot += a[k] * b[k];
            }
            logits[static_cast<std::size_t>(j)] = dot / temperature;
            top = std::max(top, dot / temperature);
        }
        double total = 0.0;
        for (auto& v : logits) {
            v = std::exp(v - top);
            total += v;
        }
        for (int j = 0; j < n; ++j) {
            out[static_cast<std::size_t>(j)] = static_cast<float>(logits[static_cast<std::size_t>(j)] / total);
        }
    });
    return kernel;
}

namespace reference {

PropagationKernel build_attention_kernel(const QueryKeySet& target, std::span<const QueryKeySet* const> references,
                                         std::span<const int> source_frames, const HeadWeights& weights,
                                         const LatticeGeometry& geometry, const SparsifyOptions& options) {
    const int n = geometry.location_count();
    const int d = target.head_dim;
    const auto w = weights.weights();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    if (static_cast<int>(w.size()) != target.head_count()) {
        throw ShapeError("reference kernel: weight/head count mismatch");
    }
    std::vector<DenseMatrix<float>> dense;
    for (const auto* ref : references) {
        DenseMatrix<float> agg(n, n);
        std::vector<double> row(static_cast<std::size_t>(n));
        for (int h = 0; h < target.head_count(); ++h) {
            const auto& tq = target.heads[static_cast<std::size_t>(h)].queries;
            const auto& rk = ref->heads[static_cast<std::size_t>(h)].keys;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    double dot = 0.0;
                    for (int c = 0; c < d; ++c) {
                        dot += static_cast<double>(tq[static_cast<std::size_t>(i) * d + c]) *
                               rk[static_cast<std::size_t>(j) * d + c];
                    }
                    row[static_cast<std::size_t>(j)] = dot * scale;
                }
                const double top = *std::max_element(row.begin(), row.end());
                double total = 0.0;
                for (auto& v : row) {
                    v = std::exp(v - top);
                    total += v;
                }
                for (int j = 0; j < n; ++j) {
                    agg(i, j) += static_cast<float>(w[static_cast<std::size_t>(h)] * row[static_cast<std::size_t>(j)] / total);
                }
            }
        }
        dense.push_back(std::move(agg));
    }
    return sparsify(dense, source_frames, geometry, options);
}

} // namespace reference

} // namespace drift
