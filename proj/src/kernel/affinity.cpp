#include "drift/kernel/affinity.hpp"

#include "drift/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drift {
namespace {

template <typename T>
void softmax_inplace(std::span<T> row) {
    const T top = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (auto& v : row) {
        v = static_cast<T>(std::exp(static_cast<double>(v - top)));
        total += v;
    }
    for (auto& v : row) {
        v = static_cast<T>(v / total);
    }
}

} // namespace

template <typename T>
DenseMatrix<T> head_affinity(std::span<const T> queries, std::span<const T> keys, int head_dim) {
    if (head_dim <= 0) {
        throw ShapeError("head_affinity: head dimension must be positive");
    }
    const auto d = static_cast<std::size_t>(head_dim);
    if (queries.size() % d != 0 || keys.size() % d != 0 || queries.empty() || keys.empty()) {
        throw ShapeError("head_affinity: query/key sizes are not multiples of the head dimension");
    }
    const int rows = static_cast<int>(queries.size() / d);
    const int cols = static_cast<int>(keys.size() / d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    DenseMatrix<T> out(rows, cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const T* q = queries.data() + static_cast<std::size_t>(i) * d;
        auto row = out.row(i);
        for (int j = 0; j < cols; ++j) {
            const T* k = keys.data() + static_cast<std::size_t>(j) * d;
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                dot += static_cast<double>(q[c]) * k[c];
            }
            row[static_cast<std::size_t>(j)] = static_cast<T>(dot * scale);
        }
        softmax_inplace(row);
    }
    return out;
}

template DenseMatrix<float> head_affinity(std::span<const float>, std::span<const float>, int);
template DenseMatrix<double> head_affinity(std::span<const double>, std::span<const double>, int);

DenseMatrix<float> cosine_affinity(const FeatureSet& target, const FeatureSet& source, double temperature) {
    if (target.channels != source.channels || target.channels <= 0) {
        throw ShapeError("cosine_affinity: feature widths differ");
    }
    if (!(temperature > 0.0)) {
        throw ConfigError("cosine_affinity: temperature must be positive");
    }
    const auto c = static_cast<std::size_t>(target.channels);
    auto norms = [c](const FeatureSet& f) {
        std::vector<double> n(static_cast<std::size_t>(f.location_count));
        for (int i = 0; i < f.location_count; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                const double v = f.values[static_cast<std::size_t>(i) * c + k];
                s += v * v;
            }
            if (!(s > 0.0)) {
                throw ShapeError("cosine_affinity: zero-norm feature row " + std::to_string(i));
            }
            n[static_cast<std::size_t>(i)] = std::sqrt(s);
        }
        return n;
    };
    const auto nt = norms(target);
    const auto ns = norms(source);
    DenseMatrix<float> out(target.location_count, source.location_count);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < target.location_count; ++i) {
        const float* a = &target.values[static_cast<std::size_t>(i) * c];
        auto row = out.row(i);
        for (int j = 0; j < source.location_count; ++j) {
            const float* b = &source.values[static_cast<std::size_t>(j) * c];
            double dot = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                dot += static_cast<double>(a[k]) * b[k];
            }
            row[static_cast<std::size_t>(j)] =
                static_cast<float>(dot / (nt[static_cast<std::size_t>(i)] * ns[static_cast<std::size_t>(j)]) / temperature);
        }
        softmax_inplace(row);
    }
    return out;
}

template <typename T>
DenseMatrix<T> aggregate_heads(std::span<const DenseMatrix<T>> per_head, const HeadWeights& weights) {
    if (per_head.empty() || static_cast<int>(per_head.size()) != weights.size()) {
        throw ShapeError("aggregate_heads: " + std::to_string(per_head.size()) + " heads but " +
                         std::to_string(weights.size()) + " weights");
    }
    const auto w = weights.weights();
    DenseMatrix<T> out(per_head.front().rows, per_head.front().cols);
    for (std::size_t h = 0; h < per_head.size(); ++h) {
        const auto& m = per_head[h];
        if (m.rows != out.rows || m.cols != out.cols) {
            throw ShapeError("aggregate_heads: head shapes differ");
        }
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            out.values[i] += static_cast<T>(w[h] * m.values[i]);
        }
    }
    return out;
}

template DenseMatrix<float> aggregate_heads(std::span<const DenseMatrix<float>>, const HeadWeights&);
template DenseMatrix<double> aggregate_heads(std::span<const DenseMatrix<double>>, const HeadWeights&);

DenseMatrix<float> attention_affinity(const QueryKeySet& target, const QueryKeySet& source,
                                      const HeadWeights& weights) {
    if (target.head_count() != source.head_count() || target.head_dim != source.head_dim) {
        throw ShapeError("attention_affinity: head layouts differ");
    }
    std::vector<DenseMatrix<float>> heads;
    heads.reserve(static_cast<std::size_t>(target.head_count()));
    for (int h = 0; h < target.head_count(); ++h) {
        heads.push_back(head_affinity<float>(target.heads[static_cast<std::size_t>(h)].queries,
                                             source.heads[static_cast<std::size_t>(h)].keys, target.head_dim));
    }
    return aggregate_heads<float>(heads, weights);
}

} // namespace drift
