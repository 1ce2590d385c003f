#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace drift {

/// Row-major dense matrix used for small-scale affinity work and reference paths.
template <typename T>
struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<T> values;

    DenseMatrix() = default;
    DenseMatrix(int r, int c, T fill = T{})
        : rows(r), cols(c), values(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    T& operator()(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    const T& operator()(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }

    std::span<T> row(int r) { return {values.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const T> row(int r) const {
        return {values.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }

    static DenseMatrix identity(int n) {
        DenseMatrix m(n, n);
        for (int i = 0; i < n; ++i) {
            m(i, i) = T{1};
        }
        return m;
    }
};

} // namespace drift
