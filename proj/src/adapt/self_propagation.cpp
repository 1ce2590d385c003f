#include "drift/adapt/self_propagation.hpp"

#include "drift/core/error.hpp"
#include "drift/kernel/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace drift {
namespace {

struct BceTerm {
    double loss;
    double slope; // d bce / d prediction, zero where the clamp is active
};

BceTerm bce(double prediction, double target, double epsilon) {
    const double p = std::clamp(prediction, epsilon, 1.0 - epsilon);
    const double loss = -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
    const bool clamped = prediction < epsilon || prediction > 1.0 - epsilon;
    return {loss, clamped ? 0.0 : (p - target) / (p * (1.0 - p))};
}

template <typename T>
void check_inputs(const BasicQueryKeySet<T>& qk, const HeadWeights& weights, std::span<const Grid<float>> targets,
                  double epsilon) {
    qk.validate();
    if (qk.head_count() == 0 || qk.location_count == 0) {
        throw ShapeError("self-propagation loss: empty query/key set");
    }
    if (weights.size() != qk.head_count()) {
        throw ShapeError("self-propagation loss: " + std::to_string(weights.size()) + " head weights for " +
                         std::to_string(qk.head_count()) + " heads");
    }
    if (targets.empty()) {
        throw ShapeError("self-propagation loss: no target channels");
    }
    for (const auto& t : targets) {
        if (t.size() != static_cast<std::size_t>(qk.location_count)) {
            throw ShapeError("self-propagation loss: target size differs from the location count");
        }
    }
    if (!(epsilon > 0.0 && epsilon < 0.5)) {
        throw ConfigError("self-propagation loss: epsilon must lie in (0, 0.5)");
    }
}

template <typename T>
double dot(const T* a, const T* b, int d) {
    double acc = 0.0;
    for (int c = 0; c < d; ++c) {
        acc += static_cast<double>(a[c]) * b[c];
    }
    return acc;
}

} // namespace

template <typename T>
SelfPropagationResult self_propagation_loss(const BasicQueryKeySet<T>& qk, const HeadWeights& weights,
                                            std::span<const Grid<float>> targets, bool with_gradient,
                                            double epsilon) {
    check_inputs(qk, weights, targets, epsilon);
    const int n = qk.location_count;
    const int d = qk.head_dim;
    const int heads = qk.head_count();
    const int channels = static_cast<int>(targets.size());
    const auto nn = static_cast<std::size_t>(n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    const double norm = 1.0 / (static_cast<double>(n) * channels);
    const std::vector<double> w = weights.weights();

    // Targets location-major so a row of Abar contracts against contiguous memory.
    std::vector<double> m(nn * static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) {
        for (std::size_t j = 0; j < nn; ++j) {
            m[j * channels + c] = targets[static_cast<std::size_t>(c)][j];
        }
    }

    std::vector<double> row_loss(nn, 0.0);
    std::vector<double> row_max(static_cast<std::size_t>(heads) * nn);
    std::vector<double> row_total(static_cast<std::size_t>(heads) * nn);
    std::vector<double> row_g(static_cast<std::size_t>(heads) * nn, 0.0);
    std::vector<double> dp(nn * static_cast<std::size_t>(channels), 0.0);

    SelfPropagationResult result;
    if (with_gradient) {
        result.qk_gradient = QueryKeySet64(n, d, heads);
    }

#pragma omp parallel
    {
        std::vector<T> attn(static_cast<std::size_t>(heads) * nn);
        std::vector<double> abar(nn);
        std::vector<double> dabar(nn);
        std::vector<double> pred(static_cast<std::size_t>(channels));

#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            std::fill(abar.begin(), abar.end(), 0.0);
            for (int h = 0; h < heads; ++h) {
                const auto& head = qk.heads[static_cast<std::size_t>(h)];
                const T* q = head.queries.data() + ii * d;
                T* a = attn.data() + static_cast<std::size_t>(h) * nn;
                T top = -std::numeric_limits<T>::infinity();
                for (int j = 0; j < n; ++j) {
                    a[j] = static_cast<T>(dot(q, head.keys.data() + static_cast<std::size_t>(j) * d, d) * scale);
                    top = std::max(top, a[j]);
                }
                double total = 0.0;
                for (int j = 0; j < n; ++j) {
                    a[j] = static_cast<T>(std::exp(static_cast<double>(a[j] - top)));
                    total += a[j];
                }
                for (int j = 0; j < n; ++j) {
                    a[j] = static_cast<T>(a[j] / total);
                    abar[static_cast<std::size_t>(j)] += w[static_cast<std::size_t>(h)] * a[j];
                }
                row_max[static_cast<std::size_t>(h) * nn + ii] = top;
                row_total[static_cast<std::size_t>(h) * nn + ii] = total;
            }
            std::fill(pred.begin(), pred.end(), 0.0);
            for (std::size_t j = 0; j < nn; ++j) {
                for (int c = 0; c < channels; ++c) {
                    pred[static_cast<std::size_t>(c)] += abar[j] * m[j * channels + c];
                }
            }
            double loss = 0.0;
            for (int c = 0; c < channels; ++c) {
                const auto term = bce(pred[static_cast<std::size_t>(c)], m[ii * channels + c], epsilon);
                loss += term.loss;
                dp[ii * channels + c] = term.slope * norm;
            }
            row_loss[ii] = loss;
            if (!with_gradient) {
                continue;
            }
            for (std::size_t j = 0; j < nn; ++j) {
                double s = 0.0;
                for (int c = 0; c < channels; ++c) {
                    s += dp[ii * channels + c] * m[j * channels + c];
                }
                dabar[j] = s;
            }
            for (int h = 0; h < heads; ++h) {
                const auto& head = qk.heads[static_cast<std::size_t>(h)];
                const T* a = attn.data() + static_cast<std::size_t>(h) * nn;
                double g = 0.0;
                for (std::size_t j = 0; j < nn; ++j) {
                    g += dabar[j] * a[j];
                }
                row_g[static_cast<std::size_t>(h) * nn + ii] = g;
                const double wh = w[static_cast<std::size_t>(h)];
                double* dq = result.qk_gradient.heads[static_cast<std::size_t>(h)].queries.data() + ii * d;
                for (std::size_t j = 0; j < nn; ++j) {
                    const double ds = wh * a[j] * (dabar[j] - g) * scale;
                    const T* k = head.keys.data() + j * d;
                    for (int c = 0; c < d; ++c) {
                        dq[c] += ds * k[c];
                    }
                }
            }
        }

        if (with_gradient) {
#pragma omp for schedule(static)
            for (int j = 0; j < n; ++j) {
                const auto jj = static_cast<std::size_t>(j);
                for (int i = 0; i < n; ++i) {
                    const auto ii = static_cast<std::size_t>(i);
                    double da = 0.0;
                    for (int c = 0; c < channels; ++c) {
                        da += dp[ii * channels + c] * m[jj * channels + c];
                    }
                    for (int h = 0; h < heads; ++h) {
                        const auto& head = qk.heads[static_cast<std::size_t>(h)];
                        const auto hi = static_cast<std::size_t>(h) * nn + ii;
                        const T* q = head.queries.data() + ii * d;
                        const T logit = static_cast<T>(dot(q, head.keys.data() + jj * d, d) * scale);
                        const T e = static_cast<T>(std::exp(static_cast<double>(logit - static_cast<T>(row_max[hi]))));
                        const T a = static_cast<T>(e / row_total[hi]);
                        const double ds = w[static_cast<std::size_t>(h)] * a * (da - row_g[hi]) * scale;
                        double* dk = result.qk_gradient.heads[static_cast<std::size_t>(h)].keys.data() + jj * d;
                        for (int c = 0; c < d; ++c) {
                            dk[c] += ds * q[c];
                        }
                    }
                }
            }
        }
    }

    double loss = 0.0;
    for (double v : row_loss) {
        loss += v;
    }
    result.loss = loss * norm;
    if (with_gradient) {
        std::vector<double> g(static_cast<std::size_t>(heads), 0.0);
        for (int h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < nn; ++i) {
                g[static_cast<std::size_t>(h)] += row_g[static_cast<std::size_t>(h) * nn + i];
            }
        }
        double mean = 0.0;
        for (int h = 0; h < heads; ++h) {
            mean += w[static_cast<std::size_t>(h)] * g[static_cast<std::size_t>(h)];
        }
        result.logit_gradient.resize(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            result.logit_gradient[static_cast<std::size_t>(h)] =
                w[static_cast<std::size_t>(h)] * (g[static_cast<std::size_t>(h)] - mean);
        }
    }
    return result;
}

template SelfPropagationResult self_propagation_loss(const BasicQueryKeySet<float>&, const HeadWeights&,
                                                     std::span<const Grid<float>>, bool, double);
template SelfPropagationResult self_propagation_loss(const BasicQueryKeySet<double>&, const HeadWeights&,
                                                     std::span<const Grid<float>>, bool, double);

namespace reference {

double mean_bce(std::span<const double> prediction, std::span<const double> target, double epsilon) {
    if (prediction.size() != target.size() || prediction.empty()) {
        throw ShapeError("mean_bce: size mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        total += bce(prediction[i], target[i], epsilon).loss;
    }
    return total / static_cast<double>(prediction.size());
}

std::vector<double> propagate_dense(const DenseMatrix<double>& kernel, std::span<const double> values) {
    if (kernel.cols != static_cast<int>(values.size())) {
        throw ShapeError("propagate_dense: kernel/value size mismatch");
    }
    std::vector<double> out(static_cast<std::size_t>(kernel.rows), 0.0);
    for (int i = 0; i < kernel.rows; ++i) {
        for (int j = 0; j < kernel.cols; ++j) {
            out[static_cast<std::size_t>(i)] += kernel(i, j) * values[static_cast<std::size_t>(j)];
        }
    }
    return out;
}

SelfPropagationResult self_propagation_loss(const QueryKeySet64& qk, const HeadWeights& weights,
                                            std::span<const Grid<float>> targets, bool with_gradient,
                                            double epsilon) {
    check_inputs(qk, weights, targets, epsilon);
    const int n = qk.location_count;
    const int d = qk.head_dim;
    const int heads = qk.head_count();
    const int channels = static_cast<int>(targets.size());
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    const auto w = weights.weights();

    std::vector<DenseMatrix<double>> per_head;
    for (const auto& h : qk.heads) {
        per_head.push_back(head_affinity<double>(h.queries, h.keys, d));
    }
    const DenseMatrix<double> abar = aggregate_heads<double>(per_head, weights);

    std::vector<std::vector<double>> target(static_cast<std::size_t>(channels));
    std::vector<std::vector<double>> pred(static_cast<std::size_t>(channels));
    std::vector<double> all_pred;
    std::vector<double> all_target;
    for (int c = 0; c < channels; ++c) {
        const auto& t = targets[static_cast<std::size_t>(c)];
        target[static_cast<std::size_t>(c)].assign(t.values().begin(), t.values().end());
        pred[static_cast<std::size_t>(c)] = propagate_dense(abar, target[static_cast<std::size_t>(c)]);
        all_pred.insert(all_pred.end(), pred[static_cast<std::size_t>(c)].begin(), pred[static_cast<std::size_t>(c)].end());
        all_target.insert(all_target.end(), target[static_cast<std::size_t>(c)].begin(),
                          target[static_cast<std::size_t>(c)].end());
    }

    SelfPropagationResult result;
    result.loss = mean_bce(all_pred, all_target, epsilon);
    if (!with_gradient) {
        return result;
    }

    // dL/dP, then dL/dAbar = sum_c dP_c M_c^T.
    const double norm = 1.0 / (static_cast<double>(n) * channels);
    DenseMatrix<double> dabar(n, n);
    for (int c = 0; c < channels; ++c) {
        for (int i = 0; i < n; ++i) {
            const double p = pred[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
            const double y = target[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
            double dp = 0.0;
            if (p >= epsilon && p <= 1.0 - epsilon) {
                dp = (p - y) / (p * (1.0 - p)) * norm;
            }
            for (int j = 0; j < n; ++j) {
                dabar(i, j) += dp * target[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
            }
        }
    }

    result.qk_gradient = QueryKeySet64(n, d, heads);
    std::vector<double> g(static_cast<std::size_t>(heads), 0.0);
    for (int h = 0; h < heads; ++h) {
        const auto& a = per_head[static_cast<std::size_t>(h)];
        const auto& src = qk.heads[static_cast<std::size_t>(h)];
        auto& dst = result.qk_gradient.heads[static_cast<std::size_t>(h)];
        // dA_h = w_h dAbar; softmax backward per row gives the logit gradient dS.
        DenseMatrix<double> ds(n, n);
        for (int i = 0; i < n; ++i) {
            double inner = 0.0;
            for (int j = 0; j < n; ++j) {
                inner += w[static_cast<std::size_t>(h)] * dabar(i, j) * a(i, j);
            }
            for (int j = 0; j < n; ++j) {
                ds(i, j) = a(i, j) * (w[static_cast<std::size_t>(h)] * dabar(i, j) - inner);
            }
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                g[static_cast<std::size_t>(h)] += dabar(i, j) * a(i, j);
            }
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                for (int c = 0; c < d; ++c) {
                    const auto qi = static_cast<std::size_t>(i) * d + c;
                    const auto kj = static_cast<std::size_t>(j) * d + c;
                    dst.queries[qi] += ds(i, j) * src.keys[kj] * scale;
                    dst.keys[kj] += ds(i, j) * src.queries[qi] * scale;
                }
            }
        }
    }
    // Softmax Jacobian of the weights: dw_k/dlogit_j = w_k (delta_kj - w_j).
    result.logit_gradient.assign(static_cast<std::size_t>(heads), 0.0);
    for (int j = 0; j < heads; ++j) {
        for (int k = 0; k < heads; ++k) {
            const double jac = w[static_cast<std::size_t>(k)] * ((k == j ? 1.0 : 0.0) - w[static_cast<std::size_t>(j)]);
            result.logit_gradient[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(k)] * jac;
        }
    }
    return result;
}

} // namespace reference

} // namespace drift
