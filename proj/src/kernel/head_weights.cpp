#include "drift/kernel/head_weights.hpp"

#include "drift/core/error.hpp"

#include <algorithm>
#include <cmath>

namespace drift {

HeadWeights::HeadWeights(std::vector<double> logits) : logits_(std::move(logits)) {
    if (logits_.empty()) {
        throw ConfigError("HeadWeights: at least one head required");
    }
}

HeadWeights HeadWeights::uniform(int count) {
    if (count <= 0) {
        throw ConfigError("HeadWeights: at least one head required");
    }
    return HeadWeights(std::vector<double>(static_cast<std::size_t>(count), 0.0));
}

std::vector<double> HeadWeights::weights() const {
    std::vector<double> w(logits_.size());
    const double top = *std::max_element(logits_.begin(), logits_.end());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(logits_[i] - top);
        total += w[i];
    }
    for (auto& v : w) {
        v /= total;
    }
    return w;
}

} // namespace drift
