#pragma once

#include <vector>

namespace drift {

/// Convex head-mixing weights parameterized as softmax over free logits.
class HeadWeights {
  public:
    HeadWeights() = default;
    explicit HeadWeights(std::vector<double> logits);

    /// Equal weights 1 / count (all logits zero).
    static HeadWeights uniform(int count);

    int size() const { return static_cast<int>(logits_.size()); }
    const std::vector<double>& logits() const { return logits_; }
    std::vector<double>& logits() { return logits_; }

    /// softmax(logits); entries in [0, 1] summing to one.
    std::vector<double> weights() const;

  private:
    std::vector<double> logits_;
};

} // namespace drift
