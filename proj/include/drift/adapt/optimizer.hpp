#pragma once

#include "drift/adapt/objective.hpp"
#include "drift/core/error.hpp"
#include "drift/kernel/head_weights.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace drift {

struct OptimizerConfig {
    double learning_rate = 1e-4;
    int steps = 3500;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool optimize_prompt = true;
    bool optimize_heads = true;
    Precision precision = Precision::f32;

    /// Throws ConfigError on a non-positive learning rate, negative step count
    /// or moment decay outside [0, 1).
    void validate() const;
    /// Canonical text of every field, for content addressing.
    std::string fingerprint() const;
};

/// Adam over a flat parameter vector.
class Adam {
  public:
    Adam(std::size_t size, const OptimizerConfig& config);

    void step(std::span<double> parameters, std::span<const double> gradient);
    int iteration() const { return iteration_; }

  private:
    double lr_;
    double beta1_;
    double beta2_;
    double epsilon_;
    int iteration_ = 0;
    std::vector<double> first_;
    std::vector<double> second_;
};

/// Learned prompt embedding and head weights of one object instance.
struct AdaptedPrompt {
    int object = 0;
    PromptEmbedding prompt;
    HeadWeights heads;
    /// Loss before each update followed by the loss at the returned parameters.
    std::vector<double> loss_trace;

    int steps() const { return loss_trace.empty() ? 0 : static_cast<int>(loss_trace.size()) - 1; }
    double initial_loss() const { return loss_trace.front(); }
    double final_loss() const { return loss_trace.back(); }
    int parameter_count() const { return prompt.parameter_count() + heads.size(); }
};

/// Non-finite loss during optimization.
class DivergenceError : public Error {
  public:
    DivergenceError(const std::string& what, std::vector<double> trace)
        : Error(what), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const { return trace_; }

  private:
    std::vector<double> trace_;
};

/// Called after every optimizer step with the step number (1-based), the loss
/// evaluated before the step and the updated head weights.
using StepObserver = std::function<void(int step, double loss, const HeadWeights& heads)>;

/// Throws Error unless the weights are in [0, 1] and sum to 1 within `tolerance`.
void check_simplex(const HeadWeights& heads, double tolerance = 1e-6);

/// Adam on (prompt, head logits) starting from `initial`.
AdaptedPrompt optimize_instance(const SelfPropagationObjective& objective, int object, const OptimizerConfig& config,
                                AdaptedPrompt initial, const StepObserver& observer = {});

/// Optimizes object `object` of the first-frame latent-resolution mask,
/// initializing from the backend's null prompt and uniform head weights.
AdaptedPrompt optimize_instance(const Backend& backend, const LatentState& frame0, const SoftMaskStack& mask0,
                                int object, const OptimizerConfig& config, const StepObserver& observer = {});

} // namespace drift
