#pragma once

#include "drift/adapt/self_propagation.hpp"
#include "drift/backend/backend.hpp"

#include <cstdint>
#include <vector>

namespace drift {

enum class Precision { f32, f64 };

struct ObjectiveValue {
    double loss = 0.0;
    std::vector<double> prompt_gradient;
    std::vector<double> logit_gradient;
};

/// First-frame self-propagation loss of one object as a function of
/// (prompt embedding, head logits), with gradients through the backend.
class SelfPropagationObjective {
  public:
    /// `targets` are latent-resolution channels in [0, 1] (usually the object's
    /// downsampled first-frame mask).
    SelfPropagationObjective(const Backend& backend, LatentState latent, std::vector<Grid<float>> targets,
                             Precision precision = Precision::f32);

    const Backend& backend() const { return *backend_; }
    const LatentState& latent() const { return latent_; }
    Precision precision() const { return precision_; }
    int head_count() const { return backend_->head_layout().head_count(); }

    /// Loss at the configured precision.
    double loss(const PromptEmbedding& prompt, const HeadWeights& weights) const;
    /// Loss with 64-bit queries/keys regardless of the configured precision.
    double loss64(const PromptEmbedding& prompt, const HeadWeights& weights) const;
    /// Loss and gradients at the configured precision.
    ObjectiveValue evaluate(const PromptEmbedding& prompt, const HeadWeights& weights) const;

  private:
    const Backend* backend_;
    LatentState latent_;
    std::vector<Grid<float>> targets_;
    Precision precision_;
};

/// Single-channel target of `object` taken from a latent-resolution stack.
/// Throws EmptyObjectError when the object has no mass.
std::vector<Grid<float>> object_target(const SoftMaskStack& stack, int object);

struct GradientProbe {
    bool head_logit = false; // false: prompt coordinate
    int index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradientCheckReport {
    std::vector<GradientProbe> probes;
    double max_relative_error = 0.0;
};

/// Compares the analytic gradient with central finite differences of the
/// 64-bit loss on `probe_count` random coordinates drawn uniformly from the
/// prompt and head-logit parameters. The relative error of a probe is
/// |a - n| / max(|a|, |n|, floor).
GradientCheckReport gradient_check(const SelfPropagationObjective& objective, const PromptEmbedding& prompt,
                                   const HeadWeights& weights, int probe_count, std::uint64_t seed,
                                   double step = 1e-5, double floor = 1e-9);

/// Same, on caller-chosen coordinates. Indices below the prompt parameter count
/// address the prompt, the rest address head logits.
GradientCheckReport gradient_check_at(const SelfPropagationObjective& objective, const PromptEmbedding& prompt,
                                      const HeadWeights& weights, const std::vector<int>& coordinates,
                                      double step = 1e-5, double floor = 1e-9);

} // namespace drift
