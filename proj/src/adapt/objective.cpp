#include "drift/adapt/objective.hpp"

#include "drift/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace drift {

SelfPropagationObjective::SelfPropagationObjective(const Backend& backend, LatentState latent,
                                                   std::vector<Grid<float>> targets, Precision precision)
    : backend_(&backend), latent_(std::move(latent)), targets_(std::move(targets)), precision_(precision) {
    latent_.validate();
    if (targets_.empty()) {
        throw ShapeError("self-propagation objective: no target channels");
    }
    for (const auto& t : targets_) {
        if (t.height() != backend.latent_height() || t.width() != backend.latent_width()) {
            throw ShapeError("self-propagation objective: target is not at latent resolution");
        }
        for (float v : t.values()) {
            if (!(v >= 0.0f && v <= 1.0f)) {
                throw ShapeError("self-propagation objective: target values must lie in [0, 1]");
            }
        }
    }
}

double SelfPropagationObjective::loss(const PromptEmbedding& prompt, const HeadWeights& weights) const {
    if (precision_ == Precision::f64) {
        return loss64(prompt, weights);
    }
    return self_propagation_loss(backend_->extract_qk(latent_, prompt), weights, targets_, false).loss;
}

double SelfPropagationObjective::loss64(const PromptEmbedding& prompt, const HeadWeights& weights) const {
    return self_propagation_loss(backend_->extract_qk64(latent_, prompt), weights, targets_, false).loss;
}

ObjectiveValue SelfPropagationObjective::evaluate(const PromptEmbedding& prompt, const HeadWeights& weights) const {
    SelfPropagationResult r = precision_ == Precision::f64
                                  ? self_propagation_loss(backend_->extract_qk64(latent_, prompt), weights, targets_, true)
                                  : self_propagation_loss(backend_->extract_qk(latent_, prompt), weights, targets_, true);
    ObjectiveValue out;
    out.loss = r.loss;
    out.logit_gradient = std::move(r.logit_gradient);
    out.prompt_gradient = backend_->prompt_vjp(latent_, prompt, r.qk_gradient);
    return out;
}

std::vector<Grid<float>> object_target(const SoftMaskStack& stack, int object) {
    if (object <= 0 || object > stack.object_count()) {
        throw ShapeError("object_target: object " + std::to_string(object) + " not in stack");
    }
    const auto& channel = stack[object];
    const bool present = std::any_of(channel.values().begin(), channel.values().end(), [](float v) { return v > 0.0f; });
    if (!present) {
        throw EmptyObjectError("object " + std::to_string(object) + " is absent from the first-frame mask");
    }
    return {channel};
}

GradientCheckReport gradient_check_at(const SelfPropagationObjective& objective, const PromptEmbedding& prompt,
                                      const HeadWeights& weights, const std::vector<int>& coordinates, double step,
                                      double floor) {
    const int prompt_params = prompt.parameter_count();
    const int total = prompt_params + weights.size();
    const ObjectiveValue value = objective.evaluate(prompt, weights);
    GradientCheckReport report;
    for (int coord : coordinates) {
        if (coord < 0 || coord >= total) {
            throw ConfigError("gradient_check: coordinate out of range");
        }
        GradientProbe probe;
        probe.head_logit = coord >= prompt_params;
        probe.index = probe.head_logit ? coord - prompt_params : coord;
        double plus = 0.0;
        double minus = 0.0;
        if (probe.head_logit) {
            HeadWeights w = weights;
            auto& x = w.logits()[static_cast<std::size_t>(probe.index)];
            const double x0 = x;
            x = x0 + step;
            plus = objective.loss64(prompt, w);
            x = x0 - step;
            minus = objective.loss64(prompt, w);
            probe.analytic = value.logit_gradient[static_cast<std::size_t>(probe.index)];
        } else {
            PromptEmbedding p = prompt;
            auto& x = p.values[static_cast<std::size_t>(probe.index)];
            const double x0 = x;
            x = x0 + step;
            plus = objective.loss64(p, weights);
            x = x0 - step;
            minus = objective.loss64(p, weights);
            probe.analytic = value.prompt_gradient[static_cast<std::size_t>(probe.index)];
        }
        probe.numeric = (plus - minus) / (2.0 * step);
        const double denom = std::max({std::abs(probe.analytic), std::abs(probe.numeric), floor});
        probe.relative_error = std::abs(probe.analytic - probe.numeric) / denom;
        report.max_relative_error = std::max(report.max_relative_error, probe.relative_error);
        report.probes.push_back(probe);
    }
    return report;
}

GradientCheckReport gradient_check(const SelfPropagationObjective& objective, const PromptEmbedding& prompt,
                                   const HeadWeights& weights, int probe_count, std::uint64_t seed, double step,
                                   double floor) {
    const int total = prompt.parameter_count() + weights.size();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, total - 1);
    std::vector<int> coords(static_cast<std::size_t>(std::max(probe_count, 0)));
    for (auto& c : coords) {
        c = pick(rng);
    }
    return gradient_check_at(objective, prompt, weights, coords, step, floor);
}

} // namespace drift
