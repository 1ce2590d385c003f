#include "drift/adapt/optimizer.hpp"

#include <cmath>
#include <sstream>

namespace drift {

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("optimizer: learning rate must be positive");
    }
    if (steps < 0) {
        throw ConfigError("optimizer: step count must be nonnegative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("optimizer: moment decay rates must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("optimizer: epsilon must be positive");
    }
}

std::string OptimizerConfig::fingerprint() const {
    std::ostringstream os;
    os.precision(17);
    os << "adam lr=" << learning_rate << " steps=" << steps << " b1=" << beta1 << " b2=" << beta2
       << " eps=" << epsilon << " prompt=" << optimize_prompt << " heads=" << optimize_heads
       << " precision=" << (precision == Precision::f64 ? "f64" : "f32");
    return os.str();
}

Adam::Adam(std::size_t size, const OptimizerConfig& config)
    : lr_(config.learning_rate), beta1_(config.beta1), beta2_(config.beta2), epsilon_(config.epsilon),
      first_(size, 0.0), second_(size, 0.0) {}

void Adam::step(std::span<double> parameters, std::span<const double> gradient) {
    if (parameters.size() != first_.size() || gradient.size() != first_.size()) {
        throw ShapeError("adam: parameter/gradient size mismatch");
    }
    ++iteration_;
    const double c1 = 1.0 - std::pow(beta1_, iteration_);
    const double c2 = 1.0 - std::pow(beta2_, iteration_);
    for (std::size_t i = 0; i < first_.size(); ++i) {
        first_[i] = beta1_ * first_[i] + (1.0 - beta1_) * gradient[i];
        second_[i] = beta2_ * second_[i] + (1.0 - beta2_) * gradient[i] * gradient[i];
        parameters[i] -= lr_ * (first_[i] / c1) / (std::sqrt(second_[i] / c2) + epsilon_);
    }
}

void check_simplex(const HeadWeights& heads, double tolerance) {
    double total = 0.0;
    for (double w : heads.weights()) {
        if (!(w >= 0.0 && w <= 1.0)) {
            throw Error("head weights left the simplex: weight outside [0, 1]");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > tolerance) {
        throw Error("head weights left the simplex: sum deviates from 1");
    }
}

AdaptedPrompt optimize_instance(const SelfPropagationObjective& objective, int object, const OptimizerConfig& config,
                                AdaptedPrompt initial, const StepObserver& observer) {
    config.validate();
    if (initial.heads.size() != objective.head_count()) {
        throw ShapeError("optimize_instance: head weight count does not match the backend");
    }
    AdaptedPrompt state = std::move(initial);
    state.object = object;
    state.loss_trace.clear();
    state.loss_trace.reserve(static_cast<std::size_t>(config.steps) + 1);
    Adam prompt_opt(state.prompt.values.size(), config);
    Adam head_opt(state.heads.logits().size(), config);

    auto diverged = [&](int step) {
        return DivergenceError("optimization diverged for object " + std::to_string(object) + " at step " +
                                   std::to_string(step) + ": non-finite loss",
                               state.loss_trace);
    };
    for (int step = 1; step <= config.steps; ++step) {
        const ObjectiveValue value = objective.evaluate(state.prompt, state.heads);
        state.loss_trace.push_back(value.loss);
        if (!std::isfinite(value.loss)) {
            throw diverged(step);
        }
        if (config.optimize_prompt) {
            prompt_opt.step(state.prompt.values, value.prompt_gradient);
        }
        if (config.optimize_heads) {
            head_opt.step(state.heads.logits(), value.logit_gradient);
        }
        check_simplex(state.heads);
        if (observer) {
            observer(step, value.loss, state.heads);
        }
    }
    const double final_loss = objective.loss(state.prompt, state.heads);
    state.loss_trace.push_back(final_loss);
    if (!std::isfinite(final_loss)) {
        throw diverged(config.steps + 1);
    }
    return state;
}

AdaptedPrompt optimize_instance(const Backend& backend, const LatentState& frame0, const SoftMaskStack& mask0,
                                int object, const OptimizerConfig& config, const StepObserver& observer) {
    SelfPropagationObjective objective(backend, frame0, object_target(mask0, object), config.precision);
    AdaptedPrompt initial;
    initial.prompt = backend.null_prompt();
    initial.prompt.learnable = true;
    initial.heads = HeadWeights::uniform(backend.head_layout().head_count());
    return optimize_instance(objective, object, config, std::move(initial), observer);
}

} // namespace drift
