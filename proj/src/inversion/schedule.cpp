#include "drift/inversion/schedule.hpp"

#include "drift/core/error.hpp"

#include <cmath>
#include <string>

namespace drift {

NoiseSchedule NoiseSchedule::scaled_linear(int train_steps, double beta_start, double beta_end) {
    if (train_steps < 2) {
        throw ConfigError("noise schedule needs at least two training steps");
    }
    std::vector<double> alphas(static_cast<std::size_t>(train_steps));
    const double lo = std::sqrt(beta_start);
    const double hi = std::sqrt(beta_end);
    double prod = 1.0;
    for (int t = 0; t < train_steps; ++t) {
        const double s = lo + (hi - lo) * t / (train_steps - 1);
        prod *= 1.0 - s * s;
        alphas[static_cast<std::size_t>(t)] = prod;
    }
    return from_alphas_cumprod(std::move(alphas));
}

NoiseSchedule NoiseSchedule::from_alphas_cumprod(std::vector<double> alphas_cumprod) {
    if (alphas_cumprod.empty()) {
        throw ConfigError("empty noise schedule");
    }
    NoiseSchedule s;
    s.alphas_cumprod_ = std::move(alphas_cumprod);
    return s;
}

double NoiseSchedule::alpha_bar(int timestep) const {
    if (timestep < 0) {
        return 1.0;
    }
    if (timestep >= train_steps()) {
        throw ConfigError("timestep " + std::to_string(timestep) + " outside schedule");
    }
    return alphas_cumprod_[static_cast<std::size_t>(timestep)];
}

std::vector<int> NoiseSchedule::sub_schedule(int step_count, int offset) const {
    if (step_count <= 0 || step_count > train_steps()) {
        throw ConfigError("inversion step count must be in [1, " + std::to_string(train_steps()) + "]");
    }
    const int stride = train_steps() / step_count;
    std::vector<int> steps;
    steps.reserve(static_cast<std::size_t>(step_count));
    for (int k = 0; k < step_count; ++k) {
        const int t = k * stride + offset;
        if (t < train_steps()) {
            steps.push_back(t);
        }
    }
    return steps;
}

int NoiseSchedule::resolve_timestep(int timestep, int step_count, int offset) const {
    if (timestep == 0) {
        return 0;
    }
    if (timestep < 0) {
        throw ConfigError("negative timestep");
    }
    for (int t : sub_schedule(step_count, offset)) {
        if (t >= timestep) {
            return t;
        }
    }
    throw ConfigError("timestep " + std::to_string(timestep) + " is not reachable with " +
                      std::to_string(step_count) + " inversion steps");
}

} // namespace drift
