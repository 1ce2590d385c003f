#pragma once

#include <vector>

namespace drift {

/// Discrete forward-diffusion schedule: cumulative signal fractions alpha_bar[t].
class NoiseSchedule {
  public:
    /// Stable Diffusion "scaled_linear" betas (sqrt-linear from 0.00085 to 0.012).
    static NoiseSchedule scaled_linear(int train_steps = 1000, double beta_start = 0.00085,
                                       double beta_end = 0.012);
    static NoiseSchedule from_alphas_cumprod(std::vector<double> alphas_cumprod);

    int train_steps() const { return static_cast<int>(alphas_cumprod_.size()); }
    double alpha_bar(int timestep) const;
    const std::vector<double>& alphas_cumprod() const { return alphas_cumprod_; }

    /// Uniform-stride sub-schedule {k * stride + offset}, ascending.
    std::vector<int> sub_schedule(int step_count, int offset = 1) const;

    /// Smallest sub-schedule timestep at or above `timestep` (0 stays 0).
    /// Throws ConfigError when no such step exists.
    int resolve_timestep(int timestep, int step_count, int offset = 1) const;

  private:
    std::vector<double> alphas_cumprod_;
};

} // namespace drift
