#pragma once

#include <chrono>
#include <map>
#include <string>

namespace drift {

/// Wall-clock time split into named stages. Each lap charges the time since
/// the previous lap to one stage, so the stages always add up to the total.
class StageTimer {
  public:
    using clock = std::chrono::steady_clock;

    StageTimer() : start_(clock::now()), last_(start_) {}

    /// Charges the time since the previous lap (or construction) to `stage`.
    void lap(const std::string& stage) {
        const auto now = clock::now();
        seconds_[stage] += std::chrono::duration<double>(now - last_).count();
        last_ = now;
    }

    /// Adds stage times measured elsewhere (e.g. a worker's own timer).
    void merge(const StageTimer& other) {
        for (const auto& [stage, s] : other.seconds_) {
            seconds_[stage] += s;
        }
    }

    const std::map<std::string, double>& stages() const { return seconds_; }

    double charged() const {
        double total = 0.0;
        for (const auto& [stage, s] : seconds_) {
            total += s;
        }
        return total;
    }

    double elapsed() const { return std::chrono::duration<double>(clock::now() - start_).count(); }

  private:
    clock::time_point start_;
    clock::time_point last_;
    std::map<std::string, double> seconds_;
};

} // namespace drift
