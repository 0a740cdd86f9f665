#pragma once

#include <cstddef>
#include <vector>

#include "diffhmr/errors.hpp"

namespace diffhmr {

// Precomputed beta_t / alpha_t / alpha_bar_t tables. Timesteps are 1-indexed
// (t = 1..T); alpha_bar(0) == 1 by convention.
class NoiseSchedule {
public:
    NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
        if (betas_.empty()) throw InvalidSchedule("empty beta table");
        alphas_.reserve(betas_.size());
        alpha_bars_.reserve(betas_.size());
        double prod = 1.0;
        for (double b : betas_) {
            if (!(b > 0.0 && b < 1.0)) throw InvalidSchedule("beta out of (0,1)");
            alphas_.push_back(1.0 - b);
            prod *= 1.0 - b;
            alpha_bars_.push_back(prod);
        }
    }

    size_t T() const { return betas_.size(); }
    double beta(size_t t) const { return betas_[index(t)]; }
    double alpha(size_t t) const { return alphas_[index(t)]; }
    double alpha_bar(size_t t) const {
        if (t == 0) return 1.0;
        return alpha_bars_[index(t)];
    }

    double snr(size_t t) const {
        double ab = alpha_bars_[index(t)];
        return ab / (1.0 - ab);
    }

    // Posterior variance beta_t * (1 - abar_{t-1}) / (1 - abar_t); zero at t=1.
    double posterior_variance(size_t t) const {
        size_t i = index(t);
        double prev = (t == 1) ? 1.0 : alpha_bars_[i - 1];
        return betas_[i] * (1.0 - prev) / (1.0 - alpha_bars_[i]);
    }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

private:
    size_t index(size_t t) const {
        if (t < 1 || t > betas_.size()) throw OutOfRange("timestep out of [1, T]");
        return t - 1;
    }

    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

// Linear beta schedule inclusive of both endpoints. T == 1 uses beta_start.
inline NoiseSchedule linear_schedule(size_t T, double beta_start, double beta_end) {
    if (T < 1) throw InvalidSchedule("T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw InvalidSchedule("need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(T);
    for (size_t i = 0; i < T; ++i) {
        betas[i] = (T == 1) ? beta_start
                            : beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                               static_cast<double>(T - 1);
    }
    return NoiseSchedule(std::move(betas));
}

}  // namespace diffhmr
