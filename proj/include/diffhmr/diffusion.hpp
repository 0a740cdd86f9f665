#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "diffhmr/errors.hpp"
#include "diffhmr/rng.hpp"
#include "diffhmr/schedule.hpp"

namespace diffhmr {

// Flat vector of per-joint rotation coordinates; the diffused variable.
using PoseState = std::vector<double>;
using NoiseSample = std::vector<double>;

namespace diffusion {

inline void check_dims(size_t a, size_t b, const char* what) {
    if (a != b) throw DimensionMismatch(what);
}

// x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps
inline PoseState forward_step(const PoseState& x_prev, size_t t, const NoiseSample& eps,
                              const NoiseSchedule& s) {
    check_dims(x_prev.size(), eps.size(), "forward_step: eps size");
    double b = s.beta(t);
    double cs = std::sqrt(1.0 - b), cn = std::sqrt(b);
    PoseState out(x_prev.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = cs * x_prev[i] + cn * eps[i];
    return out;
}

// x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps
inline PoseState forward_sample(const PoseState& x0, size_t t, const NoiseSample& eps,
                                const NoiseSchedule& s) {
    check_dims(x0.size(), eps.size(), "forward_sample: eps size");
    double ab = s.alpha_bar(t);
    double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    PoseState out(x0.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = cs * x0[i] + cn * eps[i];
    return out;
}

// x0_hat = x_t / sqrt(abar_t) - sqrt(1/abar_t - 1) eps_hat
inline PoseState predict_x0(const PoseState& x_t, size_t t, const NoiseSample& eps_hat,
                            const NoiseSchedule& s) {
    check_dims(x_t.size(), eps_hat.size(), "predict_x0: eps size");
    double ab = s.alpha_bar(t);
    double cs = 1.0 / std::sqrt(ab), cn = std::sqrt(1.0 / ab - 1.0);
    PoseState out(x_t.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = cs * x_t[i] - cn * eps_hat[i];
    return out;
}

// Ancestral step: mu + sqrt(posterior_variance) z, with z forced out at t = 1.
inline PoseState reverse_step(const PoseState& x_t, size_t t, const NoiseSample& eps_hat,
                              const NoiseSample& z_noise, const NoiseSchedule& s) {
    check_dims(x_t.size(), eps_hat.size(), "reverse_step: eps size");
    check_dims(x_t.size(), z_noise.size(), "reverse_step: z size");
    double a = s.alpha(t), b = s.beta(t), ab = s.alpha_bar(t);
    double inv_sa = 1.0 / std::sqrt(a);
    double coef = b / std::sqrt(1.0 - ab);
    double sigma = (t == 1) ? 0.0 : std::sqrt(s.posterior_variance(t));
    PoseState out(x_t.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = inv_sa * (x_t[i] - coef * eps_hat[i]) + sigma * z_noise[i];
    return out;
}

// Full DDPM ancestral loop t = T..1. The denoiser is any callable
// (x_t, t) -> eps_hat; conditioning is bound by the caller. Draw order is
// fixed: x_T first, then one z per step t > 1.
template <typename Denoiser>
PoseState sample(Denoiser&& denoiser, size_t dim, const NoiseSchedule& s, uint64_t seed) {
    Rng rng(seed);
    PoseState x = rng.normal_vec(dim);
    for (size_t t = s.T(); t >= 1; --t) {
        NoiseSample eps_hat = denoiser(x, t);
        check_dims(eps_hat.size(), dim, "sample: denoiser output size");
        NoiseSample z = (t > 1) ? rng.normal_vec(dim) : NoiseSample(dim, 0.0);
        x = reverse_step(x, t, eps_hat, z, s);
    }
    return x;
}

}  // namespace diffusion
}  // namespace diffhmr
