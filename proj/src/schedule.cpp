#include "posediff/schedule.hpp"

#include <cmath>

namespace posediff {

void DiffusionSchedule::validate() const {
    if (timesteps < 1 || beta.size() != static_cast<size_t>(timesteps) ||
        alpha_bar.size() != static_cast<size_t>(timesteps))
        fail(ErrorCode::InvalidRange, "schedule tables must have length T");
    for (int t = 0; t < timesteps; t++) {
        if (!(beta[t] > 0.0f && beta[t] < 1.0f))
            fail(ErrorCode::InvalidRange, "beta out of (0,1) at t=" + std::to_string(t));
        if (t > 0 && beta[t] < beta[t - 1])
            fail(ErrorCode::InvalidRange, "beta must be nondecreasing");
        if (t > 0 && !(alpha_bar[t] < alpha_bar[t - 1]))
            fail(ErrorCode::InvalidRange, "alpha_bar must be strictly decreasing");
    }
    if (!(alpha_bar.front() < 1.0f) || !(alpha_bar.back() > 0.0f))
        fail(ErrorCode::InvalidRange, "alpha_bar must start below 1 and stay positive");
}

DiffusionSchedule linear_schedule(int timesteps, float beta_start, float beta_end) {
    if (timesteps < 1) fail(ErrorCode::InvalidRange, "timesteps must be >= 1");
    if (!(beta_start > 0.0f) || !(beta_end < 1.0f) || beta_start > beta_end)
        fail(ErrorCode::InvalidRange, "need 0 < beta_start <= beta_end < 1");

    DiffusionSchedule s;
    s.timesteps = timesteps;
    s.beta.resize(timesteps);
    s.alpha_bar.resize(timesteps);
    double prod = 1.0;
    for (int t = 0; t < timesteps; t++) {
        const double frac = timesteps == 1 ? 0.0 : static_cast<double>(t) / (timesteps - 1);
        const double b = beta_start + (static_cast<double>(beta_end) - beta_start) * frac;
        prod *= 1.0 - b;
        s.beta[t] = static_cast<float>(b);
        s.alpha_bar[t] = static_cast<float>(prod);
    }
    s.validate();
    return s;
}

NoisyLatent q_sample(const TensorBlob& z0, int t, const TensorBlob& eps,
                     const DiffusionSchedule& sched) {
    if (t < 0 || t >= sched.timesteps)
        fail(ErrorCode::InvalidTimestep, "t=" + std::to_string(t) + " outside [0,T)");
    if (!z0.same_shape(eps))
        fail(ErrorCode::ShapeMismatch,
             "z0 " + shape_to_string(z0.shape) + " vs eps " + shape_to_string(eps.shape));

    const float abar = sched.alpha_bar[t];
    const float a = std::sqrt(abar);
    const float b = std::sqrt(1.0f - abar);
    NoisyLatent out;
    out.t = t;
    out.z = TensorBlob::zeros(z0.shape);
    for (size_t i = 0; i < z0.f32.size(); i++) out.z.f32[i] = a * z0.f32[i] + b * eps.f32[i];
    out.eps_true = eps;
    return out;
}

TensorBlob predict_x0(const TensorBlob& z_t, int t, const TensorBlob& eps_hat,
                      const DiffusionSchedule& sched) {
    if (t < 0 || t >= sched.timesteps) fail(ErrorCode::InvalidTimestep, "t outside [0,T)");
    if (!z_t.same_shape(eps_hat)) fail(ErrorCode::ShapeMismatch, "z_t vs eps_hat shape");
    const float abar = sched.alpha_bar[t];
    const float inv_a = 1.0f / std::sqrt(abar);
    const float b = std::sqrt(1.0f - abar);
    TensorBlob x0 = TensorBlob::zeros(z_t.shape);
    for (size_t i = 0; i < z_t.f32.size(); i++) x0.f32[i] = inv_a * (z_t.f32[i] - b * eps_hat.f32[i]);
    return x0;
}

}  // namespace posediff
