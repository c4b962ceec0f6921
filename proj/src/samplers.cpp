#include "posediff/samplers.hpp"

#include <cmath>
#include <deque>

namespace posediff {

namespace {

// alpha_bar extended one step past the clean end of the chain.
float alpha_bar_at(const DiffusionSchedule& sched, int t) {
    return t < 0 ? 1.0f : sched.alpha_bar[t];
}

// Shared transfer map of the strided samplers: trapezoid-free update in
// alpha_bar space. With the raw epsilon prediction this is exactly the
// deterministic DDIM step.
TensorBlob transfer(const TensorBlob& z, int t, int t_prev, const TensorBlob& eps,
                    const DiffusionSchedule& sched) {
    const double abar = alpha_bar_at(sched, t);
    const double abar_prev = alpha_bar_at(sched, t_prev);
    const double sample_coeff = std::sqrt(abar_prev / abar);
    const double denom =
        abar * std::sqrt(1.0 - abar_prev) + std::sqrt(abar * (1.0 - abar) * abar_prev);
    const double eps_coeff = -(abar_prev - abar) / denom;

    TensorBlob out = TensorBlob::zeros(z.shape);
    for (size_t i = 0; i < z.f32.size(); i++)
        out.f32[i] = static_cast<float>(sample_coeff * z.f32[i] + eps_coeff * eps.f32[i]);
    return out;
}

}  // namespace

std::vector<int> strided_timesteps(int timesteps, int steps) {
    std::vector<int> ts(steps);
    for (int i = 0; i < steps; i++)
        ts[i] = timesteps - 1 - static_cast<int>((static_cast<int64_t>(i) * timesteps) / steps);
    return ts;
}

NoisyLatent ddpm_step(const NoisyLatent& z_t, const TensorBlob& eps_hat,
                      const DiffusionSchedule& sched, Rng& rng) {
    const int t = z_t.t;
    if (t < 1 || t >= sched.timesteps)
        fail(ErrorCode::InvalidTimestep, "ddpm_step needs t in [1,T), got " + std::to_string(t));
    if (!z_t.z.same_shape(eps_hat)) fail(ErrorCode::ShapeMismatch, "z_t vs eps_hat shape");

    const double beta = sched.beta[t];
    const double abar = sched.alpha_bar[t];
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    const double eps_coeff = beta / std::sqrt(1.0 - abar);
    const double sigma = t > 1 ? std::sqrt(beta) : 0.0;

    NoisyLatent out;
    out.t = t - 1;
    out.z = TensorBlob::zeros(z_t.z.shape);
    for (size_t i = 0; i < z_t.z.f32.size(); i++) {
        double v = inv_sqrt_alpha * (z_t.z.f32[i] - eps_coeff * eps_hat.f32[i]);
        if (t > 1) v += sigma * rng.normal();
        out.z.f32[i] = static_cast<float>(v);
    }
    return out;
}

TensorBlob ddpm_sample(const DenoiseFn& denoise_fn, const TensorBlob& z_T,
                       const DiffusionSchedule& sched, Rng& rng) {
    NoisyLatent state{z_T, sched.timesteps - 1, std::nullopt};
    while (state.t >= 1) state = ddpm_step(state, denoise_fn(state.z, state.t), sched, rng);
    return state.z;
}

TensorBlob ddim_sample(const DenoiseFn& denoise_fn, const TensorBlob& z_T, int steps,
                       const DiffusionSchedule& sched) {
    if (steps < 1 || steps > sched.timesteps)
        fail(ErrorCode::TooFewSteps, "ddim needs 1 <= steps <= T");
    const std::vector<int> ts = strided_timesteps(sched.timesteps, steps);
    TensorBlob z = z_T;
    for (int i = 0; i < steps; i++) {
        const int t = ts[i];
        const int t_prev = i + 1 < steps ? ts[i + 1] : -1;
        z = transfer(z, t, t_prev, denoise_fn(z, t), sched);
    }
    return z;
}

TensorBlob pndm_sample(const DenoiseFn& denoise_fn, const TensorBlob& z_T, int steps,
                       const DiffusionSchedule& sched) {
    if (steps < 4)
        fail(ErrorCode::TooFewSteps, "pndm multistep warm-up needs steps >= 4, got " +
                                         std::to_string(steps));
    if (steps > sched.timesteps) fail(ErrorCode::TooFewSteps, "steps must not exceed T");

    const std::vector<int> ts = strided_timesteps(sched.timesteps, steps);
    std::deque<TensorBlob> history;  // newest at front
    TensorBlob z = z_T;

    for (int i = 0; i < steps; i++) {
        const int t = ts[i];
        const int t_prev = i + 1 < steps ? ts[i + 1] : -1;
        TensorBlob eps = denoise_fn(z, t);
        history.push_front(eps);
        if (history.size() > 4) history.pop_back();

        TensorBlob eps_prime = TensorBlob::zeros(eps.shape);
        const size_t n = eps.f32.size();
        switch (history.size()) {
            case 1:
                eps_prime = history[0];
                break;
            case 2:
                for (size_t k = 0; k < n; k++)
                    eps_prime.f32[k] = (3.0f * history[0].f32[k] - history[1].f32[k]) / 2.0f;
                break;
            case 3:
                for (size_t k = 0; k < n; k++)
                    eps_prime.f32[k] = (23.0f * history[0].f32[k] - 16.0f * history[1].f32[k] +
                                        5.0f * history[2].f32[k]) /
                                       12.0f;
                break;
            default:
                for (size_t k = 0; k < n; k++)
                    eps_prime.f32[k] = (55.0f * history[0].f32[k] - 59.0f * history[1].f32[k] +
                                        37.0f * history[2].f32[k] - 9.0f * history[3].f32[k]) /
                                       24.0f;
        }
        z = transfer(z, t, t_prev, eps_prime, sched);
    }
    return z;
}

}  // namespace posediff
