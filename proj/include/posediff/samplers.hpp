#pragma once

#include <functional>

#include "posediff/schedule.hpp"

namespace posediff {

// epsilon predictor: (z_t, t) -> eps_hat. Guidance is folded in by the caller.
using DenoiseFn = std::function<TensorBlob(const TensorBlob&, int)>;

// One ancestral step t -> t-1. Posterior mean from the predicted noise, plus
// sigma_t-scaled Gaussian noise except at the final step (t == 1).
NoisyLatent ddpm_step(const NoisyLatent& z_t, const TensorBlob& eps_hat,
                      const DiffusionSchedule& sched, Rng& rng);

TensorBlob ddpm_sample(const DenoiseFn& denoise_fn, const TensorBlob& z_T,
                       const DiffusionSchedule& sched, Rng& rng);

// Deterministic (eta = 0) strided sampler.
TensorBlob ddim_sample(const DenoiseFn& denoise_fn, const TensorBlob& z_T, int steps,
                       const DiffusionSchedule& sched);

// Pseudo linear multistep sampler over a uniformly strided timestep subset.
// Warm-up ramps the multistep order 1 -> 4, so the first step equals a DDIM
// step exactly; steps < 4 cannot fill the history and are rejected.
TensorBlob pndm_sample(const DenoiseFn& denoise_fn, const TensorBlob& z_T, int steps,
                       const DiffusionSchedule& sched);

// Descending timestep subset used by the strided samplers.
std::vector<int> strided_timesteps(int timesteps, int steps);

}  // namespace posediff
