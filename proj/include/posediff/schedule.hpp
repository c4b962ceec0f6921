#pragma once

#include <optional>
#include <vector>

#include "posediff/rng.hpp"
#include "posediff/tensor_blob.hpp"

namespace posediff {

// Forward-process tables shared by training and sampling. alpha_bar is the
// cumulative product of (1 - beta), accumulated in f64 then stored as f32.
struct DiffusionSchedule {
    int timesteps = 0;
    std::vector<float> beta;
    std::vector<float> alpha_bar;

    void validate() const;
};

constexpr int kDefaultTimesteps = 1000;
constexpr float kDefaultBetaStart = 1e-4f;
constexpr float kDefaultBetaEnd = 2e-2f;

DiffusionSchedule linear_schedule(int timesteps = kDefaultTimesteps,
                                  float beta_start = kDefaultBetaStart,
                                  float beta_end = kDefaultBetaEnd);

struct NoisyLatent {
    TensorBlob z;
    int t = 0;
    std::optional<TensorBlob> eps_true;  // kept during training only
};

// Closed-form forward marginal: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
NoisyLatent q_sample(const TensorBlob& z0, int t, const TensorBlob& eps,
                     const DiffusionSchedule& sched);

// x0 estimate implied by an epsilon prediction.
TensorBlob predict_x0(const TensorBlob& z_t, int t, const TensorBlob& eps_hat,
                      const DiffusionSchedule& sched);

}  // namespace posediff
