#pragma once

#include "posediff/conditioning.hpp"

namespace posediff {

// Single no-grad denoiser evaluation: concatenates the pose stack onto the
// noisy latent and attends to the image context from the bundle.
TensorBlob unet_forward(ModelSetF& model, const TensorBlob& z_tilde, int t,
                        const ConditioningBundle& bundle);

}  // namespace posediff
