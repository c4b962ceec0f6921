#pragma once

#include "posediff/conditioning.hpp"
#include "posediff/samplers.hpp"

namespace posediff {

struct GuidanceWeights {
    float s_image = 3.0f;
    float s_pose = 5.0f;
};

// Dual classifier-free guidance combination of the three branches
// (unconditional; image-only; image+pose). Written so the (1,1) and (0,0)
// settings return the conditional / unconditional branch bit-exactly.
TensorBlob dual_cfg(const TensorBlob& eps_uncond, const TensorBlob& eps_image,
                    const TensorBlob& eps_full, const GuidanceWeights& w);

enum class SamplerKind { Pndm, Ddim, Ddpm };
enum class SeedPolicy { PerFrameDerived, FixedPerFrame };

struct GenerateParams {
    GuidanceWeights weights;
    int steps = 100;
    uint64_t seed = 0;
    SamplerKind sampler = SamplerKind::Pndm;
    SeedPolicy seed_policy = SeedPolicy::PerFrameDerived;
    int jobs = 1;
    EmbedderMode embedder_mode = EmbedderMode::Builtin;
    std::optional<TensorBlob> external_embedding;
};

// Guided epsilon predictor over a fixed conditioning bundle; evaluates the
// UNet exactly three times per call. eval_counter, when given, tracks the
// total number of UNet evaluations.
DenoiseFn make_guided_denoiser(ModelSetF& model, const ConditioningBundle& bundle,
                               const GuidanceWeights& w, int64_t* eval_counter = nullptr);

TensorBlob generate_frame(ModelSetF& model, const TensorBlob& subject_image,
                          const PoseWindow& window, const GenerateParams& params);

// One frame per pose, each conditioned on the window built at its index.
// Frames are independent; jobs > 1 renders them concurrently with identical
// results under the derived-seed policy.
std::vector<TensorBlob> generate_video(ModelSetF& model, const TensorBlob& subject_image,
                                       const std::vector<PoseMap>& pose_sequence,
                                       const GenerateParams& params);

// Sweep mosaic over guidance weights, fixed seed across cells, labels burned
// into the margins.
TensorBlob guidance_grid(ModelSetF& model, const TensorBlob& subject_image,
                         const PoseWindow& window, const std::vector<float>& s_image_values,
                         const std::vector<float>& s_pose_values, const GenerateParams& params);

uint64_t frame_seed(uint64_t base_seed, size_t frame_index, SeedPolicy policy);

}  // namespace posediff
