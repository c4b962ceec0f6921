#pragma once

#include <optional>

#include "posediff/dataset.hpp"
#include "posediff/models/model_set.hpp"

namespace posediff {

// Both conditioning signals plus the null-replacement flags. clip/vae token
// inputs are kept so training can rebuild the image context on the tape.
struct ConditioningBundle {
    TensorBlob c_image;  // adapter output [n_ctx, d_ctx]; all zeros when nulled
    TensorBlob c_pose;   // [2*pose_frames, h, w]; all zeros when nulled
    bool null_image = false;
    bool null_pose = false;

    TensorBlob clip_tokens;  // [n_tok, d_emb]
    TensorBlob vae_tokens;   // [m_tok, d_vae] (empty in clip-only mode)
    bool external_embedding = false;
};

enum class EmbedderMode { Builtin, External };

// Global image tokens from the built-in embedder, or pass-through of an
// externally supplied embedding.
ImageEmbedding embed_image(ModelSetF& model, const TensorBlob& image, EmbedderMode mode,
                           const std::optional<TensorBlob>& external = std::nullopt);

// Pose window -> channel-concatenated conditioning stack, area-resampled to
// the latent grid. frames_used trims the window symmetrically around its
// center (1 keeps only the target pose).
TensorBlob build_pose_conditioning(const PoseWindow& window, int64_t latent_h, int64_t latent_w,
                                   int frames_used = kPoseWindowSize);

ConditioningBundle build_conditioning(ModelSetF& model, const TensorBlob& input_image,
                                      const PoseWindow& window,
                                      EmbedderMode mode = EmbedderMode::Builtin,
                                      const std::optional<TensorBlob>& external = std::nullopt);

// Null tensors used for the unconditional guidance branches; bit-identical to
// what conditioning dropout produces during training.
TensorBlob null_image_context(const ModelConfig& cfg);
TensorBlob null_pose_conditioning(const ModelConfig& cfg);

struct DropoutProbs {
    double pose_only = 0.05;
    double image_only = 0.05;
    double both = 0.05;
};

// Disjoint-event dropout: one uniform draw selects pose-only, image-only,
// both, or none. Inference mode (training=false) returns the bundle as-is.
ConditioningBundle apply_conditioning_dropout(const ConditioningBundle& bundle, Rng& rng,
                                              bool training = true,
                                              const DropoutProbs& probs = DropoutProbs{});

}  // namespace posediff
