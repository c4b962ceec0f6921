#include "posediff/conditioning.hpp"

#include "posediff/resample.hpp"

namespace posediff {

ImageEmbedding embed_image(ModelSetF& model, const TensorBlob& image, EmbedderMode mode,
                           const std::optional<TensorBlob>& external) {
    if (mode == EmbedderMode::External) {
        if (!external)
            fail(ErrorCode::MissingExternalEmbedding,
                 "external embedder mode but no embedding supplied");
        return external_embedding(*external, model.cfg.n_tok(), model.cfg.d_emb);
    }
    return model.embedder.embed_blob(image);
}

TensorBlob build_pose_conditioning(const PoseWindow& window, int64_t latent_h, int64_t latent_w,
                                   int frames_used) {
    if (window.frames.size() != kPoseWindowSize)
        fail(ErrorCode::BadShape, "pose window must hold " + std::to_string(kPoseWindowSize) +
                                      " frames");
    if (frames_used < 1 || frames_used > kPoseWindowSize || frames_used % 2 == 0)
        fail(ErrorCode::BadShape, "frames_used must be odd and within the window");

    const int first = (kPoseWindowSize - frames_used) / 2;
    TensorBlob out = TensorBlob::zeros({2 * frames_used, latent_h, latent_w});
    for (int f = 0; f < frames_used; f++) {
        const TensorBlob resampled =
            area_resample(window.frames[static_cast<size_t>(first + f)].blob, latent_h, latent_w);
        for (int c = 0; c < 2; c++)
            for (int64_t y = 0; y < latent_h; y++)
                for (int64_t x = 0; x < latent_w; x++)
                    out.chw(2 * f + c, y, x) = resampled.chw(c, y, x);
    }
    return out;
}

ConditioningBundle build_conditioning(ModelSetF& model, const TensorBlob& input_image,
                                      const PoseWindow& window, EmbedderMode mode,
                                      const std::optional<TensorBlob>& external) {
    const ModelConfig& cfg = model.cfg;
    ConditioningBundle bundle;
    bundle.external_embedding = mode == EmbedderMode::External;
    bundle.clip_tokens = embed_image(model, input_image, mode, external).tokens;
    if (!cfg.adapter_clip_only)
        bundle.vae_tokens =
            patchify_latent(model.encode_diffusion_latent(input_image), cfg.vae_patch).tokens;
    bundle.c_image = model.adapter.forward_blob(bundle.clip_tokens, bundle.vae_tokens);
    bundle.c_pose =
        build_pose_conditioning(window, cfg.latent_size(), cfg.latent_size(), cfg.pose_frames);
    return bundle;
}

TensorBlob null_image_context(const ModelConfig& cfg) {
    return TensorBlob::zeros({cfg.n_ctx(), cfg.d_ctx});
}

TensorBlob null_pose_conditioning(const ModelConfig& cfg) {
    return TensorBlob::zeros({cfg.pose_channels(), cfg.latent_size(), cfg.latent_size()});
}

ConditioningBundle apply_conditioning_dropout(const ConditioningBundle& bundle, Rng& rng,
                                              bool training, const DropoutProbs& probs) {
    if (!training) return bundle;
    const double u = rng.uniform();
    ConditioningBundle out = bundle;
    bool drop_pose = false, drop_image = false;
    if (u < probs.pose_only) {
        drop_pose = true;
    } else if (u < probs.pose_only + probs.image_only) {
        drop_image = true;
    } else if (u < probs.pose_only + probs.image_only + probs.both) {
        drop_pose = drop_image = true;
    }
    if (drop_pose) {
        out.null_pose = true;
        out.c_pose = TensorBlob::zeros(bundle.c_pose.shape);
    }
    if (drop_image) {
        out.null_image = true;
        out.c_image = TensorBlob::zeros(bundle.c_image.shape);
    }
    return out;
}

}  // namespace posediff
