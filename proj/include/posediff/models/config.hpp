#pragma once

#include <map>
#include <string>

#include "posediff/errors.hpp"

namespace posediff {

// One knob set for every network in the pipeline, echoed verbatim into
// checkpoint manifests.
struct ModelConfig {
    int image_size = 64;
    int latent_channels = 4;
    int downsample_factor = 4;  // f: image dims / latent dims
    int vae_base = 64;
    int embed_patch = 16;  // image patch edge for the token embedder
    int d_emb = 32;        // embedder token width
    int vae_patch = 4;     // latent patch edge for the conditioning tokens
    int d_ctx = 64;        // cross-attention context width
    int unet_base = 32;
    int time_embed_dim = 128;
    int time_sin_dim = 64;
    int pose_frames = 5;  // pose maps concatenated to the noisy latent
    bool adapter_clip_only = false;
    int timesteps = 1000;
    float beta_start = 1e-4f;
    float beta_end = 2e-2f;

    int latent_size() const { return image_size / downsample_factor; }
    int n_tok() const {
        const int side = image_size / embed_patch;
        return side * side;
    }
    int m_tok() const {
        const int side = latent_size() / vae_patch;
        return side * side;
    }
    int d_vae() const { return latent_channels * vae_patch * vae_patch; }
    int n_ctx() const { return n_tok(); }
    int pose_channels() const { return 2 * pose_frames; }

    void validate() const {
        if (image_size % downsample_factor != 0)
            fail(ErrorCode::ConfigError, "image_size must be divisible by downsample_factor");
        if (image_size % embed_patch != 0)
            fail(ErrorCode::ConfigError, "image_size must be divisible by embed_patch");
        if (latent_size() % vae_patch != 0)
            fail(ErrorCode::ConfigError, "latent size must be divisible by vae_patch");
        if (latent_size() % 2 != 0)
            fail(ErrorCode::ConfigError, "latent size must be even for the down/up path");
        if (pose_frames < 1) fail(ErrorCode::ConfigError, "pose_frames must be >= 1");
        if (unet_base % 8 != 0) fail(ErrorCode::ConfigError, "unet_base must be divisible by 8");
        if (timesteps < 1) fail(ErrorCode::ConfigError, "timesteps must be >= 1");
    }

    std::map<std::string, std::string> to_map() const;
    static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

// Small configuration for fast tests; same topology, fewer channels.
inline ModelConfig tiny_model_config() {
    ModelConfig c;
    c.image_size = 32;
    c.vae_base = 32;
    c.embed_patch = 8;
    c.d_emb = 16;
    c.vae_patch = 2;
    c.d_ctx = 32;
    c.unet_base = 16;
    c.time_embed_dim = 32;
    c.time_sin_dim = 16;
    c.timesteps = 100;
    return c;
}

}  // namespace posediff
