#include "posediff/models/config.hpp"

#include <sstream>

namespace posediff {

namespace {

template <typename T>
std::string fmt(T v) {
    std::ostringstream ss;
    ss.precision(9);
    ss << v;
    return ss.str();
}

int geti(const std::map<std::string, std::string>& kv, const std::string& key, int fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stoi(it->second);
}

float getf(const std::map<std::string, std::string>& kv, const std::string& key, float fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stof(it->second);
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_map() const {
    return {
        {"model.image_size", fmt(image_size)},
        {"model.latent_channels", fmt(latent_channels)},
        {"model.downsample_factor", fmt(downsample_factor)},
        {"model.vae_base", fmt(vae_base)},
        {"model.embed_patch", fmt(embed_patch)},
        {"model.d_emb", fmt(d_emb)},
        {"model.vae_patch", fmt(vae_patch)},
        {"model.d_ctx", fmt(d_ctx)},
        {"model.unet_base", fmt(unet_base)},
        {"model.time_embed_dim", fmt(time_embed_dim)},
        {"model.time_sin_dim", fmt(time_sin_dim)},
        {"model.pose_frames", fmt(pose_frames)},
        {"model.adapter_clip_only", adapter_clip_only ? "1" : "0"},
        {"model.timesteps", fmt(timesteps)},
        {"model.beta_start", fmt(beta_start)},
        {"model.beta_end", fmt(beta_end)},
    };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
    ModelConfig c;
    c.image_size = geti(kv, "model.image_size", c.image_size);
    c.latent_channels = geti(kv, "model.latent_channels", c.latent_channels);
    c.downsample_factor = geti(kv, "model.downsample_factor", c.downsample_factor);
    c.vae_base = geti(kv, "model.vae_base", c.vae_base);
    c.embed_patch = geti(kv, "model.embed_patch", c.embed_patch);
    c.d_emb = geti(kv, "model.d_emb", c.d_emb);
    c.vae_patch = geti(kv, "model.vae_patch", c.vae_patch);
    c.d_ctx = geti(kv, "model.d_ctx", c.d_ctx);
    c.unet_base = geti(kv, "model.unet_base", c.unet_base);
    c.time_embed_dim = geti(kv, "model.time_embed_dim", c.time_embed_dim);
    c.time_sin_dim = geti(kv, "model.time_sin_dim", c.time_sin_dim);
    c.pose_frames = geti(kv, "model.pose_frames", c.pose_frames);
    c.adapter_clip_only = geti(kv, "model.adapter_clip_only", 0) != 0;
    c.timesteps = geti(kv, "model.timesteps", c.timesteps);
    c.beta_start = getf(kv, "model.beta_start", c.beta_start);
    c.beta_end = getf(kv, "model.beta_end", c.beta_end);
    c.validate();
    return c;
}

}  // namespace posediff
