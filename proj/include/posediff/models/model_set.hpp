#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "posediff/models/adapter.hpp"
#include "posediff/models/embedder.hpp"
#include "posediff/models/unet.hpp"
#include "posediff/models/vae.hpp"
#include "posediff/schedule.hpp"

namespace posediff {

enum class ModelPart { VaeEncoder, VaeDecoder, UNetPart, Embedder, AdapterPart };

struct Trainability {
    bool vae_encoder = false;
    bool vae_decoder = false;
    bool unet = false;
    bool adapter = false;
    bool embedder = false;

    static Trainability base_phase() { return {false, false, true, true, true}; }
    static Trainability subject_phase() { return {false, false, true, true, false}; }
    static Trainability decoder_phase() { return {false, true, false, false, false}; }
    static Trainability autoencoder_phase() { return {true, true, false, false, false}; }
};

template <typename T>
struct ModelSet {
    ModelConfig cfg;
    Vae<T> vae;
    UNet<T> unet;
    ImageEmbedder<T> embedder;
    Adapter<T> adapter;
    DiffusionSchedule schedule;
    Trainability train;

    // Global latent normalization so diffusion sees roughly unit-variance
    // inputs; calibrated after autoencoder training, persisted in checkpoints.
    float latent_shift = 0.0f;
    float latent_scale = 1.0f;

    TensorBlob encode_diffusion_latent(const TensorBlob& image) {
        TensorBlob z = vae.encode_blob(image).z;
        for (float& v : z.f32) v = (v - latent_shift) * latent_scale;
        return z;
    }

    TensorBlob decode_diffusion_latent(const TensorBlob& z) {
        TensorBlob raw = z;
        for (float& v : raw.f32) v = v / latent_scale + latent_shift;
        return vae.decode_blob(LatentCode{std::move(raw), cfg.downsample_factor});
    }

    static ModelSet fresh(const ModelConfig& cfg, uint64_t seed) {
        cfg.validate();
        ModelSet m;
        m.cfg = cfg;
        Rng rng(mix_seed(seed, 0x900d));
        m.vae = Vae<T>(cfg, rng);
        m.unet = UNet<T>(cfg, rng);
        // pretrained-style input layer, then the zero-initialized pose columns
        m.unet.widen_input_layer(cfg.pose_channels());
        m.embedder = ImageEmbedder<T>(cfg, rng);
        m.adapter = Adapter<T>(cfg, rng);
        m.schedule = linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
        return m;
    }

    void visit_part(ModelPart part, const nn::ParamVisitor<T>& v) {
        switch (part) {
            case ModelPart::VaeEncoder: vae.visit_encoder(v); break;
            case ModelPart::VaeDecoder: vae.visit_decoder(v); break;
            case ModelPart::UNetPart: unet.visit(v); break;
            case ModelPart::Embedder: embedder.visit(v); break;
            case ModelPart::AdapterPart: adapter.visit(v); break;
        }
    }

    void visit_all(const nn::ParamVisitor<T>& v) {
        visit_part(ModelPart::VaeEncoder, v);
        visit_part(ModelPart::VaeDecoder, v);
        visit_part(ModelPart::UNetPart, v);
        visit_part(ModelPart::Embedder, v);
        visit_part(ModelPart::AdapterPart, v);
    }

    std::vector<nn::Param<T>*> trainable_params() {
        std::vector<nn::Param<T>*> out;
        auto collect = [&](nn::Param<T>& p) { out.push_back(&p); };
        if (train.vae_encoder) visit_part(ModelPart::VaeEncoder, collect);
        if (train.vae_decoder) visit_part(ModelPart::VaeDecoder, collect);
        if (train.unet) visit_part(ModelPart::UNetPart, collect);
        if (train.adapter) visit_part(ModelPart::AdapterPart, collect);
        if (train.embedder) visit_part(ModelPart::Embedder, collect);
        return out;
    }

    void zero_all_grads() {
        visit_all([](nn::Param<T>& p) { p.zero_grad(); });
    }

    uint64_t part_checksum(ModelPart part) {
        uint64_t h = 1469598103934665603ULL;  // FNV-1a
        visit_part(part, [&](nn::Param<T>& p) {
            const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
            const size_t n = static_cast<size_t>(p.value.numel()) * sizeof(T);
            for (size_t i = 0; i < n; i++) {
                h ^= bytes[i];
                h *= 1099511628211ULL;
            }
        });
        return h;
    }
};

using ModelSetF = ModelSet<float>;

// Checkpoint directory: manifest.txt (config echo + part index) plus one
// tensor blob per parameter.
void save_checkpoint(ModelSetF& model, const std::filesystem::path& dir,
                     const std::map<std::string, std::string>& extra);

struct Checkpoint {
    ModelSetF model;
    std::map<std::string, std::string> meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Stable identifier for a saved checkpoint (hash of its manifest).
std::string checkpoint_id(const std::filesystem::path& dir);

}  // namespace posediff
