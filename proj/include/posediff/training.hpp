#pragma once

#include <span>
#include <string>
#include <vector>

#include "posediff/conditioning.hpp"
#include "posediff/dataset.hpp"

namespace posediff {

struct LossPoint {
    int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::string phase;
};

struct TrainReport {
    std::vector<LossPoint> curve;
    int64_t final_step = 0;
};

enum class TrainPhase { Base, SubjectUnet, SubjectVae };

const char* phase_name(TrainPhase p);

struct TrainConfig {
    TrainPhase phase = TrainPhase::Base;
    double lr = 5e-6;
    int epochs = 5;    // base phase is budgeted in epochs
    int steps = 500;   // subject phase in steps
    int micro_batch = 4;
    int grad_accum = 4;
    bool dropout_enabled = true;
    bool augment_enabled = false;
    uint64_t seed = 0;
    EmbedderMode embedder_mode = EmbedderMode::Builtin;
    DropoutProbs dropout;
    double augment_min_scale = 0.9;
    int64_t start_step = 0;  // resumed runs continue the counter

    int effective_batch() const { return micro_batch * grad_accum; }

    static TrainConfig base_defaults() { return TrainConfig{}; }

    static TrainConfig subject_defaults() {
        TrainConfig c;
        c.phase = TrainPhase::SubjectUnet;
        c.lr = 1e-5;
        c.steps = 500;
        c.micro_batch = 1;
        c.grad_accum = 1;
        c.dropout_enabled = false;
        c.augment_enabled = true;
        return c;
    }

    void validate() const;
};

struct AutoencoderConfig {
    int steps = 800;
    double lr = 1e-3;
    int batch = 8;
    double kl_weight = 1e-4;
    uint64_t seed = 0;
};

struct DecoderFtConfig {
    int steps = 1500;
    double lr = 5e-5;
    uint64_t seed = 0;
};

// Full conditioned prediction graph for one training sample: channel-concat
// of the noisy latent and pose stack into the denoiser, image context built on
// the tape (or the null constant). Shared by the float trainer and the
// double-precision gradient checks.
template <typename T>
nn::Var<T> noise_prediction_graph(nn::Graph<T>& g, ModelSet<T>& model,
                                  const TensorBlob& input_image, const ConditioningBundle& bundle,
                                  const TensorBlob& z_noisy, int t) {
    const ModelConfig& cfg = model.cfg;
    TensorBlob z_and_pose = TensorBlob::zeros(
        {cfg.latent_channels + cfg.pose_channels(), cfg.latent_size(), cfg.latent_size()});
    std::copy(z_noisy.f32.begin(), z_noisy.f32.end(), z_and_pose.f32.begin());
    std::copy(bundle.c_pose.f32.begin(), bundle.c_pose.f32.end(),
              z_and_pose.f32.begin() + z_noisy.f32.size());

    nn::Var<T> ctx;
    if (bundle.null_image) {
        ctx = g.constant(nn::from_blob<T>(bundle.c_image));
    } else {
        nn::Var<T> clip_var;
        if (bundle.external_embedding)
            clip_var = g.constant(nn::from_blob<T>(bundle.clip_tokens));
        else
            clip_var = model.embedder.forward(g, g.constant(nn::from_blob<T>(input_image)));
        nn::Var<T> vae_var;
        if (!cfg.adapter_clip_only) vae_var = g.constant(nn::from_blob<T>(bundle.vae_tokens));
        ctx = model.adapter.forward(g, clip_var, vae_var);
    }
    return model.unet.forward(g, g.constant(nn::from_blob<T>(z_and_pose)), t, ctx);
}

// Mean epsilon-prediction objective over a batch of predictions; shared by the
// real trainer and by test fixtures that substitute their own denoiser.
template <typename T>
nn::Var<T> epsilon_objective(nn::Graph<T>& g, const std::vector<nn::Var<T>>& eps_hat,
                             const std::vector<nn::Tensor<T>>& eps_true) {
    if (eps_hat.empty() || eps_hat.size() != eps_true.size())
        fail(ErrorCode::ShapeMismatch, "objective needs matching nonempty prediction/target lists");
    nn::Var<T> total;
    for (size_t i = 0; i < eps_hat.size(); i++) {
        auto term = nn::mse_loss(g, eps_hat[i], eps_true[i]);
        total = total ? nn::add(g, total, term) : term;
    }
    return nn::scale(g, total, 1.0 / static_cast<double>(eps_hat.size()));
}

// Noise-prediction loss of a batch under the current model; draws (t, eps)
// per record from the generator. Gradients are accumulated into the model
// parameters when accumulate_grads is set (scaled by grad_scale per sample).
double training_loss(ModelSetF& model, std::span<const SampleRecord> batch,
                     std::span<const ConditioningBundle> bundles, Rng& rng,
                     bool accumulate_grads = false, double grad_scale = 1.0);

TrainReport train_autoencoder(ModelSetF& model, const Dataset& dataset,
                              const AutoencoderConfig& cfg);

// Sets the global latent shift/scale from a sample of encoded frames; runs
// automatically at the end of train_autoencoder.
void calibrate_latent_normalization(ModelSetF& model, const Dataset& dataset, int max_frames = 48);

TrainReport train_base(ModelSetF& model, const Dataset& dataset, const TrainConfig& cfg);

struct SubjectInput {
    TensorBlob image;
    PoseWindow window;
};

struct SubjectReport {
    TrainReport unet;
    TrainReport decoder;
    std::vector<int64_t> selection_counts;  // draws per input image
};

// Phase 2: subject-specific UNet+adapter refinement over augmented pairs,
// then the decoder-only sub-step.
SubjectReport finetune_subject(ModelSetF& model, const std::vector<SubjectInput>& inputs,
                               const TrainConfig& cfg, const DecoderFtConfig& decoder_cfg);

TrainReport finetune_decoder(ModelSetF& model, const std::vector<TensorBlob>& subject_images,
                             const DecoderFtConfig& cfg);

// Identical random crop (scale in [min_scale, max_scale], resized back)
// applied to the image and every pose frame.
std::pair<TensorBlob, PoseWindow> augment_pair(const TensorBlob& image, const PoseWindow& window,
                                               Rng& rng, double min_scale = 0.9,
                                               double max_scale = 1.0);

void append_train_log(const std::filesystem::path& path, const TrainReport& report);

}  // namespace posediff
