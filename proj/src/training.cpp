#include "posediff/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "posediff/nn/adam.hpp"
#include "posediff/resample.hpp"

namespace posediff {

const char* phase_name(TrainPhase p) {
    switch (p) {
        case TrainPhase::Base: return "base";
        case TrainPhase::SubjectUnet: return "subject_unet";
        case TrainPhase::SubjectVae: return "subject_vae";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (micro_batch < 1 || grad_accum < 1) fail(ErrorCode::ConfigError, "batch sizes must be >= 1");
    if (lr <= 0) fail(ErrorCode::ConfigError, "lr must be positive");
    if (dropout_enabled && phase != TrainPhase::Base)
        fail(ErrorCode::ConfigError, "conditioning dropout is a base-phase mechanism");
}

namespace {

// One noisy-latent prediction with the tape recording through the UNet,
// adapter and (builtin, non-null) embedder; everything else enters as
// constants. Returns the sample loss.
double sample_loss(ModelSetF& model, const TensorBlob& input_image, const TensorBlob& z0,
                   const ConditioningBundle& bundle, int t, const TensorBlob& eps,
                   bool accumulate, double grad_scale) {
    const NoisyLatent zt = q_sample(z0, t, eps, model.schedule);
    nn::Graph<float> g(accumulate);
    auto eps_hat = noise_prediction_graph(g, model, input_image, bundle, zt.z, t);
    auto loss = nn::mse_loss(g, eps_hat, nn::from_blob<float>(eps));
    const double value = loss->value[0];
    if (!std::isfinite(value)) fail(ErrorCode::NonFinite, "noise-prediction loss is not finite");
    if (accumulate) g.backward(loss, static_cast<float>(grad_scale));
    return value;
}

}  // namespace

double training_loss(ModelSetF& model, std::span<const SampleRecord> batch,
                     std::span<const ConditioningBundle> bundles, Rng& rng, bool accumulate_grads,
                     double grad_scale) {
    if (batch.empty() || batch.size() != bundles.size())
        fail(ErrorCode::ShapeMismatch, "batch and conditioning lists must match and be nonempty");
    double total = 0.0;
    for (size_t i = 0; i < batch.size(); i++) {
        const TensorBlob z0 = model.encode_diffusion_latent(batch[i].target_frame);
        const int t = static_cast<int>(rng.integer(static_cast<uint64_t>(model.schedule.timesteps)));
        TensorBlob eps = TensorBlob::zeros(z0.shape);
        fill_normal(eps, rng);
        total += sample_loss(model, batch[i].input_image, z0, bundles[i], t, eps, accumulate_grads,
                             grad_scale);
    }
    return total / static_cast<double>(batch.size());
}

TrainReport train_autoencoder(ModelSetF& model, const Dataset& dataset,
                              const AutoencoderConfig& cfg) {
    if (dataset.videos().empty()) fail(ErrorCode::EmptyDataset, "autoencoder needs data");
    model.train = Trainability::autoencoder_phase();
    nn::Adam<float> opt(model.trainable_params(), cfg.lr);
    Rng rng(mix_seed(cfg.seed, 0xae));

    // all frames fit in memory at desk scale
    std::vector<TensorBlob> frames;
    for (size_t v = 0; v < dataset.videos().size(); v++)
        for (size_t f = 0; f < dataset.videos()[v].frame_paths.size(); f++)
            frames.push_back(dataset.load_frame(v, f));

    TrainReport report;
    for (int step = 0; step < cfg.steps; step++) {
        model.zero_all_grads();
        double loss_sum = 0.0;
        for (int b = 0; b < cfg.batch; b++) {
            const TensorBlob& img = frames[rng.integer(frames.size())];
            nn::Graph<float> g(true);
            auto image_var = g.constant(nn::from_blob<float>(img));
            auto moments = model.vae.encode_moments(g, image_var);
            auto mean = nn::slice_channels(g, moments, 0, model.cfg.latent_channels);
            auto logvar =
                nn::slice_channels(g, moments, model.cfg.latent_channels, 2 * model.cfg.latent_channels);
            auto recon = model.vae.decode(g, mean);
            auto loss = nn::add(g, nn::l1_loss(g, recon, nn::from_blob<float>(img)),
                                nn::scale(g, nn::kl_normal(g, mean, logvar), cfg.kl_weight));
            const double v = loss->value[0];
            if (!std::isfinite(v)) fail(ErrorCode::Divergence, "autoencoder loss diverged");
            g.backward(loss, 1.0f / static_cast<float>(cfg.batch));
            loss_sum += v;
        }
        opt.step();
        report.curve.push_back({step, loss_sum / cfg.batch, cfg.lr, "autoencoder"});
        if ((step + 1) % 100 == 0)
            std::printf("autoencoder step %d/%d loss %.5f\n", step + 1, cfg.steps,
                        loss_sum / cfg.batch);
    }
    report.final_step = cfg.steps;
    model.train = Trainability{};
    calibrate_latent_normalization(model, dataset);
    return report;
}

void calibrate_latent_normalization(ModelSetF& model, const Dataset& dataset, int max_frames) {
    double sum = 0.0, sq = 0.0;
    int64_t n = 0;
    int used = 0;
    for (size_t v = 0; v < dataset.videos().size() && used < max_frames; v++)
        for (size_t f = 0; f < dataset.videos()[v].frame_paths.size() && used < max_frames; f++) {
            const TensorBlob z = model.vae.encode_blob(dataset.load_frame(v, f)).z;
            for (float x : z.f32) {
                sum += x;
                sq += double(x) * x;
                n++;
            }
            used++;
        }
    if (n == 0) return;
    const double mean = sum / static_cast<double>(n);
    const double var = sq / static_cast<double>(n) - mean * mean;
    model.latent_shift = static_cast<float>(mean);
    model.latent_scale = var > 1e-12 ? static_cast<float>(1.0 / std::sqrt(var)) : 1.0f;
}

namespace {

// Per-frame constants of the base phase (the autoencoder is frozen there, so
// latents, conditioning tokens and pose stacks are precomputed once).
struct FrameCache {
    TensorBlob image;
    TensorBlob z0;
    TensorBlob vae_tokens;
    TensorBlob pose_cond;
    TensorBlob clip_tokens;  // external mode only
};

struct VideoCache {
    std::string id;
    std::vector<FrameCache> frames;
};

std::vector<VideoCache> build_cache(ModelSetF& model, const Dataset& dataset,
                                    const TrainConfig& cfg) {
    std::vector<VideoCache> cache;
    for (size_t v = 0; v < dataset.videos().size(); v++) {
        VideoCache vc;
        vc.id = dataset.videos()[v].id;
        const auto poses = dataset.load_poses(v);
        for (size_t f = 0; f < dataset.videos()[v].frame_paths.size(); f++) {
            FrameCache fc;
            fc.image = dataset.load_frame(v, f);
            fc.z0 = model.encode_diffusion_latent(fc.image);
            if (!model.cfg.adapter_clip_only)
                fc.vae_tokens = patchify_latent(fc.z0, model.cfg.vae_patch).tokens;
            fc.pose_cond = build_pose_conditioning(
                build_pose_window(poses, static_cast<int64_t>(f)), model.cfg.latent_size(),
                model.cfg.latent_size(), model.cfg.pose_frames);
            if (cfg.embedder_mode == EmbedderMode::External)
                fc.clip_tokens = load_external_embedding(dataset.videos()[v].frame_paths[f],
                                                         model.cfg.n_tok(), model.cfg.d_emb)
                                     .tokens;
            vc.frames.push_back(std::move(fc));
        }
        cache.push_back(std::move(vc));
    }
    return cache;
}

}  // namespace

TrainReport train_base(ModelSetF& model, const Dataset& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.phase != TrainPhase::Base) fail(ErrorCode::ConfigError, "train_base wants phase=base");
    model.train = Trainability::base_phase();
    nn::Adam<float> opt(model.trainable_params(), cfg.lr);
    Rng rng(mix_seed(cfg.seed, 0xba5e));

    const std::vector<VideoCache> cache = build_cache(model, dataset, cfg);
    int64_t total_frames = 0;
    for (const auto& vc : cache) total_frames += static_cast<int64_t>(vc.frames.size());
    const int64_t steps =
        std::max<int64_t>(1, cfg.epochs * total_frames / cfg.effective_batch());

    TrainReport report;
    for (int64_t step = 0; step < steps; step++) {
        model.zero_all_grads();
        double loss_sum = 0.0;
        for (int b = 0; b < cfg.effective_batch(); b++) {
            // same draw order as sample_training_pair: video, input, target
            const VideoCache& vc = cache[rng.integer(cache.size())];
            const FrameCache& input = vc.frames[rng.integer(vc.frames.size())];
            const FrameCache& target = vc.frames[rng.integer(vc.frames.size())];

            ConditioningBundle bundle;
            bundle.external_embedding = cfg.embedder_mode == EmbedderMode::External;
            bundle.clip_tokens = input.clip_tokens;
            bundle.vae_tokens = input.vae_tokens;
            bundle.c_pose = target.pose_cond;
            bundle.c_image = null_image_context(model.cfg);  // filled on the tape when non-null
            if (cfg.dropout_enabled) {
                ConditioningBundle probe = apply_conditioning_dropout(bundle, rng, true, cfg.dropout);
                bundle.null_image = probe.null_image;
                bundle.null_pose = probe.null_pose;
                if (probe.null_pose) bundle.c_pose = probe.c_pose;
            }

            const int t =
                static_cast<int>(rng.integer(static_cast<uint64_t>(model.schedule.timesteps)));
            TensorBlob eps = TensorBlob::zeros(target.z0.shape);
            fill_normal(eps, rng);
            loss_sum += sample_loss(model, input.image, target.z0, bundle, t, eps, true,
                                    1.0 / cfg.effective_batch());
        }
        opt.step();
        const double loss = loss_sum / cfg.effective_batch();
        if (!std::isfinite(loss)) fail(ErrorCode::Divergence, "base training loss diverged");
        report.curve.push_back({cfg.start_step + step, loss, cfg.lr, phase_name(cfg.phase)});
        if ((step + 1) % 100 == 0)
            std::printf("base step %lld/%lld loss %.5f\n",
                        static_cast<long long>(cfg.start_step + step + 1),
                        static_cast<long long>(cfg.start_step + steps), loss);
    }
    report.final_step = cfg.start_step + steps;
    model.train = Trainability{};
    return report;
}

std::pair<TensorBlob, PoseWindow> augment_pair(const TensorBlob& image, const PoseWindow& window,
                                               Rng& rng, double min_scale, double max_scale) {
    if (image.shape.size() != 3) fail(ErrorCode::BadShape, "augment expects [3,H,W]");
    const int64_t h = image.shape[1], w = image.shape[2];
    const double s = min_scale + (max_scale - min_scale) * rng.uniform();
    const int64_t ch = std::min<int64_t>(h, std::llround(s * static_cast<double>(h)));
    const int64_t cw = std::min<int64_t>(w, std::llround(s * static_cast<double>(w)));
    const int64_t oy = static_cast<int64_t>(rng.integer(static_cast<uint64_t>(h - ch + 1)));
    const int64_t ox = static_cast<int64_t>(rng.integer(static_cast<uint64_t>(w - cw + 1)));

    auto transform = [&](const TensorBlob& src) {
        const int64_t sh = src.shape[1], sw = src.shape[2];
        if (sh == h && sw == w) {
            if (ch == h && cw == w) return src;  // identity
            return bilinear_resize(crop(src, oy, ox, ch, cw), sh, sw);
        }
        // other resolutions get the same relative window
        const int64_t ry = std::llround(static_cast<double>(oy) * sh / h);
        const int64_t rx = std::llround(static_cast<double>(ox) * sw / w);
        const int64_t rh = std::max<int64_t>(1, std::llround(static_cast<double>(ch) * sh / h));
        const int64_t rw = std::max<int64_t>(1, std::llround(static_cast<double>(cw) * sw / w));
        return bilinear_resize(crop(src, std::min(ry, sh - rh), std::min(rx, sw - rw), rh, rw), sh,
                               sw);
    };

    PoseWindow out_window;
    out_window.center_index = window.center_index;
    for (const PoseMap& p : window.frames) out_window.frames.push_back(PoseMap{transform(p.blob)});
    return {transform(image), out_window};
}

SubjectReport finetune_subject(ModelSetF& model, const std::vector<SubjectInput>& inputs,
                               const TrainConfig& cfg, const DecoderFtConfig& decoder_cfg) {
    cfg.validate();
    if (cfg.phase != TrainPhase::SubjectUnet)
        fail(ErrorCode::ConfigError, "finetune_subject wants phase=subject_unet");
    if (inputs.empty()) fail(ErrorCode::EmptyDataset, "no subject inputs");
    for (const auto& in : inputs)
        if (in.window.frames.size() != kPoseWindowSize)
            fail(ErrorCode::MissingPose, "subject input lacks a pose window");

    model.train = Trainability::subject_phase();
    nn::Adam<float> opt(model.trainable_params(), cfg.lr);
    Rng rng(mix_seed(cfg.seed, 0x5b));

    SubjectReport report;
    report.selection_counts.assign(inputs.size(), 0);
    for (int step = 0; step < cfg.steps; step++) {
        model.zero_all_grads();
        double loss_sum = 0.0;
        for (int b = 0; b < cfg.effective_batch(); b++) {
            const size_t idx = static_cast<size_t>(rng.integer(inputs.size()));
            report.selection_counts[idx]++;
            TensorBlob img = inputs[idx].image;
            PoseWindow win = inputs[idx].window;
            if (cfg.augment_enabled) {
                auto aug = augment_pair(img, win, rng, cfg.augment_min_scale, 1.0);
                img = std::move(aug.first);
                win = std::move(aug.second);
            }
            ConditioningBundle bundle = build_conditioning(model, img, win, cfg.embedder_mode);
            const TensorBlob z0 = model.encode_diffusion_latent(img);
            const int t =
                static_cast<int>(rng.integer(static_cast<uint64_t>(model.schedule.timesteps)));
            TensorBlob eps = TensorBlob::zeros(z0.shape);
            fill_normal(eps, rng);
            loss_sum +=
                sample_loss(model, img, z0, bundle, t, eps, true, 1.0 / cfg.effective_batch());
        }
        opt.step();
        const double loss = loss_sum / cfg.effective_batch();
        if (!std::isfinite(loss)) fail(ErrorCode::Divergence, "subject finetune diverged");
        report.unet.curve.push_back({step, loss, cfg.lr, phase_name(cfg.phase)});
        if ((step + 1) % 100 == 0)
            std::printf("subject step %d/%d loss %.5f\n", step + 1, cfg.steps, loss);
    }
    report.unet.final_step = cfg.steps;
    model.train = Trainability{};

    std::vector<TensorBlob> images;
    for (const auto& in : inputs) images.push_back(in.image);
    DecoderFtConfig dc = decoder_cfg;
    dc.seed = mix_seed(cfg.seed, 0xdec);
    report.decoder = finetune_decoder(model, images, dc);
    return report;
}

TrainReport finetune_decoder(ModelSetF& model, const std::vector<TensorBlob>& subject_images,
                             const DecoderFtConfig& cfg) {
    if (subject_images.empty()) fail(ErrorCode::EmptyDataset, "no subject images");
    model.train = Trainability::decoder_phase();
    nn::Adam<float> opt(model.trainable_params(), cfg.lr);
    Rng rng(mix_seed(cfg.seed, 0xd3c));

    TrainReport report;
    for (int step = 0; step < cfg.steps; step++) {
        model.zero_all_grads();
        const TensorBlob& img = subject_images[rng.integer(subject_images.size())];
        nn::Graph<float> g(true);
        auto latent = model.vae.encode_mean(g, g.constant(nn::from_blob<float>(img)));
        auto recon = model.vae.decode(g, latent);
        auto loss = nn::l1_loss(g, recon, nn::from_blob<float>(img));
        const double v = loss->value[0];
        if (!std::isfinite(v)) fail(ErrorCode::Divergence, "decoder finetune diverged");
        g.backward(loss);
        opt.step();
        report.curve.push_back({step, v, cfg.lr, phase_name(TrainPhase::SubjectVae)});
    }
    report.final_step = cfg.steps;
    model.train = Trainability{};
    return report;
}

void append_train_log(const std::filesystem::path& path, const TrainReport& report) {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream os(path, std::ios::app);
    if (!os) fail(ErrorCode::IoError, "cannot open log " + path.string());
    if (fresh) os << "step,loss,lr,phase\n";
    for (const auto& p : report.curve)
        os << p.step << "," << p.loss << "," << p.lr << "," << p.phase << "\n";
}

}  // namespace posediff
