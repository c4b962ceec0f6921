#include "posediff/inference.hpp"

#include <cmath>
#include <thread>

#include "posediff/denoiser.hpp"

namespace posediff {

TensorBlob dual_cfg(const TensorBlob& eps_uncond, const TensorBlob& eps_image,
                    const TensorBlob& eps_full, const GuidanceWeights& w) {
    if (!eps_uncond.same_shape(eps_image) || !eps_uncond.same_shape(eps_full))
        fail(ErrorCode::ShapeMismatch, "guidance branches must share a shape");
    if (!std::isfinite(w.s_image) || !std::isfinite(w.s_pose))
        fail(ErrorCode::InvalidRange, "guidance weights must be finite");

    // uu + sI*(Iu - uu) + sp*(Ip - Iu), regrouped per branch so unit weights
    // select a branch without round-off; accumulated in f64
    const double cu = 1.0 - double(w.s_image);
    const double ci = double(w.s_image) - double(w.s_pose);
    const double cf = w.s_pose;
    TensorBlob out = TensorBlob::zeros(eps_uncond.shape);
    for (size_t i = 0; i < out.f32.size(); i++)
        out.f32[i] = static_cast<float>(cu * eps_uncond.f32[i] + ci * eps_image.f32[i] +
                                        cf * eps_full.f32[i]);
    return out;
}

DenoiseFn make_guided_denoiser(ModelSetF& model, const ConditioningBundle& bundle,
                               const GuidanceWeights& w, int64_t* eval_counter) {
    ConditioningBundle uncond = bundle;
    uncond.null_image = uncond.null_pose = true;
    uncond.c_image = null_image_context(model.cfg);
    uncond.c_pose = null_pose_conditioning(model.cfg);

    ConditioningBundle image_only = bundle;
    image_only.null_pose = true;
    image_only.c_pose = null_pose_conditioning(model.cfg);

    return [&model, uncond, image_only, bundle, w, eval_counter](const TensorBlob& z, int t) {
        const TensorBlob eps_uu = unet_forward(model, z, t, uncond);
        const TensorBlob eps_iu = unet_forward(model, z, t, image_only);
        const TensorBlob eps_ip = unet_forward(model, z, t, bundle);
        if (eval_counter) *eval_counter += 3;
        return dual_cfg(eps_uu, eps_iu, eps_ip, w);
    };
}

namespace {

TensorBlob run_sampler(ModelSetF& model, const DenoiseFn& fn, const TensorBlob& z_T,
                       const GenerateParams& params, uint64_t seed) {
    switch (params.sampler) {
        case SamplerKind::Ddim: return ddim_sample(fn, z_T, params.steps, model.schedule);
        case SamplerKind::Ddpm: {
            Rng rng(mix_seed(seed, 0xdd));
            return ddpm_sample(fn, z_T, model.schedule, rng);
        }
        default: return pndm_sample(fn, z_T, params.steps, model.schedule);
    }
}

}  // namespace

uint64_t frame_seed(uint64_t base_seed, size_t frame_index, SeedPolicy policy) {
    return policy == SeedPolicy::PerFrameDerived ? mix_seed(base_seed, frame_index) : base_seed;
}

TensorBlob generate_frame(ModelSetF& model, const TensorBlob& subject_image,
                          const PoseWindow& window, const GenerateParams& params) {
    const ConditioningBundle bundle = build_conditioning(
        model, subject_image, window, params.embedder_mode, params.external_embedding);
    const DenoiseFn fn = make_guided_denoiser(model, bundle, params.weights);

    Rng rng(params.seed);
    const int h = model.cfg.latent_size();
    TensorBlob z_T = normal_blob({model.cfg.latent_channels, h, h}, rng);
    const TensorBlob z0 = run_sampler(model, fn, z_T, params, params.seed);
    return model.decode_diffusion_latent(z0);
}

std::vector<TensorBlob> generate_video(ModelSetF& model, const TensorBlob& subject_image,
                                       const std::vector<PoseMap>& pose_sequence,
                                       const GenerateParams& params) {
    if (pose_sequence.empty()) fail(ErrorCode::EmptyPoseSequence, "no driving poses");
    const size_t n = pose_sequence.size();
    std::vector<TensorBlob> frames(n);

    auto render_range = [&](size_t begin, size_t stride) {
        for (size_t i = begin; i < n; i += stride) {
            GenerateParams p = params;
            p.seed = frame_seed(params.seed, i, params.seed_policy);
            frames[i] = generate_frame(model, subject_image,
                                       build_pose_window(pose_sequence, static_cast<int64_t>(i)), p);
        }
    };

    const int jobs = std::max(1, params.jobs);
    if (jobs == 1) {
        render_range(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; j++) pool.emplace_back(render_range, static_cast<size_t>(j), jobs);
        for (auto& th : pool) th.join();
    }
    return frames;
}

namespace {

// 3x5 glyphs for the grid labels.
struct Glyph {
    char c;
    uint16_t rows[5];  // 3 low bits per row
};

constexpr Glyph kGlyphs[] = {
    {'0', {0b111, 0b101, 0b101, 0b101, 0b111}}, {'1', {0b010, 0b110, 0b010, 0b010, 0b111}},
    {'2', {0b111, 0b001, 0b111, 0b100, 0b111}}, {'3', {0b111, 0b001, 0b111, 0b001, 0b111}},
    {'4', {0b101, 0b101, 0b111, 0b001, 0b001}}, {'5', {0b111, 0b100, 0b111, 0b001, 0b111}},
    {'6', {0b111, 0b100, 0b111, 0b101, 0b111}}, {'7', {0b111, 0b001, 0b010, 0b010, 0b010}},
    {'8', {0b111, 0b101, 0b111, 0b101, 0b111}}, {'9', {0b111, 0b101, 0b111, 0b001, 0b111}},
    {'.', {0b000, 0b000, 0b000, 0b000, 0b010}}, {'-', {0b000, 0b000, 0b111, 0b000, 0b000}},
    {'=', {0b000, 0b111, 0b000, 0b111, 0b000}}, {'s', {0b011, 0b100, 0b010, 0b001, 0b110}},
    {'i', {0b010, 0b000, 0b010, 0b010, 0b010}}, {'p', {0b110, 0b101, 0b110, 0b100, 0b100}},
    {' ', {0b000, 0b000, 0b000, 0b000, 0b000}},
};

void draw_text(TensorBlob& canvas, int64_t y0, int64_t x0, const std::string& text) {
    const int64_t h = canvas.shape[1], w = canvas.shape[2];
    int64_t x = x0;
    for (char c : text) {
        for (const Glyph& gl : kGlyphs) {
            if (gl.c != c) continue;
            for (int ry = 0; ry < 5; ry++)
                for (int rx = 0; rx < 3; rx++)
                    if (gl.rows[ry] >> (2 - rx) & 1) {
                        const int64_t yy = y0 + ry, xx = x + rx;
                        if (yy >= 0 && yy < h && xx >= 0 && xx < w)
                            for (int ch = 0; ch < 3; ch++) canvas.chw(ch, yy, xx) = 1.0f;
                    }
            break;
        }
        x += 4;
    }
}

std::string short_float(float v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return std::string(buf);
}

}  // namespace

TensorBlob guidance_grid(ModelSetF& model, const TensorBlob& subject_image,
                         const PoseWindow& window, const std::vector<float>& s_image_values,
                         const std::vector<float>& s_pose_values, const GenerateParams& params) {
    if (s_image_values.empty() || s_pose_values.empty())
        fail(ErrorCode::ConfigError, "guidance grid needs nonempty weight lists");
    const int64_t cell = model.cfg.image_size;
    const int64_t margin = 9;
    const int64_t cols = static_cast<int64_t>(s_image_values.size());
    const int64_t rows = static_cast<int64_t>(s_pose_values.size());
    TensorBlob mosaic = TensorBlob::zeros({3, margin + rows * cell, margin + cols * cell});

    for (int64_t r = 0; r < rows; r++) {
        for (int64_t c = 0; c < cols; c++) {
            GenerateParams p = params;
            p.weights = GuidanceWeights{s_image_values[static_cast<size_t>(c)],
                                        s_pose_values[static_cast<size_t>(r)]};
            const TensorBlob frame = generate_frame(model, subject_image, window, p);
            for (int ch = 0; ch < 3; ch++)
                for (int64_t y = 0; y < cell; y++)
                    for (int64_t x = 0; x < cell; x++)
                        mosaic.chw(ch, margin + r * cell + y, margin + c * cell + x) =
                            frame.chw(ch, y, x);
        }
    }
    for (int64_t c = 0; c < cols; c++)
        draw_text(mosaic, 2, margin + c * cell + 2,
                  "si=" + short_float(s_image_values[static_cast<size_t>(c)]));
    for (int64_t r = 0; r < rows; r++)
        draw_text(mosaic, margin + r * cell + 2, 1,
                  "sp=" + short_float(s_pose_values[static_cast<size_t>(r)]));
    return mosaic;
}

}  // namespace posediff
