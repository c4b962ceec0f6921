#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "posediff/config.hpp"
#include "posediff/image_io.hpp"
#include "posediff/inference.hpp"
#include "posediff/metrics.hpp"
#include "posediff/synthetic.hpp"
#include "posediff/training.hpp"

namespace fs = std::filesystem;
using namespace posediff;

namespace {

// ---------------------------------------------------------------------------
// config file merge: flag > file > built-in default
// ---------------------------------------------------------------------------

class ConfigMerge {
public:
    void load(const fs::path& path) { file_ = parse_config_file(path); }

    template <typename T>
    void bind(const std::string& key, CLI::Option* opt, T& var) {
        allowed_.insert(key);
        echo_fns_.push_back([key, &var](std::map<std::string, std::string>& echo) {
            std::ostringstream ss;
            ss << var;
            echo[key] = ss.str();
        });
        auto it = file_.find(key);
        if (it == file_.end() || (opt && opt->count() > 0)) return;
        std::istringstream ss(it->second);
        ss >> var;
        if (ss.fail()) fail(ErrorCode::ConfigError, "bad value for config key '" + key + "'");
    }

    void finish(const std::string& context) const { reject_unknown_keys(file_, allowed_, context); }

    std::map<std::string, std::string> echo() const {
        std::map<std::string, std::string> out;
        for (const auto& fn : echo_fns_) fn(out);
        return out;
    }

private:
    std::map<std::string, std::string> file_;
    std::set<std::string> allowed_;
    std::vector<std::function<void(std::map<std::string, std::string>&)>> echo_fns_;
};

void write_manifest(const fs::path& dir, const std::string& kind,
                    const std::map<std::string, std::string>& kv) {
    fs::create_directories(dir);
    std::ofstream os(dir / "manifest.txt", std::ios::trunc);
    if (!os) fail(ErrorCode::IoError, "cannot write manifest under " + dir.string());
    os << "posediff-" << kind << " v1\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
}

std::vector<float> parse_float_list(const std::string& csv) {
    std::vector<float> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        size_t pos = 0;
        float v = 0;
        try {
            v = std::stof(item, &pos);
        } catch (const std::exception&) {
            fail(ErrorCode::ConfigError, "non-numeric weight '" + item + "'");
        }
        if (pos != item.size()) fail(ErrorCode::ConfigError, "non-numeric weight '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) fail(ErrorCode::ConfigError, "empty weight list");
    return out;
}

EmbedderMode parse_embedder(const std::string& s) {
    if (s == "builtin") return EmbedderMode::Builtin;
    if (s == "external") return EmbedderMode::External;
    fail(ErrorCode::ConfigError, "embedder must be builtin|external");
}

SamplerKind parse_sampler(const std::string& s) {
    if (s == "pndm") return SamplerKind::Pndm;
    if (s == "ddim") return SamplerKind::Ddim;
    if (s == "ddpm") return SamplerKind::Ddpm;
    fail(ErrorCode::ConfigError, "sampler must be pndm|ddim|ddpm");
}

// Subject frames live in the dataset layout; the pose window comes from the
// sibling poses directory at the frame's index.
SubjectInput subject_from_frame_path(const fs::path& frame_path) {
    const fs::path poses_dir = frame_path.parent_path().parent_path() / "poses";
    if (!fs::is_directory(poses_dir))
        fail(ErrorCode::MissingPose, "no poses directory next to " + frame_path.string());
    const auto poses = load_pose_dir(poses_dir);
    if (poses.empty()) fail(ErrorCode::MissingPose, "empty poses directory " + poses_dir.string());
    int64_t index = 0;
    try {
        index = std::stoll(frame_path.stem().string());
    } catch (const std::exception&) {
        fail(ErrorCode::MissingPose, "frame name must be its index, got " + frame_path.string());
    }
    return SubjectInput{read_png(frame_path), build_pose_window(poses, index)};
}

std::vector<TensorBlob> load_frame_dir(const fs::path& dir) {
    std::vector<fs::path> paths;
    if (fs::is_directory(dir))
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".png") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    std::vector<TensorBlob> out;
    for (const auto& p : paths) out.push_back(read_png(p));
    return out;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

struct MakeSyntheticArgs {
    std::string out, config;
    SyntheticConfig syn;
    MakeSyntheticArgs() { syn.seed = env_seed_default(); }
};

int run_make_synthetic(CLI::App* cmd, MakeSyntheticArgs& a) {
    ConfigMerge merge;
    if (!a.config.empty()) merge.load(a.config);
    merge.bind("videos", cmd->get_option("--videos"), a.syn.videos);
    merge.bind("test_videos", cmd->get_option("--test-videos"), a.syn.test_videos);
    merge.bind("frames_per_video", cmd->get_option("--frames"), a.syn.frames_per_video);
    merge.bind("image_size", cmd->get_option("--size"), a.syn.image_size);
    merge.bind("seed", cmd->get_option("--seed"), a.syn.seed);
    merge.bind("sprite_palette_size", cmd->get_option("--palette"), a.syn.sprite_palette_size);
    merge.finish("make-synthetic");

    const auto summary = make_synthetic_dataset(a.syn, a.out);
    std::printf("wrote %d train + %d test videos x %d frames to %s\n", summary.train_videos,
                summary.test_videos, summary.frames_per_video, summary.root.string().c_str());
    return 0;
}

struct TrainArgs {
    std::string data, out, config, resume;
    std::string embedder = "builtin", adapter = "clipvae";
    ModelConfig model;
    AutoencoderConfig vae;
    TrainConfig base = TrainConfig::base_defaults();
    uint64_t seed = env_seed_default();
    int dropout = 1, augment = 0;
};

int run_train(CLI::App* cmd, TrainArgs& a) {
    ConfigMerge merge;
    if (!a.config.empty()) merge.load(a.config);
    merge.bind("image_size", cmd->get_option("--image-size"), a.model.image_size);
    merge.bind("unet_base", cmd->get_option("--unet-base"), a.model.unet_base);
    merge.bind("vae_base", cmd->get_option("--vae-base"), a.model.vae_base);
    merge.bind("d_ctx", cmd->get_option("--d-ctx"), a.model.d_ctx);
    merge.bind("d_emb", cmd->get_option("--d-emb"), a.model.d_emb);
    merge.bind("embed_patch", cmd->get_option("--embed-patch"), a.model.embed_patch);
    merge.bind("vae_patch", cmd->get_option("--vae-patch"), a.model.vae_patch);
    merge.bind("timesteps", cmd->get_option("--timesteps"), a.model.timesteps);
    merge.bind("pose_frames", cmd->get_option("--pose-frames"), a.model.pose_frames);
    merge.bind("adapter", cmd->get_option("--adapter"), a.adapter);
    merge.bind("vae_steps", cmd->get_option("--vae-steps"), a.vae.steps);
    merge.bind("vae_lr", cmd->get_option("--vae-lr"), a.vae.lr);
    merge.bind("vae_batch", cmd->get_option("--vae-batch"), a.vae.batch);
    merge.bind("kl_weight", cmd->get_option("--kl-weight"), a.vae.kl_weight);
    merge.bind("epochs", cmd->get_option("--epochs"), a.base.epochs);
    merge.bind("lr", cmd->get_option("--lr"), a.base.lr);
    merge.bind("micro_batch", cmd->get_option("--micro-batch"), a.base.micro_batch);
    merge.bind("grad_accum", cmd->get_option("--grad-accum"), a.base.grad_accum);
    merge.bind("dropout", cmd->get_option("--dropout"), a.dropout);
    merge.bind("augment", cmd->get_option("--augment"), a.augment);
    merge.bind("seed", cmd->get_option("--seed"), a.seed);
    merge.bind("embedder", cmd->get_option("--embedder"), a.embedder);
    merge.finish("train");

    if (a.adapter != "clipvae" && a.adapter != "clip_only")
        fail(ErrorCode::ConfigError, "adapter must be clipvae|clip_only");
    a.model.adapter_clip_only = a.adapter == "clip_only";
    a.base.dropout_enabled = a.dropout != 0;
    a.base.augment_enabled = a.augment != 0;
    a.base.seed = a.seed;
    a.base.embedder_mode = parse_embedder(a.embedder);
    a.vae.seed = a.seed;

    const Dataset train_set = Dataset::open(a.data, "train");

    ModelSetF model = ModelSetF::fresh(a.model, a.seed);
    TrainReport vae_report;
    if (a.resume.empty()) {
        vae_report = train_autoencoder(model, train_set, a.vae);
    } else {
        Checkpoint ckpt = load_checkpoint(a.resume);
        model = std::move(ckpt.model);
        auto it = ckpt.meta.find("step");
        a.base.start_step = it == ckpt.meta.end() ? 0 : std::stoll(it->second);
    }

    const TrainReport base_report = train_base(model, train_set, a.base);

    auto extra = merge.echo();
    extra["phase"] = "base";
    extra["step"] = std::to_string(base_report.final_step);
    save_checkpoint(model, a.out, extra);
    append_train_log(fs::path(a.out) / "train_log.csv", vae_report);
    append_train_log(fs::path(a.out) / "train_log.csv", base_report);
    std::printf("base checkpoint at %s (step %lld)\n", a.out.c_str(),
                static_cast<long long>(base_report.final_step));
    return 0;
}

struct FinetuneArgs {
    std::string base, out, config;
    std::vector<std::string> images;
    std::string embedder = "builtin";
    TrainConfig subject = TrainConfig::subject_defaults();
    DecoderFtConfig decoder;
    uint64_t seed = env_seed_default();
    int augment = 1, decoder_ft = 1;
};

int run_finetune(CLI::App* cmd, FinetuneArgs& a) {
    ConfigMerge merge;
    if (!a.config.empty()) merge.load(a.config);
    merge.bind("steps", cmd->get_option("--steps"), a.subject.steps);
    merge.bind("lr", cmd->get_option("--lr"), a.subject.lr);
    merge.bind("decoder_steps", cmd->get_option("--decoder-steps"), a.decoder.steps);
    merge.bind("decoder_lr", cmd->get_option("--decoder-lr"), a.decoder.lr);
    merge.bind("seed", cmd->get_option("--seed"), a.seed);
    merge.bind("augment", cmd->get_option("--augment"), a.augment);
    merge.bind("decoder_ft", cmd->get_option("--decoder-ft"), a.decoder_ft);
    merge.bind("embedder", cmd->get_option("--embedder"), a.embedder);
    merge.finish("finetune");

    if (!fs::exists(fs::path(a.base) / "manifest.txt"))
        fail(ErrorCode::CheckpointMissing, "no base checkpoint at " + a.base);
    Checkpoint ckpt = load_checkpoint(a.base);

    std::vector<SubjectInput> inputs;
    for (const auto& img : a.images) inputs.push_back(subject_from_frame_path(img));

    a.subject.seed = a.seed;
    a.subject.augment_enabled = a.augment != 0;
    a.subject.embedder_mode = parse_embedder(a.embedder);
    DecoderFtConfig dec = a.decoder;
    if (!a.decoder_ft) dec.steps = 0;

    const SubjectReport report = finetune_subject(ckpt.model, inputs, a.subject, dec);

    auto extra = merge.echo();
    extra["phase"] = "subject";
    extra["base_checkpoint"] = checkpoint_id(a.base);
    extra["step"] = std::to_string(report.unet.final_step);
    save_checkpoint(ckpt.model, a.out, extra);
    append_train_log(fs::path(a.out) / "train_log.csv", report.unet);
    append_train_log(fs::path(a.out) / "train_log.csv", report.decoder);
    std::printf("subject checkpoint at %s\n", a.out.c_str());
    return 0;
}

struct AnimateArgs {
    std::string ckpt, image, poses, driver, out, config;
    std::string sampler = "pndm", seed_policy = "derived", embedder = "builtin";
    float s_image = 3.0f, s_pose = 5.0f;
    int steps = 100, jobs = 1;
    uint64_t seed = env_seed_default();
};

int run_animate(CLI::App* cmd, AnimateArgs& a) {
    ConfigMerge merge;
    if (!a.config.empty()) merge.load(a.config);
    merge.bind("s_image", cmd->get_option("--s-image"), a.s_image);
    merge.bind("s_pose", cmd->get_option("--s-pose"), a.s_pose);
    merge.bind("steps", cmd->get_option("--steps"), a.steps);
    merge.bind("seed", cmd->get_option("--seed"), a.seed);
    merge.bind("jobs", cmd->get_option("--jobs"), a.jobs);
    merge.bind("sampler", cmd->get_option("--sampler"), a.sampler);
    merge.bind("seed_policy", cmd->get_option("--seed-policy"), a.seed_policy);
    merge.bind("embedder", cmd->get_option("--embedder"), a.embedder);
    merge.finish("animate");

    if (a.poses.empty() == a.driver.empty())
        fail(ErrorCode::ConfigError, "need exactly one of --poses or --driver");
    const fs::path pose_dir = a.poses.empty() ? fs::path(a.driver) / "poses" : fs::path(a.poses);
    const auto poses = load_pose_dir(pose_dir);
    if (poses.empty()) fail(ErrorCode::EmptyPoseSequence, "no poses under " + pose_dir.string());

    Checkpoint ckpt = load_checkpoint(a.ckpt);
    GenerateParams params;
    params.weights = {a.s_image, a.s_pose};
    params.steps = a.steps;
    params.seed = a.seed;
    params.jobs = a.jobs;
    params.sampler = parse_sampler(a.sampler);
    params.seed_policy =
        a.seed_policy == "fixed" ? SeedPolicy::FixedPerFrame : SeedPolicy::PerFrameDerived;
    params.embedder_mode = parse_embedder(a.embedder);
    if (params.embedder_mode == EmbedderMode::External)
        params.external_embedding = load_external_embedding(a.image, ckpt.model.cfg.n_tok(),
                                                            ckpt.model.cfg.d_emb)
                                        .tokens;
    if (params.weights.s_image < 0 || params.weights.s_pose < 0)
        std::fprintf(stderr, "note: negative guidance weight in use\n");

    const TensorBlob subject = read_png(a.image);
    const auto frames = generate_video(ckpt.model, subject, poses, params);

    fs::create_directories(a.out);
    for (size_t i = 0; i < frames.size(); i++) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        write_png(fs::path(a.out) / name, frames[i]);
    }
    auto extra = merge.echo();
    extra["checkpoint_id"] = checkpoint_id(a.ckpt);
    extra["frames"] = std::to_string(frames.size());
    extra["subject_image"] = a.image;
    write_manifest(a.out, "animate", extra);
    std::printf("wrote %zu frames to %s\n", frames.size(), a.out.c_str());
    return 0;
}

struct GridArgs {
    std::string ckpt, image, poses, out, config;
    std::string s_image = "1,3,5", s_pose = "1,5,9";
    int frame = 0, steps = 100;
    uint64_t seed = env_seed_default();
};

int run_grid(CLI::App* cmd, GridArgs& a) {
    ConfigMerge merge;
    if (!a.config.empty()) merge.load(a.config);
    merge.bind("s_image", cmd->get_option("--s-image"), a.s_image);
    merge.bind("s_pose", cmd->get_option("--s-pose"), a.s_pose);
    merge.bind("frame", cmd->get_option("--frame"), a.frame);
    merge.bind("steps", cmd->get_option("--steps"), a.steps);
    merge.bind("seed", cmd->get_option("--seed"), a.seed);
    merge.finish("grid");

    const auto poses = load_pose_dir(a.poses);
    if (poses.empty()) fail(ErrorCode::EmptyPoseSequence, "no poses under " + a.poses);
    Checkpoint ckpt = load_checkpoint(a.ckpt);

    GenerateParams params;
    params.steps = a.steps;
    params.seed = a.seed;
    const TensorBlob mosaic =
        guidance_grid(ckpt.model, read_png(a.image), build_pose_window(poses, a.frame),
                      parse_float_list(a.s_image), parse_float_list(a.s_pose), params);
    write_png(a.out, mosaic);
    std::printf("wrote guidance grid to %s\n", a.out.c_str());
    return 0;
}

struct EvaluateArgs {
    std::string generated, reference, out, config;
    bool ablation = false;
    std::string full, clip_only, no_vae_ft, one_pose, testset;
    AblationEvalParams params;
    EvaluateArgs() { params.seed = env_seed_default(); }
};

int run_evaluate(CLI::App* cmd, EvaluateArgs& a) {
    ConfigMerge merge;
    if (!a.config.empty()) merge.load(a.config);
    merge.bind("s_image", cmd->get_option("--s-image"), a.params.s_image);
    merge.bind("s_pose", cmd->get_option("--s-pose"), a.params.s_pose);
    merge.bind("steps", cmd->get_option("--steps"), a.params.steps);
    merge.bind("seed", cmd->get_option("--seed"), a.params.seed);
    merge.bind("frames_per_video", cmd->get_option("--frames-per-video"),
               a.params.frames_per_video);
    merge.bind("max_videos", cmd->get_option("--max-videos"), a.params.max_videos);
    merge.finish("evaluate");

    if (a.ablation) {
        if (a.testset.empty() || !fs::is_directory(fs::path(a.testset) / "test"))
            fail(ErrorCode::EmptyDataset, "ablation mode needs --testset with a test split");
        AblationCheckpoints ckpts{a.full, a.clip_only, a.no_vae_ft, a.one_pose};
        const AblationReport report = evaluate_ablations(ckpts, a.testset, a.params);
        const std::string text = format_ablation_report(report);
        if (!a.out.empty()) {
            std::ofstream os(a.out, std::ios::trunc);
            os << text;
        }
        std::fputs(text.c_str(), stdout);
        return report.l1_ordering_holds && report.jitter_ordering_holds ? 0 : 1;
    }

    const auto gen = load_frame_dir(a.generated);
    const auto ref = load_frame_dir(a.reference);
    if (gen.empty()) fail(ErrorCode::EmptyDataset, "no generated frames under " + a.generated);
    if (ref.size() < gen.size())
        fail(ErrorCode::EmptyDataset, "reference has fewer frames than generated");
    EvalReport report = evaluate_frames(gen, {ref.begin(), ref.begin() + gen.size()});
    report.config_echo = merge.echo();
    if (!a.out.empty()) write_report(a.out, report);
    std::fputs(format_report(report).c_str(), stdout);
    return 0;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"pose- and image-conditioned latent diffusion toolkit"};
    app.require_subcommand(1);

    MakeSyntheticArgs ms;
    auto* cmd_ms = app.add_subcommand("make-synthetic", "render a synthetic sprite dataset");
    cmd_ms->add_option("--out", ms.out, "output dataset root")->required();
    cmd_ms->add_option("--videos", ms.syn.videos, "training videos");
    cmd_ms->add_option("--test-videos", ms.syn.test_videos, "held-out videos");
    cmd_ms->add_option("--frames", ms.syn.frames_per_video, "frames per video");
    cmd_ms->add_option("--size", ms.syn.image_size, "square image size");
    cmd_ms->add_option("--seed", ms.syn.seed, "generator seed");
    cmd_ms->add_option("--palette", ms.syn.sprite_palette_size, "sprite palette size");
    cmd_ms->add_option("--config", ms.config, "key = value config file");

    TrainArgs tr;
    auto* cmd_tr = app.add_subcommand("train", "train the autoencoder, then the base model");
    cmd_tr->add_option("--data", tr.data, "dataset root")->required();
    cmd_tr->add_option("--out", tr.out, "checkpoint directory")->required();
    cmd_tr->add_option("--config", tr.config, "key = value config file");
    cmd_tr->add_option("--resume", tr.resume, "resume base training from a checkpoint");
    cmd_tr->add_option("--image-size", tr.model.image_size, "square image size");
    cmd_tr->add_option("--unet-base", tr.model.unet_base, "denoiser base width");
    cmd_tr->add_option("--vae-base", tr.model.vae_base, "autoencoder base width");
    cmd_tr->add_option("--d-ctx", tr.model.d_ctx, "cross-attention width");
    cmd_tr->add_option("--d-emb", tr.model.d_emb, "embedder token width");
    cmd_tr->add_option("--embed-patch", tr.model.embed_patch, "embedder patch size");
    cmd_tr->add_option("--vae-patch", tr.model.vae_patch, "latent token patch size");
    cmd_tr->add_option("--timesteps", tr.model.timesteps, "diffusion timesteps");
    cmd_tr->add_option("--pose-frames", tr.model.pose_frames, "poses concatenated per sample");
    cmd_tr->add_option("--adapter", tr.adapter, "clipvae|clip_only");
    cmd_tr->add_option("--vae-steps", tr.vae.steps, "autoencoder steps");
    cmd_tr->add_option("--vae-lr", tr.vae.lr, "autoencoder learning rate");
    cmd_tr->add_option("--vae-batch", tr.vae.batch, "autoencoder batch");
    cmd_tr->add_option("--kl-weight", tr.vae.kl_weight, "KL weight");
    cmd_tr->add_option("--epochs", tr.base.epochs, "base-phase epochs");
    cmd_tr->add_option("--lr", tr.base.lr, "base-phase learning rate");
    cmd_tr->add_option("--micro-batch", tr.base.micro_batch, "micro batch");
    cmd_tr->add_option("--grad-accum", tr.base.grad_accum, "gradient accumulation steps");
    cmd_tr->add_option("--dropout", tr.dropout, "conditioning dropout on/off");
    cmd_tr->add_option("--augment", tr.augment, "augmentation on/off");
    cmd_tr->add_option("--seed", tr.seed, "training seed");
    cmd_tr->add_option("--embedder", tr.embedder, "builtin|external");

    FinetuneArgs ft;
    auto* cmd_ft = app.add_subcommand("finetune", "subject-specific finetuning");
    cmd_ft->add_option("--base", ft.base, "base checkpoint")->required();
    cmd_ft->add_option("--image", ft.images, "subject frame path (repeatable)")->required();
    cmd_ft->add_option("--out", ft.out, "subject checkpoint directory")->required();
    cmd_ft->add_option("--config", ft.config, "key = value config file");
    cmd_ft->add_option("--steps", ft.subject.steps, "denoiser finetune steps");
    cmd_ft->add_option("--lr", ft.subject.lr, "denoiser finetune learning rate");
    cmd_ft->add_option("--decoder-steps", ft.decoder.steps, "decoder finetune steps");
    cmd_ft->add_option("--decoder-lr", ft.decoder.lr, "decoder finetune learning rate");
    cmd_ft->add_option("--seed", ft.seed, "finetune seed");
    cmd_ft->add_option("--augment", ft.augment, "augmentation on/off");
    cmd_ft->add_option("--decoder-ft", ft.decoder_ft, "decoder finetune on/off");
    cmd_ft->add_option("--embedder", ft.embedder, "builtin|external");

    AnimateArgs an;
    auto* cmd_an = app.add_subcommand("animate", "generate a video from a still image");
    cmd_an->add_option("--ckpt", an.ckpt, "subject checkpoint")->required();
    cmd_an->add_option("--image", an.image, "subject image")->required();
    cmd_an->add_option("--poses", an.poses, "driving pose directory (*.pdtb)");
    cmd_an->add_option("--driver", an.driver, "driving video directory (uses its poses/)");
    cmd_an->add_option("--out", an.out, "output frame directory")->required();
    cmd_an->add_option("--config", an.config, "key = value config file");
    cmd_an->add_option("--s-image", an.s_image, "image guidance weight");
    cmd_an->add_option("--s-pose", an.s_pose, "pose guidance weight");
    cmd_an->add_option("--steps", an.steps, "denoising steps");
    cmd_an->add_option("--seed", an.seed, "sampling seed");
    cmd_an->add_option("--jobs", an.jobs, "parallel frame jobs");
    cmd_an->add_option("--sampler", an.sampler, "pndm|ddim|ddpm");
    cmd_an->add_option("--seed-policy", an.seed_policy, "derived|fixed");
    cmd_an->add_option("--embedder", an.embedder, "builtin|external");

    GridArgs gr;
    auto* cmd_gr = app.add_subcommand("grid", "guidance-weight sweep mosaic");
    cmd_gr->add_option("--ckpt", gr.ckpt, "subject checkpoint")->required();
    cmd_gr->add_option("--image", gr.image, "subject image")->required();
    cmd_gr->add_option("--poses", gr.poses, "pose directory")->required();
    cmd_gr->add_option("--out", gr.out, "output PNG")->required();
    cmd_gr->add_option("--config", gr.config, "key = value config file");
    cmd_gr->add_option("--frame", gr.frame, "pose index for the window");
    cmd_gr->add_option("--s-image", gr.s_image, "comma list of image weights");
    cmd_gr->add_option("--s-pose", gr.s_pose, "comma list of pose weights");
    cmd_gr->add_option("--steps", gr.steps, "denoising steps");
    cmd_gr->add_option("--seed", gr.seed, "sampling seed");

    EvaluateArgs ev;
    auto* cmd_ev = app.add_subcommand("evaluate", "metric report / ablation orderings");
    cmd_ev->add_option("--generated", ev.generated, "generated frame directory");
    cmd_ev->add_option("--reference", ev.reference, "reference frame directory");
    cmd_ev->add_option("--out", ev.out, "report file");
    cmd_ev->add_option("--config", ev.config, "key = value config file");
    cmd_ev->add_flag("--ablation", ev.ablation, "run the four-variant comparison");
    cmd_ev->add_option("--full", ev.full, "full-model checkpoint");
    cmd_ev->add_option("--clip-only", ev.clip_only, "clip-only checkpoint");
    cmd_ev->add_option("--no-vae-ft", ev.no_vae_ft, "no-decoder-finetune checkpoint");
    cmd_ev->add_option("--one-pose", ev.one_pose, "single-pose checkpoint");
    cmd_ev->add_option("--testset", ev.testset, "dataset root with a test split");
    cmd_ev->add_option("--s-image", ev.params.s_image, "image guidance weight");
    cmd_ev->add_option("--s-pose", ev.params.s_pose, "pose guidance weight");
    cmd_ev->add_option("--steps", ev.params.steps, "denoising steps");
    cmd_ev->add_option("--seed", ev.params.seed, "sampling seed");
    cmd_ev->add_option("--frames-per-video", ev.params.frames_per_video, "held-out frames per video");
    cmd_ev->add_option("--max-videos", ev.params.max_videos, "test videos evaluated");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (cmd_ms->parsed()) return run_make_synthetic(cmd_ms, ms);
    if (cmd_tr->parsed()) return run_train(cmd_tr, tr);
    if (cmd_ft->parsed()) return run_finetune(cmd_ft, ft);
    if (cmd_an->parsed()) return run_animate(cmd_an, an);
    if (cmd_gr->parsed()) return run_grid(cmd_gr, gr);
    if (cmd_ev->parsed()) return run_evaluate(cmd_ev, ev);
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        if (e.code() == ErrorCode::Divergence || e.code() == ErrorCode::NonFinite) {
            std::fprintf(stderr, "diverged\n");
            return 3;
        }
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
