#include "posediff/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "posediff/dataset.hpp"
#include "posediff/inference.hpp"

namespace posediff {

float l1(const TensorBlob& a, const TensorBlob& b) {
    if (!a.same_shape(b))
        fail(ErrorCode::ShapeMismatch,
             "l1: " + shape_to_string(a.shape) + " vs " + shape_to_string(b.shape));
    double acc = 0.0;
    for (size_t i = 0; i < a.f32.size(); i++) acc += std::fabs(a.f32[i] - b.f32[i]);
    return static_cast<float>(acc / static_cast<double>(a.f32.size()));
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kSsimWindow);
    const int half = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; i++) {
        const double d = i - half;
        k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// separable valid-mode Gaussian filter of one channel plane
std::vector<double> blur(const std::vector<double>& img, int64_t h, int64_t w,
                         const std::vector<double>& k, int64_t& oh, int64_t& ow) {
    const int64_t half = kSsimWindow / 2;
    oh = h - 2 * half;
    ow = w - 2 * half;
    std::vector<double> tmp(static_cast<size_t>(h * ow));
    for (int64_t y = 0; y < h; y++)
        for (int64_t x = 0; x < ow; x++) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; i++) acc += k[i] * img[y * w + x + i];
            tmp[y * ow + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; y++)
        for (int64_t x = 0; x < ow; x++) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; i++) acc += k[i] * tmp[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

}  // namespace

float ssim(const TensorBlob& a, const TensorBlob& b) {
    if (!a.same_shape(b)) fail(ErrorCode::ShapeMismatch, "ssim inputs must share a shape");
    if (a.shape.size() != 3) fail(ErrorCode::BadShape, "ssim expects [C,H,W]");
    const int64_t c = a.shape[0], h = a.shape[1], w = a.shape[2];
    if (h < kSsimWindow || w < kSsimWindow)
        fail(ErrorCode::TooSmall, "ssim needs spatial dims >= " + std::to_string(kSsimWindow));

    const std::vector<double> k = gaussian_kernel();
    double total = 0.0;
    int64_t count = 0;
    for (int64_t ch = 0; ch < c; ch++) {
        std::vector<double> xa(static_cast<size_t>(h * w)), xb(static_cast<size_t>(h * w));
        std::vector<double> xaa(xa.size()), xbb(xa.size()), xab(xa.size());
        for (int64_t i = 0; i < h * w; i++) {
            const double va = a.f32[static_cast<size_t>(ch * h * w + i)];
            const double vb = b.f32[static_cast<size_t>(ch * h * w + i)];
            xa[i] = va;
            xb[i] = vb;
            xaa[i] = va * va;
            xbb[i] = vb * vb;
            xab[i] = va * vb;
        }
        int64_t oh = 0, ow = 0;
        const auto mu_a = blur(xa, h, w, k, oh, ow);
        const auto mu_b = blur(xb, h, w, k, oh, ow);
        const auto m_aa = blur(xaa, h, w, k, oh, ow);
        const auto m_bb = blur(xbb, h, w, k, oh, ow);
        const auto m_ab = blur(xab, h, w, k, oh, ow);
        for (int64_t i = 0; i < oh * ow; i++) {
            const double va = m_aa[i] - mu_a[i] * mu_a[i];
            const double vb = m_bb[i] - mu_b[i] * mu_b[i];
            const double cov = m_ab[i] - mu_a[i] * mu_b[i];
            const double num = (2 * mu_a[i] * mu_b[i] + kSsimC1) * (2 * cov + kSsimC2);
            const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kSsimC1) * (va + vb + kSsimC2);
            total += num / den;
            count++;
        }
    }
    return static_cast<float>(total / count);
}

float psnr(const TensorBlob& a, const TensorBlob& b) {
    if (!a.same_shape(b)) fail(ErrorCode::ShapeMismatch, "psnr inputs must share a shape");
    double mse = 0.0;
    for (size_t i = 0; i < a.f32.size(); i++) {
        const double d = a.f32[i] - b.f32[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.f32.size());
    if (mse == 0.0) return std::numeric_limits<float>::infinity();
    return static_cast<float>(10.0 * std::log10(1.0 / mse));
}

float temporal_jitter(const std::vector<TensorBlob>& frames) {
    if (frames.size() < 2) return 0.0f;
    double acc = 0.0;
    for (size_t i = 0; i + 1 < frames.size(); i++) acc += l1(frames[i + 1], frames[i]);
    return static_cast<float>(acc / static_cast<double>(frames.size() - 1));
}

std::vector<TensorBlob> temporal_smooth(const std::vector<TensorBlob>& frames, int radius) {
    std::vector<TensorBlob> out;
    for (size_t i = 0; i < frames.size(); i++) {
        TensorBlob acc = TensorBlob::zeros(frames[i].shape);
        int n = 0;
        for (int64_t j = static_cast<int64_t>(i) - radius; j <= static_cast<int64_t>(i) + radius;
             j++) {
            if (j < 0 || j >= static_cast<int64_t>(frames.size())) continue;
            for (size_t k = 0; k < acc.f32.size(); k++) acc.f32[k] += frames[static_cast<size_t>(j)].f32[k];
            n++;
        }
        for (float& v : acc.f32) v /= static_cast<float>(n);
        out.push_back(std::move(acc));
    }
    return out;
}

void EvalReport::finalize() {
    mean_l1 = mean_ssim = mean_psnr = 0.0;
    if (per_frame.empty()) return;
    for (const auto& f : per_frame) {
        mean_l1 += f.l1;
        mean_ssim += f.ssim;
        mean_psnr += f.psnr;
    }
    mean_l1 /= static_cast<double>(per_frame.size());
    mean_ssim /= static_cast<double>(per_frame.size());
    mean_psnr /= static_cast<double>(per_frame.size());
}

EvalReport evaluate_frames(const std::vector<TensorBlob>& generated,
                           const std::vector<TensorBlob>& reference) {
    if (generated.size() != reference.size() || generated.empty())
        fail(ErrorCode::ShapeMismatch, "generated/reference frame counts differ or are zero");
    EvalReport report;
    for (size_t i = 0; i < generated.size(); i++)
        report.per_frame.push_back({static_cast<int64_t>(i), l1(generated[i], reference[i]),
                                    ssim(generated[i], reference[i]),
                                    psnr(generated[i], reference[i])});
    report.temporal_jitter = temporal_jitter(generated);
    report.finalize();
    return report;
}

std::string format_report(const EvalReport& report) {
    std::ostringstream os;
    os.precision(8);
    os << "posediff-eval v1\n";
    for (const auto& [k, v] : report.config_echo) os << "config " << k << " = " << v << "\n";
    for (const auto& f : report.per_frame)
        os << "frame " << f.frame_index << " l1 " << f.l1 << " ssim " << f.ssim << " psnr "
           << f.psnr << "\n";
    os << "aggregate l1 " << report.mean_l1 << " ssim " << report.mean_ssim << " psnr "
       << report.mean_psnr << " temporal_jitter " << report.temporal_jitter << "\n";
    return os.str();
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) fail(ErrorCode::IoError, "cannot write report " + path.string());
    os << format_report(report);
}

namespace {

struct VariantEval {
    double l1_sum = 0.0;
    double ssim_sum = 0.0;
    double jitter_sum = 0.0;
    int64_t frame_count = 0;
    int64_t video_count = 0;
};

AblationVariantResult eval_variant(const std::string& name, const std::filesystem::path& ckpt,
                                   const std::filesystem::path& dataset_root,
                                   const AblationEvalParams& params) {
    if (!std::filesystem::exists(ckpt / "manifest.txt"))
        fail(ErrorCode::MissingCheckpoint, "variant " + name + " missing at " + ckpt.string());
    Checkpoint loaded = load_checkpoint(ckpt);
    Dataset test = Dataset::open(dataset_root, "test");

    VariantEval ev;
    const size_t videos = std::min<size_t>(test.videos().size(), params.max_videos);
    for (size_t v = 0; v < videos; v++) {
        const auto poses = test.load_poses(v);
        const int64_t n = static_cast<int64_t>(poses.size());
        // conditioning frame 0; held-out frames at least a quarter of the
        // video away from it
        const TensorBlob subject = test.load_frame(v, 0);
        const int64_t first = std::min<int64_t>(n - 1, std::max<int64_t>(1, n / 4));
        std::vector<int64_t> eval_indices;
        for (int64_t i = first; i < n && eval_indices.size() < static_cast<size_t>(params.frames_per_video); i++)
            eval_indices.push_back(i);

        std::vector<PoseMap> window_source = poses;
        std::vector<TensorBlob> gen, ref;
        GenerateParams gp;
        gp.weights = {params.s_image, params.s_pose};
        gp.steps = params.steps;
        gp.jobs = params.jobs;
        for (int64_t idx : eval_indices) {
            gp.seed = mix_seed(params.seed, static_cast<uint64_t>(v * 1000 + idx));
            gen.push_back(generate_frame(loaded.model, subject,
                                         build_pose_window(window_source, idx), gp));
            ref.push_back(test.load_frame(v, static_cast<size_t>(idx)));
        }
        for (size_t i = 0; i < gen.size(); i++) {
            ev.l1_sum += l1(gen[i], ref[i]);
            ev.ssim_sum += ssim(gen[i], ref[i]);
            ev.frame_count++;
        }
        ev.jitter_sum += temporal_jitter(gen);
        ev.video_count++;
    }

    AblationVariantResult out;
    out.name = name;
    out.mean_l1 = ev.l1_sum / std::max<int64_t>(1, ev.frame_count);
    out.mean_ssim = ev.ssim_sum / std::max<int64_t>(1, ev.frame_count);
    out.jitter = ev.jitter_sum / std::max<int64_t>(1, ev.video_count);
    return out;
}

}  // namespace

AblationReport evaluate_ablations(const AblationCheckpoints& checkpoints,
                                  const std::filesystem::path& dataset_root,
                                  const AblationEvalParams& params) {
    AblationReport report;
    report.variants.push_back(eval_variant("full", checkpoints.full, dataset_root, params));
    report.variants.push_back(
        eval_variant("clip_only", checkpoints.clip_only, dataset_root, params));
    report.variants.push_back(
        eval_variant("no_vae_ft", checkpoints.no_vae_ft, dataset_root, params));
    report.variants.push_back(eval_variant("one_pose", checkpoints.one_pose, dataset_root, params));

    const auto& full = report.variants[0];
    const auto& clip_only = report.variants[1];
    const auto& one_pose = report.variants[3];
    report.l1_ordering_holds = full.mean_l1 <= clip_only.mean_l1;
    report.jitter_ordering_holds = one_pose.jitter >= full.jitter;
    return report;
}

std::string format_ablation_report(const AblationReport& report) {
    std::ostringstream os;
    os.precision(8);
    os << "posediff-ablation v1\n";
    for (const auto& v : report.variants)
        os << "variant " << v.name << " l1 " << v.mean_l1 << " ssim " << v.mean_ssim << " jitter "
           << v.jitter << "\n";
    os << "ordering l1_full_le_clip_only " << (report.l1_ordering_holds ? 1 : 0) << "\n";
    os << "ordering jitter_one_pose_ge_full " << (report.jitter_ordering_holds ? 1 : 0) << "\n";
    return os.str();
}

}  // namespace posediff
