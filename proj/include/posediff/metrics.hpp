#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "posediff/tensor_blob.hpp"

namespace posediff {

float l1(const TensorBlob& a, const TensorBlob& b);

// Mean local SSIM with an 11-tap Gaussian window (sigma 1.5) and the standard
// constants for unit dynamic range: C1 = 0.01^2, C2 = 0.03^2.
float ssim(const TensorBlob& a, const TensorBlob& b);

// +inf sentinel for identical inputs.
float psnr(const TensorBlob& a, const TensorBlob& b);

// Mean L1 between consecutive frames; the flicker proxy.
float temporal_jitter(const std::vector<TensorBlob>& frames);

// Evaluation-mode moving average over consecutive frames.
std::vector<TensorBlob> temporal_smooth(const std::vector<TensorBlob>& frames, int radius = 1);

// Hook for plug-in learned metrics; none ship with the library.
using PerceptualMetric = std::function<float(const TensorBlob&, const TensorBlob&)>;

struct FrameScore {
    int64_t frame_index = 0;
    double l1 = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
};

struct EvalReport {
    std::vector<FrameScore> per_frame;
    double mean_l1 = 0.0;
    double mean_ssim = 0.0;
    double mean_psnr = 0.0;
    double temporal_jitter = 0.0;
    std::map<std::string, std::string> config_echo;

    void finalize();  // aggregates = exact means of per_frame rows
};

EvalReport evaluate_frames(const std::vector<TensorBlob>& generated,
                           const std::vector<TensorBlob>& reference);

std::string format_report(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);

// --- ablation harness -------------------------------------------------------

struct AblationVariantResult {
    std::string name;
    double mean_l1 = 0.0;
    double mean_ssim = 0.0;
    double jitter = 0.0;
};

struct AblationReport {
    std::vector<AblationVariantResult> variants;
    bool l1_ordering_holds = false;      // full <= clip_only
    bool jitter_ordering_holds = false;  // one_pose >= full
};

struct AblationCheckpoints {
    std::filesystem::path full;
    std::filesystem::path clip_only;
    std::filesystem::path no_vae_ft;
    std::filesystem::path one_pose;
};

struct AblationEvalParams {
    float s_image = 3.0f;
    float s_pose = 5.0f;
    int steps = 40;
    uint64_t seed = 0;
    int frames_per_video = 6;  // held-out frames evaluated per test video
    int max_videos = 4;
    int jobs = 1;
};

// Generates held-out frames with each variant checkpoint on the same test set
// and reports the metric orderings. Held-out frames start at least a quarter
// of the video away from the conditioning frame.
AblationReport evaluate_ablations(const AblationCheckpoints& checkpoints,
                                  const std::filesystem::path& dataset_root,
                                  const AblationEvalParams& params);

std::string format_ablation_report(const AblationReport& report);

}  // namespace posediff
