#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "posediff/tensor_blob.hpp"

namespace posediff {

// Procedural stand-in for a fashion-video corpus: articulated colored sprites
// moving along smooth trajectories, with pose maps rendered from the same
// geometry so image and pose are aligned by construction.
struct SyntheticConfig {
    int videos = 16;
    int test_videos = 4;
    int frames_per_video = 32;
    int image_size = 64;
    uint64_t seed = 0;
    int sprite_palette_size = 12;
};

struct SyntheticSummary {
    std::filesystem::path root;
    int train_videos = 0;
    int test_videos = 0;
    int frames_per_video = 0;
};

// Background luminance shared by every synthetic frame.
constexpr float kSyntheticBackground = 0.10f;

SyntheticSummary make_synthetic_dataset(const SyntheticConfig& config,
                                        const std::filesystem::path& out_dir);

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// Centroid of a pose channel (mass-weighted).
Point pose_centroid(const TensorBlob& pose, int64_t channel = 0);

// Centroid of the region where an image departs from the synthetic
// background. Used to locate the sprite in rendered and generated frames.
Point sprite_centroid(const TensorBlob& image, float background = kSyntheticBackground,
                      float threshold = 0.08f);

}  // namespace posediff
