#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "posediff/rng.hpp"
#include "posediff/tensor_blob.hpp"

namespace posediff {

// A pose frame: [2, H, W] with values in [0,1]. Channel content is opaque to
// the pipeline; the synthetic generator writes (part mask, part index).
struct PoseMap {
    TensorBlob blob;

    void validate() const;
};

constexpr int kPoseWindowSize = 5;

// Five consecutive pose maps centered on the target frame. Out-of-range
// neighbors are clamped to the nearest valid frame, so the window always has
// exactly five entries.
struct PoseWindow {
    std::vector<PoseMap> frames;  // always kPoseWindowSize
    int64_t center_index = 0;
};

struct SampleRecord {
    TensorBlob input_image;   // [3,H,W] in [0,1]
    TensorBlob target_frame;  // [3,H,W]
    PoseWindow pose_window;   // window of the target frame
    std::string video_id;
    int64_t frame_index = 0;
};

PoseWindow build_pose_window(const std::vector<PoseMap>& poses, int64_t target_index);

struct VideoRef {
    std::string id;
    std::vector<std::filesystem::path> frame_paths;  // sorted
    std::vector<std::filesystem::path> pose_paths;   // sorted, 1:1 with frames
};

class Dataset {
public:
    // Scans `<root>/<split>/<video_id>/{frames,poses}`.
    static Dataset open(const std::filesystem::path& root, const std::string& split);

    const std::vector<VideoRef>& videos() const { return videos_; }
    const std::filesystem::path& root() const { return root_; }
    const std::string& split() const { return split_; }

    TensorBlob load_frame(size_t video, size_t frame) const;
    std::vector<PoseMap> load_poses(size_t video) const;
    PoseMap load_pose(size_t video, size_t frame) const;

private:
    std::filesystem::path root_;
    std::string split_;
    std::vector<VideoRef> videos_;
};

// Uniform over videos, then uniform (with replacement) over frames for input
// and target independently. Deterministic given the generator state.
SampleRecord sample_training_pair(const Dataset& dataset, Rng& rng);

// Pose maps stored alongside frames, `poses/%06d.pdtb`.
std::vector<PoseMap> load_pose_dir(const std::filesystem::path& dir);

}  // namespace posediff
