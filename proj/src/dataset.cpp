#include "posediff/dataset.hpp"

#include <algorithm>

#include "posediff/image_io.hpp"

namespace fs = std::filesystem;

namespace posediff {

void PoseMap::validate() const {
    if (blob.shape.size() != 3 || blob.shape[0] != 2)
        fail(ErrorCode::BadShape, "pose map must be [2,H,W], got " + shape_to_string(blob.shape));
    for (float v : blob.f32)
        if (v < 0.0f || v > 1.0f) fail(ErrorCode::BadShape, "pose values must lie in [0,1]");
}

PoseWindow build_pose_window(const std::vector<PoseMap>& poses, int64_t target_index) {
    const int64_t n = static_cast<int64_t>(poses.size());
    if (n < 1) fail(ErrorCode::EmptyDataset, "no poses to window");
    if (target_index < 0 || target_index >= n)
        fail(ErrorCode::IndexOutOfRange,
             "pose index " + std::to_string(target_index) + " outside [0," + std::to_string(n) + ")");

    PoseWindow window;
    window.center_index = target_index;
    window.frames.reserve(kPoseWindowSize);
    const int64_t radius = kPoseWindowSize / 2;
    for (int64_t off = -radius; off <= radius; off++) {
        const int64_t i = std::clamp<int64_t>(target_index + off, 0, n - 1);
        window.frames.push_back(poses[static_cast<size_t>(i)]);
        if (poses[static_cast<size_t>(i)].blob.shape != window.frames.front().blob.shape)
            fail(ErrorCode::ShapeMismatch, "pose frames in one video must share a shape");
    }
    return window;
}

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& ext) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

Dataset Dataset::open(const fs::path& root, const std::string& split) {
    Dataset ds;
    ds.root_ = root;
    ds.split_ = split;
    const fs::path split_dir = root / split;
    if (!fs::is_directory(split_dir))
        fail(ErrorCode::EmptyDataset, "missing split directory " + split_dir.string());

    std::vector<fs::path> video_dirs;
    for (const auto& e : fs::directory_iterator(split_dir))
        if (e.is_directory()) video_dirs.push_back(e.path());
    std::sort(video_dirs.begin(), video_dirs.end());

    for (const auto& vd : video_dirs) {
        VideoRef v;
        v.id = vd.filename().string();
        v.frame_paths = sorted_files(vd / "frames", ".png");
        v.pose_paths = sorted_files(vd / "poses", ".pdtb");
        if (v.frame_paths.empty()) continue;
        if (v.pose_paths.size() != v.frame_paths.size())
            fail(ErrorCode::MissingPose, "video " + v.id + " has " + std::to_string(v.frame_paths.size()) +
                                             " frames but " + std::to_string(v.pose_paths.size()) + " poses");
        ds.videos_.push_back(std::move(v));
    }
    if (ds.videos_.empty()) fail(ErrorCode::EmptyDataset, "no videos under " + split_dir.string());
    return ds;
}

TensorBlob Dataset::load_frame(size_t video, size_t frame) const {
    return read_png(videos_.at(video).frame_paths.at(frame));
}

PoseMap Dataset::load_pose(size_t video, size_t frame) const {
    PoseMap p{read_blob(videos_.at(video).pose_paths.at(frame))};
    p.validate();
    return p;
}

std::vector<PoseMap> Dataset::load_poses(size_t video) const {
    std::vector<PoseMap> out;
    out.reserve(videos_.at(video).pose_paths.size());
    for (size_t i = 0; i < videos_.at(video).pose_paths.size(); i++) out.push_back(load_pose(video, i));
    return out;
}

SampleRecord sample_training_pair(const Dataset& dataset, Rng& rng) {
    if (dataset.videos().empty()) fail(ErrorCode::EmptyDataset, "dataset has no videos");
    const size_t vi = static_cast<size_t>(rng.integer(dataset.videos().size()));
    const VideoRef& video = dataset.videos()[vi];
    const size_t n = video.frame_paths.size();
    if (n == 0) fail(ErrorCode::EmptyDataset, "video " + video.id + " has no frames");
    const size_t input_idx = static_cast<size_t>(rng.integer(n));
    const size_t target_idx = static_cast<size_t>(rng.integer(n));

    SampleRecord rec;
    rec.video_id = video.id;
    rec.frame_index = static_cast<int64_t>(target_idx);
    rec.input_image = dataset.load_frame(vi, input_idx);
    rec.target_frame = dataset.load_frame(vi, target_idx);
    rec.pose_window = build_pose_window(dataset.load_poses(vi), static_cast<int64_t>(target_idx));
    return rec;
}

std::vector<PoseMap> load_pose_dir(const fs::path& dir) {
    std::vector<PoseMap> out;
    for (const auto& p : sorted_files(dir, ".pdtb")) {
        PoseMap m{read_blob(p)};
        m.validate();
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace posediff
