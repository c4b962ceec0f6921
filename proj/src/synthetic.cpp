#include "posediff/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "posediff/image_io.hpp"
#include "posediff/rng.hpp"

namespace fs = std::filesystem;

namespace posediff {

namespace {

struct Rgb {
    float r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = std::fmod(h / 60.0, 6.0);
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) {
        r = c, g = x;
    } else if (hp < 2) {
        r = x, g = c;
    } else if (hp < 3) {
        g = c, b = x;
    } else if (hp < 4) {
        g = x, b = c;
    } else if (hp < 5) {
        r = x, b = c;
    } else {
        r = c, b = x;
    }
    const double m = v - c;
    return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

// Per-video appearance and motion parameters, all drawn from one fork of the
// master seed so datasets are reproducible bit-for-bit. Torso appearance is a
// 2x2 color panel overlaid with a smooth sinusoid field anchored to the body,
// so garment detail moves with the sprite and differs per subject.
struct Subject {
    Rgb head, arm;
    Rgb panel[9];
    double tex_wl_u, tex_wl_v, tex_phase, tex_amp;  // wavelengths in pixels
    Rgb tex_dir;
    double amp_x, amp_y;
    double freq_x, freq_y;
    double phase_x, phase_y;
    double arm_amp, arm_freq, arm_phase;
};

Subject make_subject(Rng& appearance_rng, Rng& motion_rng, int palette_size) {
    auto pick = [&](double v_lo, double v_hi) {
        const int slot =
            static_cast<int>(appearance_rng.integer(static_cast<uint64_t>(palette_size)));
        const double hue = 360.0 * slot / palette_size;
        const double v = v_lo + (v_hi - v_lo) * appearance_rng.uniform();
        return hsv_to_rgb(hue, 0.75, v);
    };
    Subject s;
    s.head = pick(0.55, 0.95);
    s.arm = pick(0.45, 0.95);
    for (Rgb& p : s.panel) p = pick(0.45, 0.95);
    // texture wavelengths sized to stay resolvable through the latent grid
    s.tex_wl_u = 7.0 + 5.0 * appearance_rng.uniform();
    s.tex_wl_v = 7.0 + 5.0 * appearance_rng.uniform();
    s.tex_phase = 2.0 * M_PI * appearance_rng.uniform();
    s.tex_amp = 0.12 + 0.10 * appearance_rng.uniform();
    s.tex_dir = hsv_to_rgb(360.0 * appearance_rng.uniform(), 0.9, 1.0);
    s.amp_x = 0.125 + 0.06 * motion_rng.uniform();
    s.amp_y = 0.10 + 0.05 * motion_rng.uniform();
    s.freq_x = 1.0 + motion_rng.integer(2);
    s.freq_y = 1.0 + motion_rng.integer(2);
    s.phase_x = 2.0 * M_PI * motion_rng.uniform();
    s.phase_y = 2.0 * M_PI * motion_rng.uniform();
    s.arm_amp = 0.5 + 0.4 * motion_rng.uniform();
    s.arm_freq = 2.0 + motion_rng.integer(2);
    s.arm_phase = 2.0 * M_PI * motion_rng.uniform();
    return s;
}

float clamp_color(double v) { return static_cast<float>(std::min(0.95, std::max(0.25, v))); }

// body-anchored torso color: quadrant panel plus the sinusoid field
Rgb torso_color(const Subject& s, double px, double py, double cx, double cy, double size) {
    const double u = px - cx, v = py - cy;  // body-anchored pixels
    const double hw = 0.115 * size, hh = 0.155 * size;
    const int qx = std::min(2, std::max(0, static_cast<int>((u + hw) / (2 * hw) * 3)));
    const int qy = std::min(2, std::max(0, static_cast<int>((v + hh) / (2 * hh) * 3)));
    const Rgb base = s.panel[qy * 3 + qx];
    const double wave = std::sin(2.0 * M_PI * (u / s.tex_wl_u + v / s.tex_wl_v) + s.tex_phase);
    const double a = s.tex_amp * wave;
    return Rgb{clamp_color(base.r + a * s.tex_dir.r), clamp_color(base.g + a * s.tex_dir.g),
               clamp_color(base.b + a * s.tex_dir.b)};
}

// Hard-edged part classifier. 0 = background, 1 = head, 2 = left arm,
// 3 = right arm, 4 = torso.
int classify_pixel(double px, double py, double cx, double cy, double s, double arm_angle) {
    const double torso_hw = 0.115 * s, torso_hh = 0.155 * s;
    const double head_r = 0.075 * s;
    const double head_cy = cy - torso_hh - head_r - 0.01 * s;
    const double arm_len = 0.16 * s, arm_th = 0.03 * s;
    const double shoulder_y = cy - torso_hh * 0.55;

    const double dxh = px - cx, dyh = py - head_cy;
    if (dxh * dxh + dyh * dyh <= head_r * head_r) return 1;

    for (int side = 0; side < 2; side++) {
        const double sx = cx + (side == 0 ? -torso_hw : torso_hw);
        const double ang = (side == 0 ? M_PI + arm_angle : -arm_angle);  // swings outward
        // rotate into arm frame: arm extends along +u from the shoulder
        const double ux = std::cos(M_PI / 2 + ang), uy = std::sin(M_PI / 2 + ang);
        const double vx = -uy, vy = ux;
        const double dx = px - sx, dy = py - shoulder_y;
        const double u = dx * ux + dy * uy;
        const double v = dx * vx + dy * vy;
        if (u >= 0 && u <= arm_len && std::fabs(v) <= arm_th) return side == 0 ? 2 : 3;
    }

    if (std::fabs(px - cx) <= torso_hw && std::fabs(py - cy) <= torso_hh) return 4;
    return 0;
}

// Appearance cannot be inferred from the trajectory: videos share a small
// pool of motion patterns.
constexpr int kMotionPool = 4;

}  // namespace

SyntheticSummary make_synthetic_dataset(const SyntheticConfig& config, const fs::path& out_dir) {
    if (config.videos < 1 || config.frames_per_video < 1 || config.image_size < 16 ||
        config.sprite_palette_size < 1)
        fail(ErrorCode::ConfigError, "synthetic config out of range");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir.string());

    const int s = config.image_size;
    auto render_split = [&](const std::string& split, int count, uint64_t salt) {
        for (int vi = 0; vi < count; vi++) {
            Rng appearance_rng(mix_seed(config.seed, salt + static_cast<uint64_t>(vi)));
            Rng motion_rng(
                mix_seed(config.seed, 0xa0a0 + static_cast<uint64_t>(vi % kMotionPool)));
            const Subject subj =
                make_subject(appearance_rng, motion_rng, config.sprite_palette_size);

            char vid[32];
            std::snprintf(vid, sizeof(vid), "video_%04d", vi);
            const fs::path frames_dir = out_dir / split / vid / "frames";
            const fs::path poses_dir = out_dir / split / vid / "poses";
            fs::create_directories(frames_dir);
            fs::create_directories(poses_dir);

            for (int fi = 0; fi < config.frames_per_video; fi++) {
                const double t = static_cast<double>(fi) / config.frames_per_video;
                const double cx = s * (0.5 + subj.amp_x * std::sin(2 * M_PI * subj.freq_x * t + subj.phase_x));
                const double cy = s * (0.54 + subj.amp_y * std::sin(2 * M_PI * subj.freq_y * t + subj.phase_y));
                const double arm_angle =
                    subj.arm_amp * std::sin(2 * M_PI * subj.arm_freq * t + subj.arm_phase);

                TensorBlob frame = TensorBlob::full({3, s, s}, kSyntheticBackground);
                TensorBlob pose = TensorBlob::zeros({2, s, s});
                for (int y = 0; y < s; y++) {
                    for (int x = 0; x < s; x++) {
                        const int part =
                            classify_pixel(x + 0.5, y + 0.5, cx, cy, static_cast<double>(s), arm_angle);
                        if (part == 0) continue;
                        Rgb color{};
                        switch (part) {
                            case 1: color = subj.head; break;
                            case 2:
                            case 3: color = subj.arm; break;
                            default:
                                color = torso_color(subj, x + 0.5, y + 0.5, cx, cy,
                                                    static_cast<double>(s));
                        }
                        frame.chw(0, y, x) = color.r;
                        frame.chw(1, y, x) = color.g;
                        frame.chw(2, y, x) = color.b;
                        pose.chw(0, y, x) = 1.0f;
                        pose.chw(1, y, x) = static_cast<float>(part) / 4.0f;
                    }
                }

                char name[32];
                std::snprintf(name, sizeof(name), "%06d", fi);
                write_png(frames_dir / (std::string(name) + ".png"), frame);
                write_blob(poses_dir / (std::string(name) + ".pdtb"), pose);
            }
        }
    };

    render_split("train", config.videos, 0x1000);
    render_split("test", config.test_videos, 0x2000);

    std::ofstream manifest(out_dir / "manifest.txt");
    manifest << "posediff-synthetic v1\n"
             << "videos = " << config.videos << "\n"
             << "test_videos = " << config.test_videos << "\n"
             << "frames_per_video = " << config.frames_per_video << "\n"
             << "image_size = " << config.image_size << "\n"
             << "seed = " << config.seed << "\n"
             << "sprite_palette_size = " << config.sprite_palette_size << "\n";

    return SyntheticSummary{out_dir, config.videos, config.test_videos, config.frames_per_video};
}

Point pose_centroid(const TensorBlob& pose, int64_t channel) {
    const int64_t h = pose.shape[1], w = pose.shape[2];
    double sx = 0, sy = 0, mass = 0;
    for (int64_t y = 0; y < h; y++)
        for (int64_t x = 0; x < w; x++) {
            const double m = pose.chw(channel, y, x);
            sx += m * (x + 0.5);
            sy += m * (y + 0.5);
            mass += m;
        }
    if (mass <= 0) return {w * 0.5, h * 0.5};
    return {sx / mass, sy / mass};
}

Point sprite_centroid(const TensorBlob& image, float background, float threshold) {
    const int64_t h = image.shape[1], w = image.shape[2];
    double sx = 0, sy = 0, mass = 0;
    for (int64_t y = 0; y < h; y++)
        for (int64_t x = 0; x < w; x++) {
            double d = 0;
            for (int c = 0; c < 3; c++) d += std::fabs(image.chw(c, y, x) - background);
            const double m = d / 3.0 > threshold ? 1.0 : 0.0;
            sx += m * (x + 0.5);
            sy += m * (y + 0.5);
            mass += m;
        }
    if (mass <= 0) return {w * 0.5, h * 0.5};
    return {sx / mass, sy / mass};
}

}  // namespace posediff
