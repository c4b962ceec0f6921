#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "posediff/dataset.hpp"
#include "posediff/image_io.hpp"
#include "posediff/synthetic.hpp"
#include "testing_util.hpp"

using namespace posediff;
using testutil::TempDir;

namespace {

struct CliResult {
    int exit_code;
    std::string output;
};

CliResult run(const std::string& args) {
    const std::string out_file = std::filesystem::temp_directory_path() /
                                 ("posediff_cli_out_" + std::to_string(::getpid()) + ".txt");
    const std::string cmd = std::string(POSEDIFF_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
    const int raw = std::system(cmd.c_str());
    std::ifstream is(out_file);
    std::stringstream ss;
    ss << is.rdbuf();
    std::filesystem::remove(out_file);
    return {WEXITSTATUS(raw), ss.str()};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("usage and config errors exit with code 2") {
    SUBCASE("missing required flag, with usage text") {
        const CliResult r = run("make-synthetic --videos 2");
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("--out") != std::string::npos);
    }

    SUBCASE("unknown config key") {
        TempDir tmp("cli_cfg");
        std::ofstream((tmp.path() / "c.cfg")) << "videos = 2\nnot_a_key = 1\n";
        const CliResult r = run("make-synthetic --out " + (tmp.path() / "ds").string() +
                                " --config " + (tmp.path() / "c.cfg").string());
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("not_a_key") != std::string::npos);
    }

    SUBCASE("non-numeric weight list") {
        TempDir tmp("cli_grid");
        const CliResult r = run("grid --ckpt " + (tmp.path() / "none").string() +
                                " --image x.png --poses p --out g.png --s-image 1,oops,3");
        CHECK(r.exit_code == 2);
    }

    SUBCASE("missing base checkpoint") {
        TempDir tmp("cli_ft");
        const CliResult r = run("finetune --base " + (tmp.path() / "nope").string() +
                                " --image a.png --out " + (tmp.path() / "out").string());
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("CheckpointMissing") != std::string::npos);
    }

    SUBCASE("help exits zero") { CHECK(run("--help").exit_code == 0); }
}

TEST_CASE("make-synthetic writes the documented layout and respects the config file") {
    TempDir tmp("cli_synth");
    std::ofstream((tmp.path() / "c.cfg")) << "videos = 3\nframes_per_video = 4\nimage_size = 32\n";
    // flag overrides file: videos becomes 2
    const CliResult r = run("make-synthetic --out " + (tmp.path() / "ds").string() + " --config " +
                            (tmp.path() / "c.cfg").string() + " --videos 2 --test-videos 1 --seed 3");
    REQUIRE(r.exit_code == 0);
    const Dataset ds = Dataset::open(tmp.path() / "ds", "train");
    CHECK(ds.videos().size() == 2);
    CHECK(ds.videos()[0].frame_paths.size() == 4);
    CHECK(std::filesystem::exists(tmp.path() / "ds/train/video_0000/poses/000003.pdtb"));
    CHECK(std::filesystem::exists(tmp.path() / "ds/manifest.txt"));
}

TEST_CASE("miniature end-to-end pipeline through the CLI") {
    TempDir tmp("cli_e2e");
    const std::string ds = (tmp.path() / "ds").string();
    REQUIRE(run("make-synthetic --out " + ds + " --videos 2 --test-videos 1 --frames 6 --size 32 --seed 11")
                .exit_code == 0);

    const std::string base = (tmp.path() / "base").string();
    REQUIRE(run("train --data " + ds + " --out " + base +
                " --image-size 32 --unet-base 16 --vae-base 32 --d-ctx 32 --d-emb 16 " +
                "--embed-patch 8 --vae-patch 2 --timesteps 100 " +
                "--vae-steps 30 --vae-lr 2e-3 --vae-batch 2 " +
                "--epochs 4 --lr 1e-3 --micro-batch 2 --grad-accum 1 --seed 1")
                .exit_code == 0);
    CHECK(std::filesystem::exists(tmp.path() / "base/manifest.txt"));
    CHECK(std::filesystem::exists(tmp.path() / "base/train_log.csv"));

    SUBCASE("resume continues the step counter monotonically") {
        const std::string resumed = (tmp.path() / "resumed").string();
        REQUIRE(run("train --data " + ds + " --out " + resumed + " --resume " + base +
                    " --epochs 2 --lr 1e-3 --micro-batch 2 --grad-accum 1 --seed 2")
                    .exit_code == 0);
        const std::string manifest = slurp(tmp.path() / "resumed/manifest.txt");
        const std::string old_manifest = slurp(tmp.path() / "base/manifest.txt");
        auto step_of = [](const std::string& text) {
            const auto pos = text.find("step = ");
            return std::stoll(text.substr(pos + 7));
        };
        CHECK(step_of(manifest) > step_of(old_manifest));
    }

    SUBCASE("finetune echoes its defaults into the manifest") {
        const std::string subj = (tmp.path() / "subj").string();
        REQUIRE(run("finetune --base " + base + " --image " + ds +
                    "/train/video_0000/frames/000002.png --out " + subj +
                    " --steps 8 --decoder-steps 6 --seed 3")
                    .exit_code == 0);
        const std::string manifest = slurp(tmp.path() / "subj/manifest.txt");
        CHECK(manifest.find("lr = 1e-05") != std::string::npos);
        CHECK(manifest.find("decoder_lr = 5e-05") != std::string::npos);
        CHECK(manifest.find("phase = subject") != std::string::npos);

        SUBCASE("animate writes frames plus a reproducibility manifest") {
            const std::string out = (tmp.path() / "anim").string();
            REQUIRE(run("animate --ckpt " + subj + " --image " + ds +
                        "/train/video_0000/frames/000002.png --driver " + ds +
                        "/test/video_0000 --out " + out +
                        " --s-image 2 --s-pose 3 --steps 6 --seed 4 --jobs 2")
                        .exit_code == 0);
            for (int i = 0; i < 6; i++) {
                char name[16];
                std::snprintf(name, sizeof(name), "%06d.png", i);
                CHECK(std::filesystem::exists(tmp.path() / "anim" / name));
            }
            const std::string manifest2 = slurp(tmp.path() / "anim/manifest.txt");
            CHECK(manifest2.find("s_image = 2") != std::string::npos);
            CHECK(manifest2.find("s_pose = 3") != std::string::npos);
            CHECK(manifest2.find("steps = 6") != std::string::npos);
            CHECK(manifest2.find("seed = 4") != std::string::npos);
            CHECK(manifest2.find("checkpoint_id = ") != std::string::npos);

            SUBCASE("evaluate emits per-frame rows and the aggregate block") {
                const CliResult r = run("evaluate --generated " + out + " --reference " + ds +
                                        "/test/video_0000/frames --out " +
                                        (tmp.path() / "report.txt").string());
                REQUIRE(r.exit_code == 0);
                const std::string report = slurp(tmp.path() / "report.txt");
                CHECK(report.find("frame 0 l1 ") != std::string::npos);
                CHECK(report.find("aggregate l1 ") != std::string::npos);
            }
        }

        SUBCASE("grid writes a mosaic png") {
            const std::string grid = (tmp.path() / "grid.png").string();
            REQUIRE(run("grid --ckpt " + subj + " --image " + ds +
                        "/train/video_0000/frames/000002.png --poses " + ds +
                        "/train/video_0000/poses --frame 1 --s-image 1,2 --s-pose 1,3 --steps 5 "
                        "--seed 5 --out " + grid)
                        .exit_code == 0);
            const TensorBlob mosaic = read_png(grid);
            CHECK(mosaic.shape[1] == 9 + 2 * 32);
            CHECK(mosaic.shape[2] == 9 + 2 * 32);
        }
    }

    SUBCASE("animate with an empty pose directory exits 2") {
        std::filesystem::create_directories(tmp.path() / "empty_poses");
        const CliResult r = run("animate --ckpt " + base + " --image " + ds +
                                "/train/video_0000/frames/000000.png --poses " +
                                (tmp.path() / "empty_poses").string() + " --out " +
                                (tmp.path() / "anim2").string());
        CHECK(r.exit_code == 2);
    }
}

TEST_CASE("POSEDIFF_SEED is the lowest-priority seed default") {
    TempDir tmp("cli_env");
    setenv("POSEDIFF_SEED", "321", 1);
    const CliResult r = run("make-synthetic --out " + (tmp.path() / "ds").string() +
                            " --videos 1 --test-videos 1 --frames 2 --size 32");
    unsetenv("POSEDIFF_SEED");
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(tmp.path() / "ds/manifest.txt").find("seed = 321") != std::string::npos);

    // explicit flag wins over the environment
    TempDir tmp2("cli_env2");
    setenv("POSEDIFF_SEED", "321", 1);
    const CliResult r2 = run("make-synthetic --out " + (tmp2.path() / "ds").string() +
                             " --videos 1 --test-videos 1 --frames 2 --size 32 --seed 9");
    unsetenv("POSEDIFF_SEED");
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(tmp2.path() / "ds/manifest.txt").find("seed = 9") != std::string::npos);
}

TEST_CASE("a diverging run exits 3") {
    TempDir tmp("cli_div");
    const std::string ds = (tmp.path() / "ds").string();
    REQUIRE(run("make-synthetic --out " + ds + " --videos 1 --test-videos 1 --frames 2 --size 32 --seed 2")
                .exit_code == 0);
    // an absurd learning rate overflows the parameters within a few steps
    const CliResult r = run("train --data " + ds + " --out " + (tmp.path() / "ckpt").string() +
                            " --image-size 32 --unet-base 16 --vae-base 32 --d-ctx 32 --d-emb 16 " +
                            "--embed-patch 8 --vae-patch 2 --timesteps 100 " +
                            "--vae-steps 40 --vae-lr 1e18 --vae-batch 1 " +
                            "--epochs 1 --lr 1e-3 --micro-batch 1 --grad-accum 1 --seed 1");
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("diverged") != std::string::npos);
}
