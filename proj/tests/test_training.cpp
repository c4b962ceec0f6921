#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "posediff/synthetic.hpp"
#include "posediff/training.hpp"
#include "testing_util.hpp"

using namespace posediff;
using testutil::TempDir;
using testutil::thrown_code;

namespace {

ModelConfig cfg32() {
    ModelConfig cfg = tiny_model_config();
    cfg.validate();
    return cfg;
}

Dataset make_ds(const TempDir& tmp, int videos = 3, int frames = 8, uint64_t seed = 5) {
    SyntheticConfig syn;
    syn.videos = videos;
    syn.test_videos = 1;
    syn.frames_per_video = frames;
    syn.image_size = 32;
    syn.seed = seed;
    make_synthetic_dataset(syn, tmp.path() / "ds");
    return Dataset::open(tmp.path() / "ds", "train");
}

SubjectInput subject_of(const Dataset& ds, size_t video, size_t frame) {
    return SubjectInput{ds.load_frame(video, frame),
                        build_pose_window(ds.load_poses(video), static_cast<int64_t>(frame))};
}

struct Checksums {
    uint64_t vae_enc, vae_dec, unet, adapter, embedder;
    static Checksums of(ModelSetF& m) {
        return {m.part_checksum(ModelPart::VaeEncoder), m.part_checksum(ModelPart::VaeDecoder),
                m.part_checksum(ModelPart::UNetPart), m.part_checksum(ModelPart::AdapterPart),
                m.part_checksum(ModelPart::Embedder)};
    }
};

}  // namespace

TEST_CASE("training defaults carry the published recipe") {
    const TrainConfig base = TrainConfig::base_defaults();
    CHECK(base.lr == doctest::Approx(5e-6));
    CHECK(base.epochs == 5);
    CHECK(base.effective_batch() == 16);
    CHECK(base.grad_accum == 4);
    CHECK(base.dropout_enabled);
    CHECK(base.dropout.pose_only == doctest::Approx(0.05));
    CHECK(base.dropout.image_only == doctest::Approx(0.05));
    CHECK(base.dropout.both == doctest::Approx(0.05));

    const TrainConfig subject = TrainConfig::subject_defaults();
    CHECK(subject.lr == doctest::Approx(1e-5));
    CHECK(subject.steps == 500);
    CHECK(!subject.dropout_enabled);
    CHECK(subject.augment_enabled);

    const DecoderFtConfig dec;
    CHECK(dec.steps == 1500);
    CHECK(dec.lr == doctest::Approx(5e-5));
}

TEST_CASE("dropout is rejected outside the base phase") {
    TrainConfig cfg = TrainConfig::subject_defaults();
    cfg.dropout_enabled = true;
    CHECK(thrown_code([&] { cfg.validate(); }) == ErrorCode::ConfigError);
}

TEST_CASE("each phase mutates exactly its declared parameter set") {
    TempDir tmp("freeze");
    const Dataset ds = make_ds(tmp);
    auto model = ModelSetF::fresh(cfg32(), 7);

    AutoencoderConfig pre;
    pre.steps = 40;
    pre.lr = 2e-3;
    pre.batch = 2;
    const Checksums c0 = Checksums::of(model);
    train_autoencoder(model, ds, pre);
    const Checksums c1 = Checksums::of(model);
    CHECK(c1.vae_enc != c0.vae_enc);
    CHECK(c1.vae_dec != c0.vae_dec);
    CHECK(c1.unet == c0.unet);
    CHECK(c1.adapter == c0.adapter);
    CHECK(c1.embedder == c0.embedder);

    TrainConfig base;
    base.lr = 1e-3;
    base.epochs = 4;
    base.micro_batch = 2;
    base.grad_accum = 1;
    base.seed = 3;
    train_base(model, ds, base);
    const Checksums c2 = Checksums::of(model);
    CHECK(c2.vae_enc == c1.vae_enc);  // autoencoder frozen through phase 1
    CHECK(c2.vae_dec == c1.vae_dec);
    CHECK(c2.unet != c1.unet);
    CHECK(c2.adapter != c1.adapter);
    CHECK(c2.embedder != c1.embedder);

    TrainConfig subject = TrainConfig::subject_defaults();
    subject.steps = 25;
    subject.lr = 1e-3;
    subject.seed = 4;
    DecoderFtConfig dec;
    dec.steps = 20;
    dec.lr = 1e-3;
    finetune_subject(model, {subject_of(ds, 0, 2)}, subject, dec);
    const Checksums c3 = Checksums::of(model);
    CHECK(c3.vae_enc == c2.vae_enc);
    CHECK(c3.vae_dec != c2.vae_dec);  // decoder sub-step ran
    CHECK(c3.unet != c2.unet);
    CHECK(c3.adapter != c2.adapter);
    CHECK(c3.embedder == c2.embedder);  // embedder frozen in phase 2
}

TEST_CASE("base training reduces the smoothed loss on synthetic data") {
    TempDir tmp("base_loss");
    const Dataset ds = make_ds(tmp, 3, 8);
    auto model = ModelSetF::fresh(cfg32(), 13);

    AutoencoderConfig pre;
    pre.steps = 80;
    pre.lr = 2e-3;
    pre.batch = 4;
    train_autoencoder(model, ds, pre);

    TrainConfig base;
    base.lr = 2e-3;
    base.epochs = 40;  // 240 steps at 24 frames / batch 4
    base.micro_batch = 2;
    base.grad_accum = 2;
    base.seed = 11;
    const TrainReport report = train_base(model, ds, base);
    REQUIRE(report.curve.size() >= 100);

    const size_t k = 20;
    double head = 0.0, tail = 0.0;
    for (size_t i = 0; i < k; i++) head += report.curve[i].loss;
    for (size_t i = report.curve.size() - k; i < report.curve.size(); i++)
        tail += report.curve[i].loss;
    CHECK(tail / k < head / k);
}

TEST_CASE("seeded base training is bit-reproducible") {
    TempDir tmp("base_repro");
    const Dataset ds = make_ds(tmp, 2, 6);

    TrainConfig base;
    base.lr = 1e-3;
    base.epochs = 6;
    base.micro_batch = 2;
    base.grad_accum = 1;
    base.seed = 21;

    auto m1 = ModelSetF::fresh(cfg32(), 9);
    auto m2 = ModelSetF::fresh(cfg32(), 9);
    const TrainReport r1 = train_base(m1, ds, base);
    const TrainReport r2 = train_base(m2, ds, base);
    REQUIRE(r1.curve.size() == r2.curve.size());
    for (size_t i = 0; i < r1.curve.size(); i++) CHECK(r1.curve[i].loss == r2.curve[i].loss);
    CHECK(m1.part_checksum(ModelPart::UNetPart) == m2.part_checksum(ModelPart::UNetPart));
}

TEST_CASE("gradient accumulation split does not change the update") {
    TempDir tmp("accum");
    const Dataset ds = make_ds(tmp, 2, 6);

    auto run = [&](int micro, int accum) {
        auto m = ModelSetF::fresh(cfg32(), 15);
        TrainConfig base;
        base.lr = 1e-3;
        base.epochs = 2;
        base.micro_batch = micro;
        base.grad_accum = accum;
        base.seed = 33;
        train_base(m, ds, base);
        return m.part_checksum(ModelPart::UNetPart);
    };

    // same effective batch, different micro/accum split
    CHECK(run(2, 2) == run(4, 1));
}

TEST_CASE("augmentation applies one geometric transform to the whole pair") {
    SUBCASE("scale forced to 1 is the identity") {
        TensorBlob img = TensorBlob::zeros({3, 32, 32});
        Rng rng(3);
        for (auto& v : img.f32) v = static_cast<float>(rng.uniform());
        PoseWindow w;
        w.center_index = 0;
        for (int i = 0; i < kPoseWindowSize; i++) {
            PoseMap p{TensorBlob::zeros({2, 32, 32})};
            for (auto& v : p.blob.f32) v = static_cast<float>(rng.uniform());
            w.frames.push_back(std::move(p));
        }
        Rng aug_rng(5);
        const auto [img2, w2] = augment_pair(img, w, aug_rng, 1.0, 1.0);
        CHECK(blobs_equal(img, img2));
        for (int i = 0; i < kPoseWindowSize; i++)
            CHECK(blobs_equal(w.frames[i].blob, w2.frames[i].blob));
    }

    SUBCASE("fixed seed reproduces the crop") {
        TensorBlob img = TensorBlob::zeros({3, 32, 32});
        Rng rng(7);
        for (auto& v : img.f32) v = static_cast<float>(rng.uniform());
        PoseWindow w;
        w.center_index = 0;
        for (int i = 0; i < kPoseWindowSize; i++)
            w.frames.push_back(PoseMap{TensorBlob::full({2, 32, 32}, 0.5f)});
        Rng r1(9), r2(9);
        const auto a = augment_pair(img, w, r1);
        const auto b = augment_pair(img, w, r2);
        CHECK(blobs_equal(a.first, b.first));
    }

    SUBCASE("identical planes stay identical under the paired transform") {
        // image channel 0 and pose channel 0 start equal; the same crop and
        // resize must keep them bitwise equal
        TensorBlob plane = TensorBlob::zeros({1, 32, 32});
        Rng rng(11);
        for (auto& v : plane.f32) v = static_cast<float>(rng.uniform());
        TensorBlob img = TensorBlob::zeros({3, 32, 32});
        PoseWindow w;
        w.center_index = 0;
        PoseMap p{TensorBlob::zeros({2, 32, 32})};
        for (int64_t i = 0; i < 32 * 32; i++) {
            img.f32[static_cast<size_t>(i)] = plane.f32[static_cast<size_t>(i)];
            p.blob.f32[static_cast<size_t>(i)] = plane.f32[static_cast<size_t>(i)];
        }
        for (int i = 0; i < kPoseWindowSize; i++) w.frames.push_back(p);

        Rng aug_rng(13);
        const auto [img2, w2] = augment_pair(img, w, aug_rng, 0.8, 0.95);
        for (int64_t i = 0; i < 32 * 32; i++)
            CHECK(img2.f32[static_cast<size_t>(i)] == w2.frames[2].blob.f32[static_cast<size_t>(i)]);
    }

    SUBCASE("sprite displacement matches between image and pose") {
        TempDir tmp("aug_centroid");
        const Dataset ds = make_ds(tmp, 1, 4, 31);
        const TensorBlob img = ds.load_frame(0, 1);
        const PoseWindow w = build_pose_window(ds.load_poses(0), 1);

        Rng rng(17);
        for (int rep = 0; rep < 5; rep++) {
            const auto [img2, w2] = augment_pair(img, w, rng, 0.9, 1.0);
            const Point ci = sprite_centroid(img2);
            const Point cp = pose_centroid(w2.frames[2].blob, 0);
            CHECK(std::hypot(ci.x - cp.x, ci.y - cp.y) < 1.0);
        }
    }
}

TEST_CASE("subject finetuning cycles inputs uniformly and needs pose windows") {
    TempDir tmp("subject");
    const Dataset ds = make_ds(tmp, 3, 8);
    auto model = ModelSetF::fresh(cfg32(), 23);

    SUBCASE("selection counts stay within the multinomial bound") {
        TrainConfig cfg = TrainConfig::subject_defaults();
        cfg.steps = 300;
        cfg.lr = 1e-4;
        cfg.seed = 3;
        DecoderFtConfig dec;
        dec.steps = 0;
        const SubjectReport report = finetune_subject(
            model, {subject_of(ds, 0, 1), subject_of(ds, 1, 2), subject_of(ds, 2, 3)}, cfg, dec);
        REQUIRE(report.selection_counts.size() == 3);
        const double expect = 300.0 / 3.0;
        const double bound = 3.0 * std::sqrt(300.0 * (1.0 / 3.0) * (2.0 / 3.0));
        for (int64_t c : report.selection_counts)
            CHECK(std::fabs(static_cast<double>(c) - expect) <= bound);
        CHECK(std::accumulate(report.selection_counts.begin(), report.selection_counts.end(),
                              int64_t{0}) == 300);
    }

    SUBCASE("a missing pose window is rejected") {
        SubjectInput bad{ds.load_frame(0, 0), PoseWindow{}};
        TrainConfig cfg = TrainConfig::subject_defaults();
        cfg.steps = 1;
        CHECK(thrown_code([&] { finetune_subject(model, {bad}, cfg, DecoderFtConfig{}); }) ==
              ErrorCode::MissingPose);
    }
}

TEST_CASE("training_loss validates inputs and flags non-finite losses") {
    TempDir tmp("loss");
    const Dataset ds = make_ds(tmp, 1, 2);
    auto model = ModelSetF::fresh(cfg32(), 27);

    Rng rng(1);
    SampleRecord rec = sample_training_pair(ds, rng);
    const ConditioningBundle bundle =
        build_conditioning(model, rec.input_image, rec.pose_window);

    SUBCASE("empty batch is rejected") {
        Rng r(2);
        CHECK(thrown_code([&] {
                  training_loss(model, std::span<const SampleRecord>(),
                                std::span<const ConditioningBundle>(), r);
              }) == ErrorCode::ShapeMismatch);
    }

    SUBCASE("finite loss on a healthy model") {
        Rng r(3);
        const double loss = training_loss(model, std::span(&rec, 1), std::span(&bundle, 1), r);
        CHECK(std::isfinite(loss));
        CHECK(loss > 0.0);
    }

    SUBCASE("parameter blow-up raises the non-finite signal") {
        model.unet.conv_out.w.value.fill(1e30f);
        Rng r(4);
        CHECK(thrown_code([&] {
                  training_loss(model, std::span(&rec, 1), std::span(&bundle, 1), r);
              }) == ErrorCode::NonFinite);
    }
}

TEST_CASE("train log lines carry step, loss, lr and phase") {
    TempDir tmp("log");
    TrainReport report;
    report.curve.push_back({0, 0.5, 1e-3, "base"});
    report.curve.push_back({1, 0.4, 1e-3, "base"});
    append_train_log(tmp.path() / "log.csv", report);

    std::ifstream is(tmp.path() / "log.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "step,loss,lr,phase");
    std::getline(is, line);
    CHECK(line == "0,0.5,0.001,base");
}
