#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "posediff/conditioning.hpp"
#include "posediff/training.hpp"
#include "testing_util.hpp"

using namespace posediff;

namespace {

using Loss = std::function<double(bool backward)>;

// Central finite differences on every (or every k-th) coordinate of the given
// parameters against the analytic gradients. Returns the worst relative error
// under the usual |fd - an| <= atol + rel * max(|fd|, |an|) criterion; atol
// absorbs the cancellation noise of the difference quotient on near-zero
// gradients.
double max_fd_error(const std::vector<nn::Param<double>*>& params, const Loss& loss,
                    int64_t stride = 1, double h = 1e-5, double atol = 1e-9) {
    for (auto* p : params) p->zero_grad();
    loss(true);
    double worst = 0.0;
    for (auto* p : params) {
        for (int64_t i = 0; i < p->value.numel(); i += stride) {
            const double keep = p->value[i];
            p->value[i] = keep + h;
            const double lp = loss(false);
            p->value[i] = keep - h;
            const double lm = loss(false);
            p->value[i] = keep;
            const double fd = (lp - lm) / (2 * h);
            const double an = p->grad[i];
            const double err = std::max(0.0, std::fabs(fd - an) - atol);
            worst = std::max(worst, err / std::max({std::fabs(fd), std::fabs(an), 1e-6}));
        }
    }
    return worst;
}

nn::Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    nn::Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); i++) t[i] = rng.normal() * scale;
    return t;
}

}  // namespace

TEST_CASE("conv, norm and resampling ops backpropagate correctly") {
    Rng rng(101);

    SUBCASE("conv2d stride 1 and stride 2") {
        for (int stride : {1, 2}) {
            nn::Param<double> x("x", {3, 6, 6});
            nn::Param<double> w("w", {4, 3, 3, 3});
            nn::Param<double> b("b", {4});
            for (auto* p : {&x, &w, &b}) nn::init_normal(*p, rng, 0.5);
            const int out = stride == 1 ? 6 : 3;
            const nn::Tensor<double> target = random_tensor({4, out, out}, rng);
            auto loss = [&](bool bw) {
                nn::Graph<double> g(bw);
                auto y = nn::conv2d(g, nn::use(g, x), nn::use(g, w), nn::use(g, b), stride, 1);
                auto l = nn::mse_loss(g, y, target);
                if (bw) g.backward(l);
                return l->value[0];
            };
            CHECK(max_fd_error({&x, &w, &b}, loss) < 1e-6);
        }
    }

    SUBCASE("group_norm with affine params") {
        nn::Param<double> x("x", {8, 3, 3});
        nn::Param<double> gamma("g", {8});
        nn::Param<double> beta("b", {8});
        nn::init_normal(x, rng, 1.0);
        nn::init_normal(gamma, rng, 0.3);
        for (int64_t i = 0; i < 8; i++) gamma.value[i] += 1.0;
        nn::init_normal(beta, rng, 0.3);
        const nn::Tensor<double> target = random_tensor({8, 3, 3}, rng);
        auto loss = [&](bool bw) {
            nn::Graph<double> g(bw);
            auto y = nn::group_norm(g, nn::use(g, x), nn::use(g, gamma), nn::use(g, beta), 4);
            auto l = nn::mse_loss(g, y, target);
            if (bw) g.backward(l);
            return l->value[0];
        };
        CHECK(max_fd_error({&x, &gamma, &beta}, loss) < 1e-6);
    }

    SUBCASE("upsample, depth/space moves, slice and concat") {
        nn::Param<double> x("x", {8, 2, 2});
        nn::Param<double> y("y", {2, 4, 4});
        nn::init_normal(x, rng, 1.0);
        nn::init_normal(y, rng, 1.0);
        const nn::Tensor<double> target = random_tensor({3, 4, 4}, rng);
        auto loss = [&](bool bw) {
            nn::Graph<double> g(bw);
            auto a = nn::upsample_nearest2(g, nn::slice_channels(g, nn::use(g, x), 2, 3));
            auto b = nn::depth_to_space(g, nn::slice_channels(g, nn::use(g, x), 0, 8), 2);
            auto c = nn::concat_channels(g, a, nn::space_to_depth(g, nn::use(g, y), 1));
            auto l = nn::mse_loss(g, nn::add(g, c, nn::concat_channels(g, b, a)), target);
            if (bw) g.backward(l);
            return l->value[0];
        };
        CHECK(max_fd_error({&x, &y}, loss) < 1e-6);
    }

    SUBCASE("attention block (softmax over matmuls)") {
        nn::Attention<double> attn("a", 6, 5, 4, rng);
        nn::Param<double> q("q", {3, 6});
        nn::Param<double> kv("kv", {7, 5});
        nn::init_normal(q, rng, 1.0);
        nn::init_normal(kv, rng, 1.0);
        nn::init_normal(attn.out.w, rng, 0.5);  // zero-init out would hide kv grads
        const nn::Tensor<double> target = random_tensor({3, 6}, rng);
        std::vector<nn::Param<double>*> params{&q, &kv};
        attn.visit([&](nn::Param<double>& p) { params.push_back(&p); });
        auto loss = [&](bool bw) {
            nn::Graph<double> g(bw);
            auto y = attn(g, nn::use(g, q), nn::use(g, kv));
            auto l = nn::mse_loss(g, y, target);
            if (bw) g.backward(l);
            return l->value[0];
        };
        CHECK(max_fd_error(params, loss) < 1e-6);
    }

    SUBCASE("l1 subgradient away from ties") {
        nn::Param<double> x("x", {20});
        for (int64_t i = 0; i < 20; i++) x.value[i] = 0.5 + 0.1 * static_cast<double>(i);
        nn::Tensor<double> target({20});
        for (int64_t i = 0; i < 20; i++) target[i] = (i % 2 ? 1.0 : -1.0) * (1.0 + 0.05 * i);
        auto loss = [&](bool bw) {
            nn::Graph<double> g(bw);
            auto l = nn::l1_loss(g, nn::use(g, x), target);
            if (bw) g.backward(l);
            return l->value[0];
        };
        CHECK(max_fd_error({&x}, loss) < 1e-6);
    }

    SUBCASE("kl term") {
        nn::Param<double> mean("m", {2, 3, 3});
        nn::Param<double> logvar("lv", {2, 3, 3});
        nn::init_normal(mean, rng, 1.0);
        nn::init_normal(logvar, rng, 0.5);
        auto loss = [&](bool bw) {
            nn::Graph<double> g(bw);
            auto l = nn::kl_normal(g, nn::use(g, mean), nn::use(g, logvar));
            if (bw) g.backward(l);
            return l->value[0];
        };
        CHECK(max_fd_error({&mean, &logvar}, loss) < 1e-6);
    }
}

namespace {

ModelConfig gradcheck_config() {
    ModelConfig cfg;
    cfg.image_size = 16;
    cfg.vae_base = 8;
    cfg.embed_patch = 8;
    cfg.d_emb = 8;
    cfg.vae_patch = 2;
    cfg.d_ctx = 8;
    cfg.unet_base = 8;
    cfg.time_embed_dim = 8;
    cfg.time_sin_dim = 8;
    cfg.timesteps = 50;
    cfg.validate();
    return cfg;
}

}  // namespace

TEST_CASE("full conditioned denoiser graph matches finite differences in f64") {
    const ModelConfig cfg = gradcheck_config();
    auto model = ModelSet<double>::fresh(cfg, 77);
    Rng rng(55);

    // wake up the zero-initialized residual branches so their inputs get
    // nonzero gradients too
    model.visit_all([&](nn::Param<double>& p) {
        for (int64_t i = 0; i < p.value.numel(); i++) p.value[i] += 0.05 * rng.normal();
    });

    TensorBlob image = TensorBlob::zeros({3, 16, 16});
    for (auto& v : image.f32) v = static_cast<float>(rng.uniform());

    PoseWindow window;
    window.center_index = 0;
    for (int i = 0; i < kPoseWindowSize; i++) {
        PoseMap p{TensorBlob::zeros({2, 16, 16})};
        for (auto& v : p.blob.f32) v = static_cast<float>(rng.uniform());
        window.frames.push_back(std::move(p));
    }

    ConditioningBundle bundle;
    {
        nn::Graph<double> g(false);
        auto z = model.vae.encode_mean(g, g.constant(nn::from_blob<double>(image)));
        bundle.vae_tokens = patchify_latent(nn::to_blob(z->value), cfg.vae_patch).tokens;
    }
    bundle.c_pose = build_pose_conditioning(window, cfg.latent_size(), cfg.latent_size());
    bundle.c_image = TensorBlob::zeros({cfg.n_ctx(), cfg.d_ctx});

    const int t = 37;
    Rng noise_rng(7);
    const TensorBlob z_noisy =
        normal_blob({cfg.latent_channels, cfg.latent_size(), cfg.latent_size()}, noise_rng);
    const nn::Tensor<double> eps_target =
        random_tensor({cfg.latent_channels, cfg.latent_size(), cfg.latent_size()}, rng);

    auto loss = [&](bool bw) {
        nn::Graph<double> g(bw);
        auto eps_hat = noise_prediction_graph(g, model, image, bundle, z_noisy, t);
        auto l = nn::mse_loss(g, eps_hat, eps_target);
        if (bw) g.backward(l);
        return l->value[0];
    };

    std::vector<nn::Param<double>*> params;
    model.visit_part(ModelPart::UNetPart, [&](nn::Param<double>& p) { params.push_back(&p); });
    model.visit_part(ModelPart::AdapterPart, [&](nn::Param<double>& p) { params.push_back(&p); });
    model.visit_part(ModelPart::Embedder, [&](nn::Param<double>& p) { params.push_back(&p); });

    int64_t total = 0;
    for (auto* p : params) total += p->value.numel();
    const int64_t stride = std::max<int64_t>(1, total / 150);  // ~150 sampled coordinates
    CHECK(max_fd_error(params, loss, stride) < 1e-4);
}

TEST_CASE("autoencoder reconstruction graph matches finite differences in f64") {
    const ModelConfig cfg = gradcheck_config();
    Rng rng(91);
    Vae<double> vae(cfg, rng);

    TensorBlob image = TensorBlob::zeros({3, 16, 16});
    for (auto& v : image.f32) v = static_cast<float>(rng.uniform());
    const nn::Tensor<double> target = nn::from_blob<double>(image);

    auto loss = [&](bool bw) {
        nn::Graph<double> g(bw);
        auto moments = vae.encode_moments(g, g.constant(nn::from_blob<double>(image)));
        auto mean = nn::slice_channels(g, moments, 0, cfg.latent_channels);
        auto logvar = nn::slice_channels(g, moments, cfg.latent_channels, 2 * cfg.latent_channels);
        auto recon = vae.decode(g, mean);
        auto l = nn::add(g, nn::mse_loss(g, recon, target),
                         nn::scale(g, nn::kl_normal(g, mean, logvar), 1e-3));
        if (bw) g.backward(l);
        return l->value[0];
    };

    std::vector<nn::Param<double>*> params;
    vae.visit([&](nn::Param<double>& p) { params.push_back(&p); });
    int64_t total = 0;
    for (auto* p : params) total += p->value.numel();
    const int64_t stride = std::max<int64_t>(1, total / 120);
    CHECK(max_fd_error(params, loss, stride) < 1e-4);
}
