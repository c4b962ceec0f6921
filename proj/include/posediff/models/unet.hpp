#pragma once

#include "posediff/models/config.hpp"
#include "posediff/nn/graph.hpp"
#include "posediff/nn/layers.hpp"

namespace posediff {

namespace detail {

template <typename T>
struct ResBlock {
    nn::GroupNorm<T> gn1, gn2;
    nn::Conv2d<T> conv1, conv2;
    nn::Linear<T> temb_proj;
    nn::Conv2d<T> shortcut;  // 1x1, only when cin != cout
    bool has_shortcut = false;

    ResBlock() = default;
    ResBlock(const std::string& name, int cin, int cout, int temb_dim, Rng& rng)
        : gn1(name + ".gn1", cin, 8),
          gn2(name + ".gn2", cout, 8),
          conv1(name + ".conv1", cin, cout, 3, 1, 1, rng),
          conv2(name + ".conv2", cout, cout, 3, 1, 1, rng, /*zero_init=*/true),
          temb_proj(name + ".temb", temb_dim, cout, rng),
          has_shortcut(cin != cout) {
        if (has_shortcut) shortcut = nn::Conv2d<T>(name + ".skip", cin, cout, 1, 1, 0, rng);
    }

    nn::Var<T> operator()(nn::Graph<T>& g, nn::Var<T> x, nn::Var<T> temb) {
        auto h = conv1(g, nn::silu(g, gn1(g, x)));
        h = nn::add_channel_bias(g, h, temb_proj(g, temb));
        h = conv2(g, nn::silu(g, gn2(g, h)));
        auto skip = has_shortcut ? shortcut(g, x) : x;
        return nn::add(g, skip, h);
    }

    void visit(const nn::ParamVisitor<T>& v) {
        gn1.visit(v);
        gn2.visit(v);
        conv1.visit(v);
        conv2.visit(v);
        temb_proj.visit(v);
        if (has_shortcut) shortcut.visit(v);
    }
};

// Self-attention then cross-attention over the conditioning context, both as
// residual branches with zero-initialized output projections.
template <typename T>
struct AttnBlock {
    nn::GroupNorm<T> gn_self, gn_cross;
    nn::Attention<T> self_attn, cross_attn;
    int h = 0, w = 0;

    AttnBlock() = default;
    AttnBlock(const std::string& name, int c, int d_ctx, Rng& rng)
        : gn_self(name + ".gns", c, 8),
          gn_cross(name + ".gnc", c, 8),
          self_attn(name + ".self", c, c, c, rng),
          cross_attn(name + ".cross", c, d_ctx, c, rng) {}

    nn::Var<T> operator()(nn::Graph<T>& g, nn::Var<T> x, nn::Var<T> context) {
        const int hh = x->value.dim(1), ww = x->value.dim(2);
        auto t = nn::chw_to_tokens(g, gn_self(g, x));
        x = nn::add(g, x, nn::tokens_to_chw(g, self_attn(g, t, t), hh, ww));
        auto t2 = nn::chw_to_tokens(g, gn_cross(g, x));
        return nn::add(g, x, nn::tokens_to_chw(g, cross_attn(g, t2, context), hh, ww));
    }

    void visit(const nn::ParamVisitor<T>& v) {
        gn_self.visit(v);
        gn_cross.visit(v);
        self_attn.visit(v);
        cross_attn.visit(v);
    }
};

}  // namespace detail

// Widened copy of a conv weight [Co,Ci,kh,kw] -> [Co,Ci+extra,kh,kw]; the
// original columns are copied bit-exactly, the new ones start at zero.
template <typename T>
nn::Tensor<T> widen_conv_weight(const nn::Tensor<T>& w, int extra) {
    if (w.rank() != 4) fail(ErrorCode::BadShape, "conv weight must be rank 4");
    const int co = w.dim(0), ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    nn::Tensor<T> out({co, ci + extra, kh, kw});
    for (int o = 0; o < co; o++)
        for (int c = 0; c < ci; c++)
            for (int i = 0; i < kh * kw; i++)
                out[((o * (ci + extra) + c) * kh * kw) + i] = w[((o * ci + c) * kh * kw) + i];
    return out;
}

// Time-conditioned denoiser over the latent, with the pose stack concatenated
// to its input channels and cross-attention over the image context. Two
// resolution levels with skip connections, attention at the lower one.
template <typename T>
struct UNet {
    int latent_channels = 0, pose_channels = 0, in_channels = 0;
    int base = 0, d_ctx = 0, time_sin_dim = 0, time_embed_dim = 0;

    nn::Conv2d<T> conv_in;
    nn::Linear<T> temb1, temb2;
    detail::ResBlock<T> rb_down0, rb_down1, rb_mid1, rb_mid2, rb_up1, rb_up0;
    detail::AttnBlock<T> attn_down, attn_mid, attn_up;
    nn::Conv2d<T> downsample;
    nn::GroupNorm<T> out_norm;
    nn::Conv2d<T> conv_out;

    UNet() = default;

    // Built with the unmodified input width (latent channels only); call
    // widen_input_layer before feeding pose-concatenated inputs.
    UNet(const ModelConfig& cfg, Rng& rng)
        : latent_channels(cfg.latent_channels),
          pose_channels(cfg.pose_channels()),
          in_channels(cfg.latent_channels),
          base(cfg.unet_base),
          d_ctx(cfg.d_ctx),
          time_sin_dim(cfg.time_sin_dim),
          time_embed_dim(cfg.time_embed_dim) {
        const int ch1 = base, ch2 = 2 * base;
        conv_in = nn::Conv2d<T>("unet.conv_in", in_channels, ch1, 3, 1, 1, rng);
        temb1 = nn::Linear<T>("unet.temb1", time_sin_dim, time_embed_dim, rng);
        temb2 = nn::Linear<T>("unet.temb2", time_embed_dim, time_embed_dim, rng);
        rb_down0 = detail::ResBlock<T>("unet.down0", ch1, ch1, time_embed_dim, rng);
        downsample = nn::Conv2d<T>("unet.down", ch1, ch1, 3, 2, 1, rng);
        rb_down1 = detail::ResBlock<T>("unet.down1", ch1, ch2, time_embed_dim, rng);
        attn_down = detail::AttnBlock<T>("unet.attn_down", ch2, d_ctx, rng);
        rb_mid1 = detail::ResBlock<T>("unet.mid1", ch2, ch2, time_embed_dim, rng);
        attn_mid = detail::AttnBlock<T>("unet.attn_mid", ch2, d_ctx, rng);
        rb_mid2 = detail::ResBlock<T>("unet.mid2", ch2, ch2, time_embed_dim, rng);
        rb_up1 = detail::ResBlock<T>("unet.up1", ch2 + ch2, ch2, time_embed_dim, rng);
        attn_up = detail::AttnBlock<T>("unet.attn_up", ch2, d_ctx, rng);
        rb_up0 = detail::ResBlock<T>("unet.up0", ch2 + ch1, ch1, time_embed_dim, rng);
        out_norm = nn::GroupNorm<T>("unet.out_norm", ch1, 8);
        conv_out = nn::Conv2d<T>("unet.out", ch1, latent_channels, 3, 1, 1, rng);
    }

    bool widened() const { return in_channels == latent_channels + pose_channels; }

    // Adds `extra` zero-initialized input channels; the existing columns keep
    // their exact values.
    void widen_input_layer(int extra) {
        if (in_channels != latent_channels)
            fail(ErrorCode::WidthMismatch, "input layer already has " +
                                               std::to_string(in_channels) + " channels");
        if (extra != pose_channels)
            fail(ErrorCode::WidthMismatch, "expected " + std::to_string(pose_channels) +
                                               " extra channels, got " + std::to_string(extra));
        conv_in.w.value = widen_conv_weight(conv_in.w.value, extra);
        conv_in.w.grad = nn::Tensor<T>::zeros(conv_in.w.value.shape());
        conv_in.w.adam_m = nn::Tensor<T>();
        conv_in.w.adam_v = nn::Tensor<T>();
        in_channels += extra;
    }

    // z_and_pose: [latent+pose, h, w]; context: [n_ctx, d_ctx]
    nn::Var<T> forward(nn::Graph<T>& g, nn::Var<T> z_and_pose, int t, nn::Var<T> context) {
        if (!widened()) fail(ErrorCode::WidthMismatch, "input layer was never widened");
        if (z_and_pose->value.dim(0) != in_channels)
            fail(ErrorCode::ShapeMismatch, "denoiser input expects " + std::to_string(in_channels) +
                                               " channels, got " +
                                               std::to_string(z_and_pose->value.dim(0)));
        auto temb_in = g.constant(nn::timestep_embedding<T>(t, time_sin_dim));
        auto temb = temb2(g, nn::silu(g, temb1(g, temb_in)));

        auto x0 = conv_in(g, z_and_pose);
        auto s0 = rb_down0(g, x0, temb);
        auto x1 = downsample(g, s0);
        auto s1 = attn_down(g, rb_down1(g, x1, temb), context);

        auto m = rb_mid1(g, s1, temb);
        m = attn_mid(g, m, context);
        m = rb_mid2(g, m, temb);

        auto u = rb_up1(g, nn::concat_channels(g, m, s1), temb);
        u = attn_up(g, u, context);
        u = nn::upsample_nearest2(g, u);
        u = rb_up0(g, nn::concat_channels(g, u, s0), temb);
        return conv_out(g, nn::silu(g, out_norm(g, u)));
    }

    void visit(const nn::ParamVisitor<T>& v) {
        conv_in.visit(v);
        temb1.visit(v);
        temb2.visit(v);
        rb_down0.visit(v);
        downsample.visit(v);
        rb_down1.visit(v);
        attn_down.visit(v);
        rb_mid1.visit(v);
        attn_mid.visit(v);
        rb_mid2.visit(v);
        rb_up1.visit(v);
        attn_up.visit(v);
        rb_up0.visit(v);
        out_norm.visit(v);
        conv_out.visit(v);
    }
};

}  // namespace posediff
