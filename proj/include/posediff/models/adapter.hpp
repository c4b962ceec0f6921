#pragma once

#include "posediff/models/config.hpp"
#include "posediff/nn/graph.hpp"
#include "posediff/nn/layers.hpp"

namespace posediff {

struct LatentEmbedding {
    TensorBlob tokens;  // [m_tok, d_vae]
};

// Non-overlapping latent patches flattened into conditioning tokens.
LatentEmbedding patchify_latent(const TensorBlob& latent, int patch);

// Blends the global image tokens with the latent tokens into one
// cross-attention context: per-stream linear projections into the context
// width, token concatenation, then a token mixing matrix. The latent-stream
// projection starts at zero, so a fresh adapter is a function of the global
// tokens alone. The clip_only variant drops the latent stream entirely.
template <typename T>
struct Adapter {
    int n_tok = 0, m_tok = 0, n_ctx = 0, d_ctx = 0;
    bool clip_only = false;
    nn::Linear<T> clip_proj, vae_proj;
    nn::Param<T> mixer;

    Adapter() = default;

    Adapter(const ModelConfig& cfg, Rng& rng)
        : n_tok(cfg.n_tok()),
          m_tok(cfg.adapter_clip_only ? 0 : cfg.m_tok()),
          n_ctx(cfg.n_ctx()),
          d_ctx(cfg.d_ctx),
          clip_only(cfg.adapter_clip_only) {
        clip_proj = nn::Linear<T>("adapter.clip_proj", cfg.d_emb, d_ctx, rng);
        if (!clip_only) vae_proj = nn::Linear<T>("adapter.vae_proj", cfg.d_vae(), d_ctx, rng,
                                                 /*zero_init=*/true);
        mixer = nn::Param<T>("adapter.mixer", {n_ctx, n_tok + m_tok});
        if (n_ctx == n_tok) {
            // identity over the global tokens, small random over the latent ones
            for (int i = 0; i < n_ctx; i++) mixer.value[i * (n_tok + m_tok) + i] = T(1);
            for (int i = 0; i < n_ctx; i++)
                for (int j = n_tok; j < n_tok + m_tok; j++)
                    mixer.value[i * (n_tok + m_tok) + j] = static_cast<T>(rng.normal() * 0.2);
        } else {
            nn::init_normal(mixer, rng, 1.0 / std::sqrt(double(n_tok + m_tok)));
        }
    }

    nn::Var<T> forward(nn::Graph<T>& g, nn::Var<T> c_clip, nn::Var<T> c_vae) {
        if (c_clip->value.dim(0) != n_tok)
            fail(ErrorCode::ShapeMismatch, "adapter expects " + std::to_string(n_tok) +
                                               " global tokens, got " +
                                               std::to_string(c_clip->value.dim(0)));
        auto a = clip_proj(g, c_clip);
        if (clip_only) return nn::matmul(g, nn::use(g, mixer), a);
        if (!c_vae || c_vae->value.dim(0) != m_tok)
            fail(ErrorCode::ShapeMismatch, "adapter expects " + std::to_string(m_tok) +
                                               " latent tokens");
        auto b = vae_proj(g, c_vae);
        return nn::matmul(g, nn::use(g, mixer), nn::concat_rows(g, a, b));
    }

    TensorBlob forward_blob(const TensorBlob& c_clip, const TensorBlob& c_vae) {
        nn::Graph<T> g(false);
        auto clip_var = g.constant(nn::from_blob<T>(c_clip));
        nn::Var<T> vae_var =
            clip_only ? nn::Var<T>() : g.constant(nn::from_blob<T>(c_vae));
        return nn::to_blob(forward(g, clip_var, vae_var)->value);
    }

    void visit(const nn::ParamVisitor<T>& v) {
        clip_proj.visit(v);
        if (!clip_only) vae_proj.visit(v);
        v(mixer);
    }
};

}  // namespace posediff
