#pragma once

#include "posediff/models/config.hpp"
#include "posediff/nn/adam.hpp"
#include "posediff/nn/graph.hpp"
#include "posediff/nn/layers.hpp"

namespace posediff {

struct LatentCode {
    TensorBlob z;  // [C_lat, h, w]
    int downsample_factor = 4;
};

// Latent autoencoder. Both halves run at latent resolution: the encoder folds
// f x f pixel patches into channels before its conv stack, the decoder unfolds
// them at the end. Encoding is deterministic (posterior mean); the logvar head
// only feeds the KL term during reconstruction training.
template <typename T>
struct Vae {
    int image_size = 0, latent_channels = 0, factor = 0, base = 0;
    nn::Conv2d<T> e1, e2, e3;
    nn::Conv2d<T> d1, d2, d3, d4;

    Vae() = default;

    Vae(const ModelConfig& cfg, Rng& rng)
        : image_size(cfg.image_size),
          latent_channels(cfg.latent_channels),
          factor(cfg.downsample_factor),
          base(cfg.vae_base) {
        const int folded = 3 * factor * factor;
        e1 = nn::Conv2d<T>("vae.enc.c1", folded, base, 3, 1, 1, rng);
        e2 = nn::Conv2d<T>("vae.enc.c2", base, base, 3, 1, 1, rng);
        e3 = nn::Conv2d<T>("vae.enc.c3", base, 2 * latent_channels, 3, 1, 1, rng);
        d1 = nn::Conv2d<T>("vae.dec.c1", latent_channels, base, 3, 1, 1, rng);
        d2 = nn::Conv2d<T>("vae.dec.c2", base, base, 3, 1, 1, rng);
        d3 = nn::Conv2d<T>("vae.dec.c3", base, base, 3, 1, 1, rng);
        d4 = nn::Conv2d<T>("vae.dec.c4", base, folded, 3, 1, 1, rng);
    }

    // [3,H,W] -> [2*C_lat, h, w] (mean || logvar)
    nn::Var<T> encode_moments(nn::Graph<T>& g, nn::Var<T> image) {
        auto x = nn::space_to_depth(g, image, factor);
        x = nn::silu(g, e1(g, x));
        x = nn::silu(g, e2(g, x));
        return e3(g, x);
    }

    nn::Var<T> encode_mean(nn::Graph<T>& g, nn::Var<T> image) {
        return nn::slice_channels(g, encode_moments(g, image), 0, latent_channels);
    }

    // Raw decoder output; the blob-level surface clamps to [0,1].
    nn::Var<T> decode(nn::Graph<T>& g, nn::Var<T> latent) {
        auto x = nn::silu(g, d1(g, latent));
        x = nn::silu(g, d2(g, x));
        x = nn::silu(g, d3(g, x));
        return nn::depth_to_space(g, d4(g, x), factor);
    }

    void visit_encoder(const nn::ParamVisitor<T>& v) {
        e1.visit(v);
        e2.visit(v);
        e3.visit(v);
    }

    void visit_decoder(const nn::ParamVisitor<T>& v) {
        d1.visit(v);
        d2.visit(v);
        d3.visit(v);
        d4.visit(v);
    }

    void visit(const nn::ParamVisitor<T>& v) {
        visit_encoder(v);
        visit_decoder(v);
    }

    // --- blob surface -------------------------------------------------------

    LatentCode encode_blob(const TensorBlob& image) {
        if (image.shape.size() != 3 || image.shape[0] != 3 || image.shape[1] != image_size ||
            image.shape[2] != image_size)
            fail(ErrorCode::BadShape, "encode expects [3," + std::to_string(image_size) + "," +
                                          std::to_string(image_size) + "], got " +
                                          shape_to_string(image.shape));
        nn::Graph<T> g(false);
        auto z = encode_mean(g, g.constant(nn::from_blob<T>(image)));
        LatentCode code{nn::to_blob(z->value), factor};
        code.z.validate();
        return code;
    }

    TensorBlob decode_blob(const LatentCode& code) {
        const int h = image_size / factor;
        if (code.z.shape.size() != 3 || code.z.shape[0] != latent_channels ||
            code.z.shape[1] != h || code.z.shape[2] != h)
            fail(ErrorCode::BadShape, "decode expects [" + std::to_string(latent_channels) + "," +
                                          std::to_string(h) + "," + std::to_string(h) + "], got " +
                                          shape_to_string(code.z.shape));
        nn::Graph<T> g(false);
        auto img = decode(g, g.constant(nn::from_blob<T>(code.z)));
        TensorBlob out = nn::to_blob(img->value);
        for (float& v : out.f32) v = std::min(1.0f, std::max(0.0f, v));
        return out;
    }
};

}  // namespace posediff
