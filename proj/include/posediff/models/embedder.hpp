#pragma once

#include <filesystem>
#include <optional>

#include "posediff/models/config.hpp"
#include "posediff/nn/graph.hpp"
#include "posediff/nn/layers.hpp"
#include "posediff/tensor_blob.hpp"

namespace posediff {

struct ImageEmbedding {
    TensorBlob tokens;  // [n_tok, d_emb]
};

// Global token embedder for the input image: a patch projection plus a learned
// positional table and one residual MLP. Trained jointly during base training;
// an external mode passes through precomputed embeddings instead.
template <typename T>
struct ImageEmbedder {
    int image_size = 0, patch = 0, d_emb = 0, n_tok = 0;
    nn::Conv2d<T> patchify;
    nn::Param<T> pos;
    nn::Linear<T> proj;

    ImageEmbedder() = default;

    ImageEmbedder(const ModelConfig& cfg, Rng& rng)
        : image_size(cfg.image_size), patch(cfg.embed_patch), d_emb(cfg.d_emb), n_tok(cfg.n_tok()) {
        patchify = nn::Conv2d<T>("embedder.patch", 3, d_emb, patch, patch, 0, rng);
        pos = nn::Param<T>("embedder.pos", {n_tok, d_emb});
        nn::init_normal(pos, rng, 0.02);
        proj = nn::Linear<T>("embedder.proj", d_emb, d_emb, rng);
    }

    nn::Var<T> forward(nn::Graph<T>& g, nn::Var<T> image) {
        auto tok = nn::chw_to_tokens(g, patchify(g, image));
        tok = nn::add(g, tok, nn::use(g, pos));
        return nn::add(g, tok, proj(g, nn::silu(g, tok)));
    }

    ImageEmbedding embed_blob(const TensorBlob& image) {
        if (image.shape.size() != 3 || image.shape[0] != 3 || image.shape[1] != image_size ||
            image.shape[2] != image_size)
            fail(ErrorCode::BadShape, "embedder expects [3," + std::to_string(image_size) + "," +
                                          std::to_string(image_size) + "], got " +
                                          shape_to_string(image.shape));
        nn::Graph<T> g(false);
        auto tok = forward(g, g.constant(nn::from_blob<T>(image)));
        return ImageEmbedding{nn::to_blob(tok->value)};
    }

    void visit(const nn::ParamVisitor<T>& v) {
        patchify.visit(v);
        v(pos);
        proj.visit(v);
    }
};

// Sidecar file holding an externally computed embedding for an image.
inline std::filesystem::path external_embedding_path(const std::filesystem::path& image_path) {
    return image_path.string() + ".emb.pdtb";
}

// Pass-through of an externally supplied [n_tok, d_emb] embedding.
ImageEmbedding external_embedding(const TensorBlob& tokens, int n_tok, int d_emb);
ImageEmbedding load_external_embedding(const std::filesystem::path& image_path, int n_tok,
                                       int d_emb);

}  // namespace posediff
