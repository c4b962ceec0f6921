#include "posediff/models/model_set.hpp"

#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace posediff {

ImageEmbedding external_embedding(const TensorBlob& tokens, int n_tok, int d_emb) {
    if (tokens.shape.size() != 2 || tokens.shape[0] != n_tok || tokens.shape[1] != d_emb)
        fail(ErrorCode::BadShape, "external embedding must be [" + std::to_string(n_tok) + "," +
                                      std::to_string(d_emb) + "], got " +
                                      shape_to_string(tokens.shape));
    return ImageEmbedding{tokens};
}

ImageEmbedding load_external_embedding(const fs::path& image_path, int n_tok, int d_emb) {
    const fs::path emb = external_embedding_path(image_path);
    if (!fs::exists(emb))
        fail(ErrorCode::MissingExternalEmbedding, "no embedding file at " + emb.string());
    return external_embedding(read_blob(emb), n_tok, d_emb);
}

LatentEmbedding patchify_latent(const TensorBlob& latent, int patch) {
    if (latent.shape.size() != 3) fail(ErrorCode::BadShape, "latent must be [C,h,w]");
    const int64_t c = latent.shape[0], h = latent.shape[1], w = latent.shape[2];
    if (h % patch != 0 || w % patch != 0)
        fail(ErrorCode::BadShape, "latent dims not divisible by patch");
    const int64_t py = h / patch, px = w / patch;
    const int64_t d = c * patch * patch;
    TensorBlob tokens = TensorBlob::zeros({py * px, d});
    for (int64_t ty = 0; ty < py; ty++)
        for (int64_t tx = 0; tx < px; tx++) {
            const int64_t tok = ty * px + tx;
            int64_t k = 0;
            for (int64_t ch = 0; ch < c; ch++)
                for (int64_t y = 0; y < patch; y++)
                    for (int64_t x = 0; x < patch; x++)
                        tokens.f32[static_cast<size_t>(tok * d + k++)] =
                            latent.chw(ch, ty * patch + y, tx * patch + x);
        }
    return LatentEmbedding{tokens};
}

namespace {

std::string blob_name(const std::string& param_name) { return param_name + ".pdtb"; }

}  // namespace

void save_checkpoint(ModelSetF& model, const fs::path& dir,
                     const std::map<std::string, std::string>& extra) {
    fs::create_directories(dir / "blobs");
    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    if (!manifest) fail(ErrorCode::IoError, "cannot write manifest under " + dir.string());
    manifest << "posediff-checkpoint v1\n";
    for (const auto& [k, v] : model.cfg.to_map()) manifest << k << " = " << v << "\n";
    manifest << "latent.shift = " << model.latent_shift << "\n";
    manifest << "latent.scale = " << model.latent_scale << "\n";
    for (const auto& [k, v] : extra) manifest << k << " = " << v << "\n";

    model.visit_all([&](nn::Param<float>& p) {
        const TensorBlob blob = nn::to_blob(p.value);
        write_blob(dir / "blobs" / blob_name(p.name), blob);
        manifest << "part " << p.name << " blobs/" << blob_name(p.name) << "\n";
    });
}

Checkpoint load_checkpoint(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.txt";
    std::ifstream manifest(manifest_path);
    if (!manifest) fail(ErrorCode::CheckpointMissing, "no manifest at " + manifest_path.string());

    std::string header;
    std::getline(manifest, header);
    if (header != "posediff-checkpoint v1")
        fail(ErrorCode::CheckpointMissing, "unrecognized checkpoint header in " +
                                               manifest_path.string());

    std::map<std::string, std::string> kv;
    std::map<std::string, std::string> parts;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        if (line.rfind("part ", 0) == 0) {
            std::istringstream ss(line.substr(5));
            std::string name, rel;
            ss >> name >> rel;
            parts[name] = rel;
            continue;
        }
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }

    Checkpoint ckpt{ModelSetF::fresh(ModelConfig::from_map(kv), /*seed=*/0), kv};
    if (kv.count("latent.shift")) ckpt.model.latent_shift = std::stof(kv.at("latent.shift"));
    if (kv.count("latent.scale")) ckpt.model.latent_scale = std::stof(kv.at("latent.scale"));
    ckpt.model.visit_all([&](nn::Param<float>& p) {
        auto it = parts.find(p.name);
        if (it == parts.end())
            fail(ErrorCode::CheckpointMissing, "manifest lacks parameter " + p.name);
        const TensorBlob blob = read_blob(dir / it->second);
        if (blob.numel() != p.value.numel())
            fail(ErrorCode::ShapeMismatch, "parameter " + p.name + " has wrong size on disk");
        for (int64_t i = 0; i < p.value.numel(); i++) p.value[i] = blob.f32[static_cast<size_t>(i)];
    });
    return ckpt;
}

std::string checkpoint_id(const fs::path& dir) {
    std::ifstream manifest(dir / "manifest.txt", std::ios::binary);
    if (!manifest) fail(ErrorCode::CheckpointMissing, "no manifest under " + dir.string());
    std::stringstream ss;
    ss << manifest.rdbuf();
    const std::string text = ss.str();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace posediff
