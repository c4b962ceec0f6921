#include "posediff/denoiser.hpp"

namespace posediff {

TensorBlob unet_forward(ModelSetF& model, const TensorBlob& z_tilde, int t,
                        const ConditioningBundle& bundle) {
    const ModelConfig& cfg = model.cfg;
    const int64_t h = cfg.latent_size();
    if (z_tilde.shape.size() != 3 || z_tilde.shape[0] != cfg.latent_channels ||
        z_tilde.shape[1] != h || z_tilde.shape[2] != h)
        fail(ErrorCode::ShapeMismatch, "latent must be [" + std::to_string(cfg.latent_channels) +
                                           "," + std::to_string(h) + "," + std::to_string(h) +
                                           "], got " + shape_to_string(z_tilde.shape));
    if (t < 0 || t >= model.schedule.timesteps)
        fail(ErrorCode::InvalidTimestep, "t outside [0,T)");
    if (bundle.c_pose.shape.size() != 3 || bundle.c_pose.shape[0] != cfg.pose_channels() ||
        bundle.c_pose.shape[1] != h || bundle.c_pose.shape[2] != h)
        fail(ErrorCode::ShapeMismatch, "pose conditioning must be [" +
                                           std::to_string(cfg.pose_channels()) + "," +
                                           std::to_string(h) + "," + std::to_string(h) + "]");
    if (bundle.c_image.shape.size() != 2 || bundle.c_image.shape[0] != cfg.n_ctx() ||
        bundle.c_image.shape[1] != cfg.d_ctx)
        fail(ErrorCode::ShapeMismatch, "image context must be [" + std::to_string(cfg.n_ctx()) +
                                           "," + std::to_string(cfg.d_ctx) + "]");

    TensorBlob z_and_pose = TensorBlob::zeros({cfg.latent_channels + cfg.pose_channels(), h, h});
    std::copy(z_tilde.f32.begin(), z_tilde.f32.end(), z_and_pose.f32.begin());
    std::copy(bundle.c_pose.f32.begin(), bundle.c_pose.f32.end(),
              z_and_pose.f32.begin() + z_tilde.f32.size());

    nn::Graph<float> g(false);
    auto eps = model.unet.forward(g, g.constant(nn::from_blob<float>(z_and_pose)), t,
                                  g.constant(nn::from_blob<float>(bundle.c_image)));
    return nn::to_blob(eps->value);
}

}  // namespace posediff
