#pragma once

#include <vector>

#include "hv/data.hpp"
#include "hv/diffusion.hpp"
#include "hv/latent_codec.hpp"
#include "hv/mask.hpp"
#include "hv/tryon_model.hpp"

namespace hv {

/// Model-ready tensors for a batch of try-on examples.
struct Conditioning {
    Tensor agnostic_latent;       ///< [b,4,h,w]
    Tensor agnostic_detail;       ///< codec detail of the agnostic image
    Tensor mask_latent;           ///< [b,1,h,w]
    Tensor pose_image;            ///< [b,3,H,W]
    std::vector<Tensor> garments; ///< N x [b,4,h,w] garment latents
    std::vector<Prompt> prompts;
    std::vector<AgnosticMask> masks;
};

struct MaskOptions {
    bool adapt = true;        ///< inference elongation from the upper garment's aspect ratio
    Rng* train_rng = nullptr; ///< when set, training-time stochastic elongation
    ElongationPolicy policy;
};

/// Builds masks from keypoints, masks the persons and encodes everything.
Conditioning prepare(const std::vector<Sample>& samples, const LatentCodec& codec, const MaskOptions& opts);

/// Noise predictor for training: HydraNet and MainNet on one tape.
NoisePredictor training_predictor(const TryOnModel& model, const Conditioning& cond);

/// Sampling-time wrapper: garments are encoded once (conditional and all-zero
/// garments in one batched HydraNet pass) and the cached K/V are reused by
/// every denoising step.
class TryOnSampler {
public:
    TryOnSampler(const TryOnModel& model, Conditioning cond, double guidance);

    /// Conditional prediction; `null_garment` uses the all-zero garment cache.
    Tensor eps(const Tensor& z_t, int t, bool null_garment = false) const;
    /// eps_u + s_g (eps_c - eps_u); the unconditional pass is skipped at s_g = 1.
    Tensor guided_eps(const Tensor& z_t, int t) const;

    double guidance() const { return guidance_; }
    const Conditioning& conditioning() const { return cond_; }

private:
    const TryOnModel* model_;
    Conditioning cond_;
    double guidance_;
    KVTensors cond_kv_, null_kv_;
};

struct TryOnOptions {
    int steps = 30;
    double guidance = 1.3;
    uint64_t seed = 0;
    bool adapt_mask = true;
};

struct TryOnResult {
    Tensor image;  ///< [b,3,H,W]
    Tensor latent; ///< final latent
    std::vector<AgnosticMask> masks;
    int hydra_calls = 0;
};

/// Mask -> adapt -> encode garments -> DDIM with CFG -> decode.
TryOnResult run_tryon(const TryOnModel& model, const std::vector<Sample>& inputs, const TryOnOptions& opts);

/// Initial noise for a sampling run.
Tensor initial_noise(uint64_t seed, const Shape& dims);

} // namespace hv
