#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hv/unet.hpp"
#include "hv/weight_map.hpp"

namespace hv {

/// Four text-slot ids standing in for an encoded prompt:
/// {upper colour, lower colour, motif, category}.
using Prompt = std::array<int64_t, 4>;

struct TryOnConfig {
    int64_t image_h = 64;
    int64_t image_w = 48;
    int branches = 1; ///< garments per sample (N)
    int c1 = 64;
    int c2 = 128;
    int text_slots = 16;
    int context_dim = 64;

    int64_t latent_h() const { return image_h / 8; }
    int64_t latent_w() const { return image_w / 8; }
    UNetConfig main_config() const;
    UNetConfig hydra_config() const;
};

/// MainNet input: noisy latent (4) + agnostic latent (4) + mask (1).
inline constexpr int kMainInputChannels = 4 + 4 + 1;
static_assert(kMainInputChannels == 9);

/// Fresh weights: "main.*" (9 -> 4, PE tables for N conditions), "hydra.*"
/// (4 -> 4, N attention branches), "pose.*", "text.table".
WeightMap init_tryon(const TryOnConfig& cfg, uint64_t seed);

/// Recovers branch count and widths from a checkpoint.
TryOnConfig infer_tryon_config(const WeightMap& w);

/// Detached per-site K/V values, so a cache computed once can be attached to
/// the tape of every denoising step.
struct KVTensors {
    std::vector<std::vector<Tensor>> keys;   ///< [site][condition]
    std::vector<std::vector<Tensor>> values; ///< [site][condition]
};

KVTensors snapshot(const HydraCache& cache);
HydraCache attach(ag::Tapef& tape, const KVTensors& kv);
/// Rows [start, start+len) of every tensor along the batch axis.
KVTensors slice_batch(const KVTensors& kv, int64_t start, int64_t len);

class TryOnModel {
public:
    explicit TryOnModel(const WeightMap& weights);

    const TryOnConfig& config() const { return cfg_; }
    const WeightMap& weights() const { return *weights_; }

    /// Text context [b, 4, context_dim].
    ag::Varf context(ag::Tapef& tape, const std::vector<Prompt>& prompts) const;

    /// One HydraNet forward at t = 0 over N garment latents [b,4,h,w].
    HydraCache encode_garments(ag::Tapef& tape, const std::vector<ag::Varf>& garments, ag::Varf context) const;

    /// MainNet noise prediction from the 9-channel input. `cache` may be
    /// null (garment-free).
    ag::Varf predict_noise(ag::Tapef& tape, ag::Varf z_t, ag::Varf agnostic_latent, ag::Varf mask_latent,
                           ag::Varf pose_image, const std::vector<double>& timesteps, ag::Varf context,
                           const HydraCache* cache) const;

    /// Number of HydraNet forwards issued so far (instrumentation).
    int hydra_calls() const { return hydra_calls_; }
    void reset_counters() { hydra_calls_ = 0; }

private:
    const WeightMap* weights_;
    TryOnConfig cfg_;
    mutable int hydra_calls_ = 0;
};

} // namespace hv
