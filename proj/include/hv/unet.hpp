#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hv/attention.hpp"
#include "hv/rng.hpp"
#include "hv/weight_map.hpp"

namespace hv {

/// Two-level toy U-Net. Layout, relative to the network prefix:
///   time.fc{1,2}  conv_in
///   res0 block0 (c1, latent grid)     -- down --
///   res1 block1 (c2, half grid) res2 block2 (c2)  -- up --
///   res3 block3 (c1, after skip concat)  norm_out conv_out
/// block{0..3} are the attention sites. Pose features (c2 channels on the
/// half grid) are added at the entry of level 2.
struct UNetConfig {
    int in_channels = 4;
    int out_channels = 4;
    int c1 = 64;
    int c2 = 128;
    int groups = 8;
    int branches = 1;      ///< attention branches per site (HydraNet: N)
    int pe_conditions = 0; ///< per-condition PE tables per site (MainNet: N)
    int context_dim = 64;
    int64_t latent_h = 8;
    int64_t latent_w = 6;

    static constexpr int kSites = 4;
    static constexpr int kTimeDim = 128;
    int time_hidden() const { return 2 * c2; }
    int site_channels(int site) const { return site == 1 || site == 2 ? c2 : c1; }
    int64_t site_tokens(int site) const {
        return site == 1 || site == 2 ? (latent_h / 2) * (latent_w / 2) : latent_h * latent_w;
    }
};

/// Per-site hydra features, index = attention site.
using HydraCache = std::vector<attention::HydraKV<float>>;

/// Fresh U-Net weights under `prefix` (e.g. "main.").
void init_unet(WeightMap& w, const std::string& prefix, const UNetConfig& cfg, Rng& rng);

/// Sinusoidal embedding [b, 128] of (possibly fractional) timesteps.
Tensor timestep_embedding(const std::vector<double>& timesteps, int dim = UNetConfig::kTimeDim);

class UNet {
public:
    UNet(ParamScope<float> scope, UNetConfig cfg);

    const UNetConfig& config() const { return cfg_; }

    /// Noise prediction. `hydra` (one entry per site) switches the attention
    /// sites to fusion blocks; nullptr or empty entries give plain
    /// self-attention. `pose` is [b,c2,h/2,w/2] or invalid.
    ag::Varf forward(ag::Varf x, const std::vector<double>& timesteps, ag::Varf context,
                     const HydraCache* hydra = nullptr, ag::Varf pose = {}) const;

    /// Hydra encoding pass: condition i ([b,in,h,w]) runs through the shared
    /// layers with branch i projections. Returns the K/V of every site.
    HydraCache encode(const std::vector<ag::Varf>& conditions, const std::vector<double>& timesteps,
                      ag::Varf context) const;

private:
    enum class Mode { plain, encode };

    ag::Varf conv(const std::string& name, ag::Varf x, int stride, int padding) const;
    ag::Varf gn(const std::string& name, ag::Varf x) const;
    ag::Varf res_block(const std::string& name, ag::Varf x, ag::Varf temb) const;
    ag::Varf time_mlp(const std::vector<double>& timesteps) const;

    ParamScope<float> scope_;
    UNetConfig cfg_;
};

/// Infers a config from the weights under `prefix`. Throws InputError when
/// entries are missing.
UNetConfig infer_unet_config(const WeightMap& w, const std::string& prefix);

// Pose Guider: four 4x4 stride-2 pad-1 convolutions (16, 32, 64, 128
// channels, SiLU between), the last zero-initialised. Output spatial dims
// are H/16 x W/16.
void init_pose_guider(WeightMap& w, const std::string& prefix, Rng& rng, int out_channels = 128);
ag::Varf pose_guider(const ParamScope<float>& scope, ag::Varf pose_image);

} // namespace hv
