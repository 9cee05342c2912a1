#pragma once

#include <functional>
#include <vector>

#include "hv/autograd.hpp"
#include "hv/rng.hpp"
#include "hv/tensor.hpp"

namespace hv {

/// Linear-beta schedule over T steps; timestep index t in [0, T).
class DDIMSchedule {
public:
    explicit DDIMSchedule(int total_steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

    int total_steps() const { return static_cast<int>(alpha_bar_.size()); }
    double beta(int t) const;
    /// Cumulative product of (1 - beta) up to and including t.
    double alpha_bar(int t) const;
    /// alpha_bar at the step after the last sampling step: 1 (clean).
    double alpha_bar_prev(int t_prev) const { return t_prev < 0 ? 1.0 : alpha_bar(t_prev); }

    /// Descending sub-schedule t_k = T-1 - floor(k*T/steps), k = 0..steps-1.
    /// Throws InputError unless 1 <= steps <= T.
    std::vector<int> timesteps(int steps) const;

    /// z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps, per batch row timestep.
    Tensor q_sample(const Tensor& z0, const Tensor& eps, const std::vector<int>& t) const;

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bar_;
};

/// x0 estimate (z_t - sqrt(1-ab) eps) / sqrt(ab).
Tensor predict_x0(const Tensor& z_t, const Tensor& eps, double alpha_bar);

/// Deterministic (eta = 0) update from timestep t to t_prev (-1 = clean).
Tensor ddim_step(const DDIMSchedule& sched, const Tensor& z_t, const Tensor& eps, int t, int t_prev);

/// eps_u + s_g (eps_c - eps_u). Callers skip the unconditional pass at s_g = 1.
Tensor guided_noise(const Tensor& eps_cond, const Tensor& eps_uncond, double s_g);

using EpsFn = std::function<Tensor(const Tensor& z_t, int t)>;

struct SampleTrace {
    std::vector<int> timesteps;
    std::vector<Tensor> latents; ///< z before each step, then the final latent
};

/// Runs the sub-schedule from x_T. `trace` (optional) records every latent.
Tensor ddim_sample(const EpsFn& eps_fn, const Tensor& x_T, const DDIMSchedule& sched, int steps,
                   SampleTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Training objective

/// Latent-space training example: clean target latent and N garment latents.
struct LdmExample {
    Tensor z0;                    ///< [b,4,h,w]
    std::vector<Tensor> garments; ///< N x [b,4,h,w]
};

/// Receives the noisy latent, per-row timesteps and the garment latents as
/// they should enter HydraNet (already dropped out to zero where drawn).
using NoisePredictor =
    std::function<ag::Varf(ag::Tapef& tape, ag::Varf z_t, const std::vector<double>& t, const std::vector<Tensor>& garments)>;

struct LdmDraw {
    std::vector<int> t;
    Tensor eps;
    std::vector<bool> dropped; ///< per batch row
};

/// Draws t ~ U{0..T-1}, eps ~ N(0,1) and the per-row outfitting dropout.
LdmDraw draw_ldm(const LdmExample& ex, const DDIMSchedule& sched, Rng& rng, double dropout_p);

/// mean((eps - predict(z_t))^2) with z_t = q_sample(z0, eps, t). Garment
/// latents of dropped rows are replaced by the all-zero latent.
ag::Varf ldm_loss(ag::Tapef& tape, const LdmExample& ex, const LdmDraw& draw, const NoisePredictor& predict,
                  const DDIMSchedule& sched);

/// Convenience: draw then evaluate.
ag::Varf ldm_loss(ag::Tapef& tape, const LdmExample& ex, const NoisePredictor& predict, const DDIMSchedule& sched,
                  Rng& rng, double dropout_p = 0.1);

/// Garment latents with rows flagged in `dropped` zeroed.
std::vector<Tensor> apply_outfitting_dropout(const std::vector<Tensor>& garments, const std::vector<bool>& dropped);

} // namespace hv
