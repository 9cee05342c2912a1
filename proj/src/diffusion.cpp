#include "hv/diffusion.hpp"

#include <cmath>

#include "hv/errors.hpp"

namespace hv {

DDIMSchedule::DDIMSchedule(int total_steps, double beta_start, double beta_end) {
    if (total_steps < 2) throw InputError("schedule needs at least 2 timesteps");
    double ab = 1.0;
    for (int t = 0; t < total_steps; ++t) {
        const double b = beta_start + (beta_end - beta_start) * t / (total_steps - 1);
        betas_.push_back(b);
        ab *= 1.0 - b;
        alpha_bar_.push_back(ab);
    }
}

double DDIMSchedule::beta(int t) const {
    if (t < 0 || t >= total_steps()) throw InputError("timestep " + std::to_string(t) + " outside schedule");
    return betas_[static_cast<size_t>(t)];
}

double DDIMSchedule::alpha_bar(int t) const {
    if (t < 0 || t >= total_steps()) throw InputError("timestep " + std::to_string(t) + " outside schedule");
    return alpha_bar_[static_cast<size_t>(t)];
}

std::vector<int> DDIMSchedule::timesteps(int steps) const {
    const int T = total_steps();
    if (steps < 1 || steps > T)
        throw InputError("sampling steps " + std::to_string(steps) + " incompatible with schedule of " +
                         std::to_string(T));
    std::vector<int> ts;
    for (int k = 0; k < steps; ++k) ts.push_back(T - 1 - static_cast<int>(static_cast<int64_t>(k) * T / steps));
    return ts;
}

Tensor DDIMSchedule::q_sample(const Tensor& z0, const Tensor& eps, const std::vector<int>& t) const {
    require_same_dims(z0.dims(), eps.dims(), "q_sample");
    const int64_t b = z0.dim(0);
    if (static_cast<int64_t>(t.size()) != b) throw ShapeError("q_sample: one timestep per batch row required");
    const int64_t inner = z0.size() / b;
    Tensor out(z0.dims());
    for (int64_t n = 0; n < b; ++n) {
        const double ab = alpha_bar(t[static_cast<size_t>(n)]);
        const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
        for (int64_t i = n * inner; i < (n + 1) * inner; ++i)
            out[i] = static_cast<float>(a * z0[i] + s * eps[i]);
    }
    return out;
}

Tensor predict_x0(const Tensor& z_t, const Tensor& eps, double alpha_bar) {
    require_same_dims(z_t.dims(), eps.dims(), "predict_x0");
    const double a = std::sqrt(alpha_bar), s = std::sqrt(1.0 - alpha_bar);
    Tensor out(z_t.dims());
    for (int64_t i = 0; i < z_t.size(); ++i) out[i] = static_cast<float>((z_t[i] - s * eps[i]) / a);
    return out;
}

Tensor ddim_step(const DDIMSchedule& sched, const Tensor& z_t, const Tensor& eps, int t, int t_prev) {
    require_same_dims(z_t.dims(), eps.dims(), "ddim_step");
    const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar_prev(t_prev);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    const double a_prev = std::sqrt(ab_prev), s_prev = std::sqrt(1.0 - ab_prev);
    Tensor out(z_t.dims());
    for (int64_t i = 0; i < z_t.size(); ++i) {
        const double x0 = (z_t[i] - s * eps[i]) / a;
        out[i] = static_cast<float>(a_prev * x0 + s_prev * eps[i]);
    }
    if (!out.all_finite()) throw NumericError("ddim step at t=" + std::to_string(t) + " produced non-finite latent");
    return out;
}

Tensor guided_noise(const Tensor& eps_cond, const Tensor& eps_uncond, double s_g) {
    require_same_dims(eps_cond.dims(), eps_uncond.dims(), "guided_noise");
    Tensor out(eps_cond.dims());
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(eps_uncond[i] + s_g * (static_cast<double>(eps_cond[i]) - eps_uncond[i]));
    return out;
}

Tensor ddim_sample(const EpsFn& eps_fn, const Tensor& x_T, const DDIMSchedule& sched, int steps, SampleTrace* trace) {
    const std::vector<int> ts = sched.timesteps(steps);
    Tensor z = x_T;
    if (trace) trace->timesteps = ts;
    for (size_t k = 0; k < ts.size(); ++k) {
        if (trace) trace->latents.push_back(z);
        const int t_prev = k + 1 < ts.size() ? ts[k + 1] : -1;
        Tensor eps = eps_fn(z, ts[k]);
        z = ddim_step(sched, z, eps, ts[k], t_prev);
    }
    if (trace) trace->latents.push_back(z);
    return z;
}

LdmDraw draw_ldm(const LdmExample& ex, const DDIMSchedule& sched, Rng& rng, double dropout_p) {
    if (!(dropout_p >= 0.0 && dropout_p <= 1.0)) throw InputError("dropout probability must lie in [0,1]");
    const int64_t b = ex.z0.dim(0);
    LdmDraw d;
    for (int64_t n = 0; n < b; ++n) d.t.push_back(static_cast<int>(rng.uniform_int(0, sched.total_steps())));
    d.eps = rng.normal_tensor(ex.z0.dims());
    for (int64_t n = 0; n < b; ++n) d.dropped.push_back(rng.bernoulli(dropout_p));
    return d;
}

std::vector<Tensor> apply_outfitting_dropout(const std::vector<Tensor>& garments, const std::vector<bool>& dropped) {
    std::vector<Tensor> out = garments;
    for (Tensor& g : out) {
        const int64_t b = g.dim(0);
        if (static_cast<int64_t>(dropped.size()) != b) throw ShapeError("dropout flags do not match batch");
        const int64_t inner = g.size() / b;
        for (int64_t n = 0; n < b; ++n)
            if (dropped[static_cast<size_t>(n)]) std::fill(g.data() + n * inner, g.data() + (n + 1) * inner, 0.0f);
    }
    return out;
}

ag::Varf ldm_loss(ag::Tapef& tape, const LdmExample& ex, const LdmDraw& draw, const NoisePredictor& predict,
                  const DDIMSchedule& sched) {
    Tensor z_t = sched.q_sample(ex.z0, draw.eps, draw.t);
    std::vector<double> t(draw.t.begin(), draw.t.end());
    ag::Varf pred = predict(tape, tape.constant(std::move(z_t)), t, apply_outfitting_dropout(ex.garments, draw.dropped));
    return ag::mse(pred, tape.constant(draw.eps));
}

ag::Varf ldm_loss(ag::Tapef& tape, const LdmExample& ex, const NoisePredictor& predict, const DDIMSchedule& sched,
                  Rng& rng, double dropout_p) {
    return ldm_loss(tape, ex, draw_ldm(ex, sched, rng, dropout_p), predict, sched);
}

} // namespace hv
