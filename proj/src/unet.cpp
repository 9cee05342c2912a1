#include "hv/unet.hpp"

#include <cmath>

#include "hv/errors.hpp"

namespace hv {

using ag::Varf;

namespace {

Tensor normal_tensor(Rng& rng, Shape dims, double std) { return rng.normal_tensor(dims, 0.0, std); }

void add_conv(WeightMap& w, const std::string& name, int cout, int cin, int k, Rng& rng, double gain = 1.0) {
    const double std = gain / std::sqrt(static_cast<double>(cin * k * k));
    w.insert(name + ".weight", normal_tensor(rng, {cout, cin, k, k}, std));
    w.insert(name + ".bias", Tensor(Shape{cout}));
}

void add_norm(WeightMap& w, const std::string& name, int c) {
    w.insert(name + ".gamma", Tensor(Shape{c}, 1.0f));
    w.insert(name + ".beta", Tensor(Shape{c}));
}

void add_linear(WeightMap& w, const std::string& name, int in, int out, Rng& rng) {
    w.insert(name + ".weight", normal_tensor(rng, {in, out}, 1.0 / std::sqrt(static_cast<double>(in))));
    w.insert(name + ".bias", Tensor(Shape{out}));
}

void add_res(WeightMap& w, const std::string& name, int cin, int cout, int temb, Rng& rng) {
    add_norm(w, name + ".norm1", cin);
    add_conv(w, name + ".conv1", cout, cin, 3, rng);
    add_linear(w, name + ".temb", temb, cout, rng);
    add_norm(w, name + ".norm2", cout);
    add_conv(w, name + ".conv2", cout, cout, 3, rng, 0.5);
    if (cin != cout) add_conv(w, name + ".skip", cout, cin, 1, rng);
}

Varf to_tokens(Varf x) {
    const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    return ag::permute(ag::reshape(x, Shape{b, c, h * w}), {0, 2, 1});
}

Varf from_tokens(Varf x, int64_t h, int64_t w) {
    const int64_t b = x.dim(0), c = x.dim(2);
    return ag::reshape(ag::permute(x, {0, 2, 1}), Shape{b, c, h, w});
}


int count_indexed(const WeightMap& w, const std::string& stem, const std::string& suffix) {
    int n = 0;
    while (w.contains(stem + std::to_string(n) + suffix)) ++n;
    return n;
}

} // namespace

void init_unet(WeightMap& w, const std::string& p, const UNetConfig& cfg, Rng& rng) {
    const int temb = cfg.time_hidden();
    add_linear(w, p + "time.fc1", UNetConfig::kTimeDim, temb, rng);
    add_linear(w, p + "time.fc2", temb, temb, rng);
    add_conv(w, p + "conv_in", cfg.c1, cfg.in_channels, 3, rng);
    for (int site = 0; site < UNetConfig::kSites; ++site) {
        const int c = cfg.site_channels(site);
        const std::string idx = std::to_string(site);
        switch (site) {
        case 0: add_res(w, p + "res0", cfg.c1, cfg.c1, temb, rng); break;
        case 1:
            add_conv(w, p + "down", cfg.c2, cfg.c1, 3, rng);
            add_res(w, p + "res1", cfg.c2, cfg.c2, temb, rng);
            break;
        case 2: add_res(w, p + "res2", cfg.c2, cfg.c2, temb, rng); break;
        case 3:
            add_conv(w, p + "up", cfg.c2, cfg.c2, 3, rng);
            add_res(w, p + "res3", cfg.c2 + cfg.c1, cfg.c1, temb, rng);
            break;
        }
        attention::BlockSpec spec;
        spec.channels = c;
        spec.branches = cfg.branches;
        spec.pe_conditions = cfg.pe_conditions;
        spec.pe_rows = static_cast<int>(cfg.site_tokens(site));
        spec.context_dim = cfg.context_dim;
        attention::init_block(w, p + "block" + idx + ".", spec, rng);
    }
    add_norm(w, p + "norm_out", cfg.c1);
    add_conv(w, p + "conv_out", cfg.out_channels, cfg.c1, 3, rng, 0.1);
}

Tensor timestep_embedding(const std::vector<double>& timesteps, int dim) {
    const int half = dim / 2;
    Tensor out(Shape{static_cast<int64_t>(timesteps.size()), dim});
    for (size_t n = 0; n < timesteps.size(); ++n)
        for (int k = 0; k < half; ++k) {
            const double freq = std::exp(-std::log(10000.0) * k / half);
            const double a = timesteps[n] * freq;
            out[static_cast<int64_t>(n) * dim + k] = static_cast<float>(std::sin(a));
            out[static_cast<int64_t>(n) * dim + half + k] = static_cast<float>(std::cos(a));
        }
    return out;
}

UNet::UNet(ParamScope<float> scope, UNetConfig cfg) : scope_(std::move(scope)), cfg_(cfg) {}

Varf UNet::conv(const std::string& name, Varf x, int stride, int padding) const {
    return ag::add_channel(ag::conv2d(x, scope_(name + ".weight"), stride, padding), scope_(name + ".bias"));
}

Varf UNet::gn(const std::string& name, Varf x) const {
    return ag::group_norm(x, cfg_.groups, scope_(name + ".gamma"), scope_(name + ".beta"), attention::kNormEps);
}

Varf UNet::res_block(const std::string& name, Varf x, Varf temb) const {
    Varf h = conv(name + ".conv1", ag::silu(gn(name + ".norm1", x)), 1, 1);
    Varf t = ag::add_broadcast(ag::matmul(temb, scope_(name + ".temb.weight")), scope_(name + ".temb.bias"));
    h = ag::add_channel(h, t);
    h = conv(name + ".conv2", ag::silu(gn(name + ".norm2", h)), 1, 1);
    Varf skip = scope_.has(name + ".skip.weight") ? conv(name + ".skip", x, 1, 0) : x;
    return ag::add(skip, h);
}

Varf UNet::time_mlp(const std::vector<double>& timesteps) const {
    Varf e = scope_.tape().constant(timestep_embedding(timesteps));
    e = ag::add_broadcast(ag::matmul(e, scope_("time.fc1.weight")), scope_("time.fc1.bias"));
    e = ag::add_broadcast(ag::matmul(ag::silu(e), scope_("time.fc2.weight")), scope_("time.fc2.bias"));
    return ag::silu(e);
}

Varf UNet::forward(Varf x, const std::vector<double>& timesteps, Varf context, const HydraCache* hydra,
                   Varf pose) const {
    if (x.dims().size() != 4 || x.dim(1) != cfg_.in_channels)
        throw ShapeError("unet input must be [b," + std::to_string(cfg_.in_channels) + ",h,w], got " +
                         to_string(x.dims()));
    if (static_cast<int64_t>(timesteps.size()) != x.dim(0))
        throw ShapeError("unet: " + std::to_string(timesteps.size()) + " timesteps for batch " +
                         std::to_string(x.dim(0)));
    if (hydra && !hydra->empty() && hydra->size() != UNetConfig::kSites)
        throw ShapeError("unet: hydra cache has " + std::to_string(hydra->size()) + " sites, expected " +
                         std::to_string(UNetConfig::kSites));
    const attention::HydraKV<float> none;
    auto site = [&](int s, Varf h) {
        const int64_t hh = h.dim(2), ww = h.dim(3);
        const auto& kv = hydra && !hydra->empty() ? (*hydra)[static_cast<size_t>(s)] : none;
        Varf tokens = attention::fusion_block(scope_.sub("block" + std::to_string(s)), to_tokens(h), kv, context);
        return from_tokens(tokens, hh, ww);
    };

    Varf temb = time_mlp(timesteps);
    Varf h = conv("conv_in", x, 1, 1);
    Varf skip = site(0, res_block("res0", h, temb));
    h = conv("down", skip, 2, 1);
    if (pose.valid()) {
        require_same_dims(h.dims(), pose.dims(), "pose injection");
        h = ag::add(h, pose);
    }
    h = site(1, res_block("res1", h, temb));
    h = site(2, res_block("res2", h, temb));
    h = conv("up", ag::upsample_nearest2x(h), 1, 1);
    h = ag::concat(std::vector<Varf>{h, skip}, 1);
    h = site(3, res_block("res3", h, temb));
    return conv("conv_out", ag::silu(gn("norm_out", h)), 1, 1);
}

HydraCache UNet::encode(const std::vector<Varf>& conditions, const std::vector<double>& timesteps,
                        Varf context) const {
    const size_t n = conditions.size();
    int branches = 0;
    while (scope_.has("block0.attn.branch" + std::to_string(branches) + ".q")) ++branches;
    if (n == 0 || static_cast<int>(n) != branches)
        throw ShapeError("hydra encode: " + std::to_string(n) + " conditions for " + std::to_string(branches) +
                         " branches");
    const int64_t b = conditions[0].dim(0);
    for (const Varf& c : conditions)
        if (c.dims() != conditions[0].dims())
            throw ShapeError("hydra encode: condition dims " + to_string(c.dims()) + " vs " +
                             to_string(conditions[0].dims()));
    if (static_cast<int64_t>(timesteps.size()) != b)
        throw ShapeError("hydra encode: timesteps/batch mismatch");

    // All conditions share the non-attention layers, so they travel stacked
    // along the batch axis and are split only at the attention sites.
    HydraCache cache(UNetConfig::kSites);
    auto site = [&](int s, Varf h) {
        const int64_t hh = h.dim(2), ww = h.dim(3);
        Varf tokens = to_tokens(h);
        std::vector<Varf> parts;
        for (size_t i = 0; i < n; ++i)
            parts.push_back(n == 1 ? tokens : ag::slice(tokens, 0, static_cast<int64_t>(i) * b, b));
        auto enc = attention::hydra_encode(scope_.sub("block" + std::to_string(s)), parts, context);
        cache[static_cast<size_t>(s)] = enc.kv;
        Varf merged = n == 1 ? enc.outputs[0] : ag::concat(enc.outputs, 0);
        return from_tokens(merged, hh, ww);
    };

    std::vector<double> ts;
    for (size_t i = 0; i < n; ++i) ts.insert(ts.end(), timesteps.begin(), timesteps.end());
    Varf temb = time_mlp(ts);
    Varf x = n == 1 ? conditions[0] : ag::concat(conditions, 0);
    Varf h = conv("conv_in", x, 1, 1);
    Varf skip = site(0, res_block("res0", h, temb));
    h = conv("down", skip, 2, 1);
    h = site(1, res_block("res1", h, temb));
    h = site(2, res_block("res2", h, temb));
    h = conv("up", ag::upsample_nearest2x(h), 1, 1);
    h = ag::concat(std::vector<Varf>{h, skip}, 1);
    site(3, res_block("res3", h, temb));
    return cache;
}

UNetConfig infer_unet_config(const WeightMap& w, const std::string& p) {
    UNetConfig cfg;
    const Tensor& cin = w.at(p + "conv_in.weight");
    cfg.c1 = static_cast<int>(cin.dim(0));
    cfg.in_channels = static_cast<int>(cin.dim(1));
    cfg.out_channels = static_cast<int>(w.at(p + "conv_out.weight").dim(0));
    cfg.c2 = static_cast<int>(w.at(p + "down.weight").dim(0));
    cfg.branches = count_indexed(w, p + "block0.attn.branch", ".q");
    cfg.pe_conditions = count_indexed(w, p + "block0.pe.cond", "");
    cfg.context_dim = w.contains(p + "block0.xattn.k") ? static_cast<int>(w.at(p + "block0.xattn.k").dim(0)) : 0;
    if (cfg.branches == 0) throw InputError("no attention branches under '" + p + "'");
    return cfg;
}

void init_pose_guider(WeightMap& w, const std::string& p, Rng& rng, int out_channels) {
    const int ch[5] = {3, 16, 32, 64, out_channels};
    for (int k = 0; k < 4; ++k) {
        const std::string name = p + "conv" + std::to_string(k);
        if (k < 3) {
            add_conv(w, name, ch[k + 1], ch[k], 4, rng);
        } else {
            w.insert(name + ".weight", Tensor(Shape{ch[k + 1], ch[k], 4, 4}));
            w.insert(name + ".bias", Tensor(Shape{ch[k + 1]}));
        }
    }
}

Varf pose_guider(const ParamScope<float>& scope, Varf pose_image) {
    const Shape& d = pose_image.dims();
    if (d.size() != 4 || d[1] != 3 || d[2] % 16 != 0 || d[3] % 16 != 0)
        throw ShapeError("pose guider expects [b,3,H,W] with H,W divisible by 16, got " + to_string(d));
    Varf h = pose_image;
    for (int k = 0; k < 4; ++k) {
        const std::string name = "conv" + std::to_string(k);
        h = ag::add_channel(ag::conv2d(h, scope(name + ".weight"), 2, 1), scope(name + ".bias"));
        if (k < 3) h = ag::silu(h);
    }
    return h;
}

} // namespace hv
