#include "hv/tryon_model.hpp"

#include "hv/errors.hpp"
#include "hv/rng.hpp"

namespace hv {

using ag::Varf;

UNetConfig TryOnConfig::main_config() const {
    UNetConfig u;
    u.in_channels = kMainInputChannels;
    u.c1 = c1;
    u.c2 = c2;
    u.branches = 1;
    u.pe_conditions = branches;
    u.context_dim = context_dim;
    u.latent_h = latent_h();
    u.latent_w = latent_w();
    return u;
}

UNetConfig TryOnConfig::hydra_config() const {
    UNetConfig u = main_config();
    u.in_channels = 4;
    u.branches = branches;
    u.pe_conditions = 0;
    return u;
}

WeightMap init_tryon(const TryOnConfig& cfg, uint64_t seed) {
    if (cfg.image_h % 16 != 0 || cfg.image_w % 16 != 0)
        throw InputError("image dims must be divisible by 16, got " + std::to_string(cfg.image_h) + "x" +
                         std::to_string(cfg.image_w));
    if (cfg.branches < 1) throw InputError("branch count must be >= 1");
    WeightMap w(Provenance::base);
    Rng root(seed);
    Rng r_main = root.fork(1), r_hydra = root.fork(2), r_pose = root.fork(3), r_text = root.fork(4);
    init_unet(w, "main.", cfg.main_config(), r_main);
    init_unet(w, "hydra.", cfg.hydra_config(), r_hydra);
    init_pose_guider(w, "pose.", r_pose, cfg.c2);
    w.insert("text.table", r_text.normal_tensor({cfg.text_slots, cfg.context_dim}));
    return w;
}

TryOnConfig infer_tryon_config(const WeightMap& w) {
    if (!w.contains("main.conv_in.weight") || !w.contains("hydra.conv_in.weight") || !w.contains("text.table"))
        throw InputError("checkpoint lacks main/hydra/text entries");
    const UNetConfig m = infer_unet_config(w, "main.");
    const UNetConfig h = infer_unet_config(w, "hydra.");
    if (m.in_channels != kMainInputChannels)
        throw InputError("main conv_in has " + std::to_string(m.in_channels) + " input channels, expected 9");
    if (m.pe_conditions != h.branches)
        throw InputError("checkpoint has " + std::to_string(h.branches) + " hydra branches but " +
                         std::to_string(m.pe_conditions) + " positional tables");
    TryOnConfig cfg;
    cfg.branches = h.branches;
    cfg.c1 = m.c1;
    cfg.c2 = m.c2;
    cfg.text_slots = static_cast<int>(w.at("text.table").dim(0));
    cfg.context_dim = static_cast<int>(w.at("text.table").dim(1));
    return cfg;
}

KVTensors snapshot(const HydraCache& cache) {
    KVTensors out;
    for (const auto& site : cache) {
        std::vector<Tensor> k, v;
        for (size_t i = 0; i < site.conditions(); ++i) {
            k.push_back(site.keys[i].value());
            v.push_back(site.values[i].value());
        }
        out.keys.push_back(std::move(k));
        out.values.push_back(std::move(v));
    }
    return out;
}

HydraCache attach(ag::Tapef& tape, const KVTensors& kv) {
    HydraCache cache(kv.keys.size());
    for (size_t s = 0; s < kv.keys.size(); ++s)
        for (size_t i = 0; i < kv.keys[s].size(); ++i) {
            cache[s].keys.push_back(tape.constant(kv.keys[s][i]));
            cache[s].values.push_back(tape.constant(kv.values[s][i]));
        }
    return cache;
}

namespace {

Tensor rows(const Tensor& t, int64_t start, int64_t len) {
    Shape d = t.dims();
    if (start < 0 || len <= 0 || start + len > d[0])
        throw ShapeError("slice_batch: rows [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") of " + to_string(d));
    const int64_t inner = t.size() / d[0];
    d[0] = len;
    Tensor out(d);
    std::copy(t.data() + start * inner, t.data() + (start + len) * inner, out.data());
    return out;
}

} // namespace

KVTensors slice_batch(const KVTensors& kv, int64_t start, int64_t len) {
    KVTensors out;
    for (size_t s = 0; s < kv.keys.size(); ++s) {
        std::vector<Tensor> k, v;
        for (size_t i = 0; i < kv.keys[s].size(); ++i) {
            k.push_back(rows(kv.keys[s][i], start, len));
            v.push_back(rows(kv.values[s][i], start, len));
        }
        out.keys.push_back(std::move(k));
        out.values.push_back(std::move(v));
    }
    return out;
}

TryOnModel::TryOnModel(const WeightMap& weights) : weights_(&weights), cfg_(infer_tryon_config(weights)) {}

Varf TryOnModel::context(ag::Tapef& tape, const std::vector<Prompt>& prompts) const {
    std::vector<int64_t> ids;
    for (const Prompt& p : prompts) ids.insert(ids.end(), p.begin(), p.end());
    Varf table = tape.parameter("text.table", weights_->at("text.table"));
    Varf rows = ag::gather_rows(table, ids);
    return ag::reshape(rows, Shape{static_cast<int64_t>(prompts.size()), 4, cfg_.context_dim});
}

HydraCache TryOnModel::encode_garments(ag::Tapef& tape, const std::vector<Varf>& garments, Varf context) const {
    if (static_cast<int>(garments.size()) != cfg_.branches)
        throw ShapeError("encode_garments: " + std::to_string(garments.size()) + " garments for a model with " +
                         std::to_string(cfg_.branches) + " branches");
    ++hydra_calls_;
    UNet hydra(ParamScope<float>(tape, *weights_, "hydra."), cfg_.hydra_config());
    const std::vector<double> t0(static_cast<size_t>(garments.at(0).dim(0)), 0.0);
    return hydra.encode(garments, t0, context);
}

Varf TryOnModel::predict_noise(ag::Tapef& tape, Varf z_t, Varf agnostic_latent, Varf mask_latent, Varf pose_image,
                               const std::vector<double>& timesteps, Varf context, const HydraCache* cache) const {
    Varf x = ag::concat(std::vector<Varf>{z_t, agnostic_latent, mask_latent}, 1);
    if (x.dim(1) != kMainInputChannels)
        throw InvariantError("MainNet input has " + std::to_string(x.dim(1)) + " channels, expected 9");
    Varf pose;
    if (pose_image.valid()) pose = pose_guider(ParamScope<float>(tape, *weights_, "pose."), pose_image);
    UNet main(ParamScope<float>(tape, *weights_, "main."), cfg_.main_config());
    return main.forward(x, timesteps, context, cache, pose);
}

} // namespace hv
