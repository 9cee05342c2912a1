#include "hv/pipeline.hpp"

#include "hv/errors.hpp"
#include "hv/image_io.hpp"

namespace hv {

Conditioning prepare(const std::vector<Sample>& samples, const LatentCodec& codec, const MaskOptions& opts) {
    if (samples.empty()) throw InputError("no samples to prepare");
    const int64_t H = samples[0].person.dim(1), W = samples[0].person.dim(2);
    const size_t n_garments = samples[0].garments.size();
    Conditioning c;
    std::vector<Tensor> agn, masks, poses;
    std::vector<std::vector<Tensor>> garments(n_garments);
    for (const Sample& s : samples) {
        if (s.garments.size() != n_garments) throw ShapeError("samples disagree on garment count");
        AgnosticMask m = build_agnostic_mask(s.keypoints, H, W);
        if (opts.train_rng) m = elongate_train(m, *opts.train_rng, opts.policy).mask;
        if (opts.adapt && !s.garments.empty()) {
            const BBox gb = garment_bbox(s.garments[0]);
            m = elongate_infer(m, static_cast<double>(gb.width()), static_cast<double>(gb.height()), opts.policy);
        }
        agn.push_back(apply_mask(s.person, m));
        masks.push_back(m.mask);
        poses.push_back(render_pose(s.keypoints, H, W));
        for (size_t i = 0; i < n_garments; ++i) garments[i].push_back(s.garments[i]);
        c.prompts.push_back(s.prompt);
        c.masks.push_back(std::move(m));
    }
    auto enc = codec.encode_full(stack(agn));
    c.agnostic_latent = std::move(enc.latent);
    c.agnostic_detail = std::move(enc.detail);
    c.mask_latent = mask_to_latent(stack(masks));
    c.pose_image = stack(poses);
    for (auto& g : garments) c.garments.push_back(codec.encode(stack(g)));
    return c;
}

NoisePredictor training_predictor(const TryOnModel& model, const Conditioning& cond) {
    return [&model, &cond](ag::Tapef& tape, ag::Varf z_t, const std::vector<double>& t,
                           const std::vector<Tensor>& garments) {
        ag::Varf ctx = model.context(tape, cond.prompts);
        std::vector<ag::Varf> g;
        for (const Tensor& x : garments) g.push_back(tape.constant(x));
        HydraCache cache = model.encode_garments(tape, g, ctx);
        return model.predict_noise(tape, z_t, tape.constant(cond.agnostic_latent), tape.constant(cond.mask_latent),
                                   tape.constant(cond.pose_image), t, ctx, &cache);
    };
}

TryOnSampler::TryOnSampler(const TryOnModel& model, Conditioning cond, double guidance)
    : model_(&model), cond_(std::move(cond)), guidance_(guidance) {
    if (!(guidance >= 1.0)) throw InputError("guidance scale must be >= 1");
    const int64_t b = cond_.agnostic_latent.dim(0);
    ag::Tapef tape(false);
    // conditional rows first, then the all-zero garments, in one HydraNet call
    std::vector<ag::Varf> g;
    for (const Tensor& x : cond_.garments) {
        Tensor both(Shape{2 * b, x.dim(1), x.dim(2), x.dim(3)});
        std::copy(x.data(), x.data() + x.size(), both.data());
        g.push_back(tape.constant(std::move(both)));
    }
    std::vector<Prompt> prompts = cond_.prompts;
    prompts.insert(prompts.end(), cond_.prompts.begin(), cond_.prompts.end());
    const KVTensors all = snapshot(model.encode_garments(tape, g, model.context(tape, prompts)));
    cond_kv_ = slice_batch(all, 0, b);
    null_kv_ = slice_batch(all, b, b);
}

Tensor TryOnSampler::eps(const Tensor& z_t, int t, bool null_garment) const {
    ag::Tapef tape(false);
    const HydraCache cache = attach(tape, null_garment ? null_kv_ : cond_kv_);
    const std::vector<double> ts(static_cast<size_t>(z_t.dim(0)), static_cast<double>(t));
    return model_
        ->predict_noise(tape, tape.constant(z_t), tape.constant(cond_.agnostic_latent), tape.constant(cond_.mask_latent),
                        tape.constant(cond_.pose_image), ts, model_->context(tape, cond_.prompts), &cache)
        .value();
}

Tensor TryOnSampler::guided_eps(const Tensor& z_t, int t) const {
    Tensor ec = eps(z_t, t, false);
    if (guidance_ == 1.0) return ec;
    return guided_noise(ec, eps(z_t, t, true), guidance_);
}

Tensor initial_noise(uint64_t seed, const Shape& dims) {
    Rng rng(seed);
    return rng.normal_tensor(dims);
}

TryOnResult run_tryon(const TryOnModel& model, const std::vector<Sample>& inputs, const TryOnOptions& opts) {
    if (inputs.empty()) throw InputError("no try-on inputs");
    for (const Sample& s : inputs)
        if (static_cast<int>(s.garments.size()) != model.config().branches)
            throw InputError("got " + std::to_string(s.garments.size()) + " garments for a checkpoint with " +
                             std::to_string(model.config().branches) + " branches");
    static const LatentCodec codec;
    MaskOptions mo;
    mo.adapt = opts.adapt_mask;
    const int before = model.hydra_calls();
    TryOnSampler sampler(model, prepare(inputs, codec, mo), opts.guidance);
    const DDIMSchedule sched;
    const Tensor x_T = initial_noise(opts.seed, sampler.conditioning().agnostic_latent.dims());
    TryOnResult r;
    r.latent = ddim_sample([&sampler](const Tensor& z, int t) { return sampler.guided_eps(z, t); }, x_T, sched,
                           opts.steps);
    r.image = codec.decode(r.latent, sampler.conditioning().agnostic_detail);
    r.masks = sampler.conditioning().masks;
    r.hydra_calls = model.hydra_calls() - before;
    return r;
}

} // namespace hv
