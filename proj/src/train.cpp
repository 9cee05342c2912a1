#include "hv/train.hpp"

#include <cmath>
#include <fstream>

#include "hv/diffusion.hpp"
#include "hv/errors.hpp"
#include "hv/image_io.hpp"
#include "hv/pipeline.hpp"

namespace hv {

void AdamW::step(WeightMap& weights, const ag::Tapef& tape) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const std::string& name : tape.parameter_names()) {
        const Tensor* g = tape.parameter_grad(name);
        if (!g) continue;
        Tensor& p = weights.at(name);
        auto [it, fresh] = moments_.try_emplace(name, Tensor(p.dims()), Tensor(p.dims()));
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        for (int64_t i = 0; i < p.size(); ++i) {
            const double gi = (*g)[i];
            const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps) + cfg_.weight_decay * p[i];
            p[i] = static_cast<float>(p[i] - cfg_.lr * update);
        }
    }
}

const Tensor* AdamW::first_moment(const std::string& name) const {
    auto it = moments_.find(name);
    return it == moments_.end() ? nullptr : &it->second.first;
}

const Tensor* AdamW::second_moment(const std::string& name) const {
    auto it = moments_.find(name);
    return it == moments_.end() ? nullptr : &it->second.second;
}

TrainLog train_toy(WeightMap& weights, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                   const std::function<void(int, double)>& on_step) {
    if (cfg.steps < 1) throw InputError("training needs at least one step");
    if (cfg.batch_size < 1) throw InputError("batch size must be >= 1");
    if (dataset.empty()) throw InputError("empty training set");
    const TryOnModel model(weights);
    for (const Sample& s : dataset)
        if (static_cast<int>(s.garments.size()) != model.config().branches)
            throw InputError("training sample has " + std::to_string(s.garments.size()) + " garments, model has " +
                             std::to_string(model.config().branches) + " branches");
    const LatentCodec codec;
    const DDIMSchedule sched;
    AdamW opt(cfg.optimizer);
    Rng root(cfg.seed);
    Rng data_rng = root.fork(1), aug_rng = root.fork(2), mask_rng = root.fork(3), noise_rng = root.fork(4);
    const AugmentPolicy aug_policy;

    auto make_batch = [&]() {
        std::vector<Sample> batch;
        for (int i = 0; i < cfg.batch_size; ++i) {
            const size_t idx = cfg.single_batch ? static_cast<size_t>(i) % dataset.size()
                                                : static_cast<size_t>(data_rng.uniform_int(0, static_cast<int64_t>(dataset.size())));
            const Sample& s = dataset[idx];
            batch.push_back(cfg.augment && !cfg.single_batch ? augment(s, aug_policy, aug_rng).sample : s);
        }
        MaskOptions mo;
        mo.adapt = false;
        mo.train_rng = cfg.elongate && !cfg.single_batch ? &mask_rng : nullptr;
        Conditioning c = prepare(batch, codec, mo);
        std::vector<Tensor> persons;
        for (const Sample& s : batch) persons.push_back(s.person);
        LdmExample ex{codec.encode(stack(persons)), c.garments};
        return std::make_pair(std::move(c), std::move(ex));
    };

    std::pair<Conditioning, LdmExample> fixed;
    LdmDraw fixed_draw;
    if (cfg.single_batch) {
        fixed = make_batch();
        fixed_draw = draw_ldm(fixed.second, sched, noise_rng, cfg.dropout_p);
    }

    TrainLog log;
    for (int step = 0; step < cfg.steps; ++step) {
        auto batch = cfg.single_batch ? std::pair<Conditioning, LdmExample>{} : make_batch();
        const Conditioning& cond = cfg.single_batch ? fixed.first : batch.first;
        const LdmExample& ex = cfg.single_batch ? fixed.second : batch.second;
        const LdmDraw draw =
            cfg.single_batch && (cfg.fixed_draw || step == 0) ? fixed_draw : draw_ldm(ex, sched, noise_rng, cfg.dropout_p);
        ag::Tapef tape;
        double loss = 0.0;
        try {
            ag::Varf l = ldm_loss(tape, ex, draw, training_predictor(model, cond), sched);
            loss = l.value()[0];
            tape.backward(l);
        } catch (const NumericError& e) {
            throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
        }
        if (!std::isfinite(loss)) throw NumericError("non-finite loss at step " + std::to_string(step));
        opt.step(weights, tape);
        log.losses.push_back(loss);
        if (on_step) on_step(step, loss);
    }
    return log;
}

void write_loss_csv(const std::filesystem::path& path, const TrainLog& log, double lr) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot write " + path.string());
    os << "step,loss,lr\n";
    os.precision(9);
    for (size_t i = 0; i < log.losses.size(); ++i) os << i << "," << log.losses[i] << "," << lr << "\n";
}

} // namespace hv
