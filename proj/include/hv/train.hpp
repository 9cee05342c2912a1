#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hv/autograd.hpp"
#include "hv/data.hpp"
#include "hv/weight_map.hpp"

namespace hv {

struct AdamWConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Decoupled weight decay Adam. Moments are created lazily per parameter
/// name with the parameter's dims; parameters without a gradient are left
/// alone.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(WeightMap& weights, const ag::Tapef& tape);

    const AdamWConfig& config() const { return cfg_; }
    int64_t steps() const { return t_; }
    const Tensor* first_moment(const std::string& name) const;
    const Tensor* second_moment(const std::string& name) const;

private:
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::unordered_map<std::string, std::pair<Tensor, Tensor>> moments_;
};

struct TrainConfig {
    int steps = 100;
    int batch_size = 4;
    double dropout_p = 0.1;
    uint64_t seed = 0;
    bool augment = true;
    bool elongate = true;
    /// Reuse the first batch every step (overfitting sanity run).
    bool single_batch = false;
    /// Reuse the first (t, eps, dropout) draw every step; only meaningful
    /// together with single_batch.
    bool fixed_draw = false;
    AdamWConfig optimizer;
};

struct TrainLog {
    std::vector<double> losses; ///< one per step
};

/// L_LDM + backward + AdamW per step. `on_step(step, loss)` is optional.
/// A non-finite loss or activation throws NumericError naming the step.
TrainLog train_toy(WeightMap& weights, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                   const std::function<void(int, double)>& on_step = {});

/// "step,loss,lr" rows.
void write_loss_csv(const std::filesystem::path& path, const TrainLog& log, double lr);

} // namespace hv
