#pragma once

#include <cstdint>

#include "hv/tensor.hpp"

namespace hv {

/// Counter-based generator: draw i is a pure function of (seed, i), so two
/// generators with equal seeds agree on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

    uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [lo, hi).
    int64_t uniform_int(int64_t lo, int64_t hi);
    bool bernoulli(double p) { return uniform() < p; }
    /// Standard normal via Box-Muller (one output per pair of uniforms).
    double normal();

    Tensor normal_tensor(const Shape& dims, double mean = 0.0, double stddev = 1.0);
    TensorD normal_tensor_d(const Shape& dims, double mean = 0.0, double stddev = 1.0);
    Tensor uniform_tensor(const Shape& dims, double lo, double hi);

    /// Independent stream derived from this generator's seed.
    Rng fork(uint64_t stream) const;

private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

} // namespace hv
