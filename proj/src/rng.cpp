#include "hv/rng.hpp"

#include <cmath>
#include <numbers>

#include "hv/errors.hpp"

namespace hv {

namespace {

uint64_t splitmix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

uint64_t Rng::next_u64() {
    const uint64_t key = splitmix64(seed_);
    return splitmix64(key ^ (counter_++ * 0xd1b54a32d192ed03ULL));
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    if (hi <= lo) throw InputError("uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi - lo);
    // Rejection keeps the draw unbiased.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return lo + static_cast<int64_t>(v % span);
}

double Rng::normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor Rng::normal_tensor(const Shape& dims, double mean, double stddev) {
    Tensor t(dims);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(mean + stddev * normal());
    return t;
}

TensorD Rng::normal_tensor_d(const Shape& dims, double mean, double stddev) {
    TensorD t(dims);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = mean + stddev * normal();
    return t;
}

Tensor Rng::uniform_tensor(const Shape& dims, double lo, double hi) {
    Tensor t(dims);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(uniform(lo, hi));
    return t;
}

Rng Rng::fork(uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

} // namespace hv
