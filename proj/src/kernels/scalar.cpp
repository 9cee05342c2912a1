#include "kernel_variants.hpp"

#include <vector>

namespace hv::kernels::detail {

namespace {

template <typename T>
void gemm_ref(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    std::vector<double> acc(static_cast<size_t>(n));
    for (int64_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const T* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double av = static_cast<double>(arow[p]);
            const T* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) acc[static_cast<size_t>(j)] += av * static_cast<double>(brow[j]);
        }
        T* crow = c + i * n;
        if (accumulate) {
            for (int64_t j = 0; j < n; ++j) crow[j] = static_cast<T>(crow[j] + static_cast<T>(acc[static_cast<size_t>(j)]));
        } else {
            for (int64_t j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[static_cast<size_t>(j)]);
        }
    }
}

template <typename T, typename F>
double striped_reduce(size_t n, F term) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    const size_t body = n - n % 4;
    for (size_t i = 0; i < body; i += 4)
        for (size_t l = 0; l < 4; ++l) lane[l] += term(i + l);
    double total = (lane[0] + lane[1]) + (lane[2] + lane[3]);
    for (size_t i = body; i < n; ++i) total += term(i);
    return total;
}

void gemm_f(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool acc) {
    gemm_ref(a, b, c, m, k, n, acc);
}

void add_f(const float* a, const float* b, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f(const float* a, const float* b, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f(const float* a, const float* b, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f(const float* a, float s, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

double sum_f(const float* x, size_t n) {
    return striped_reduce<float>(n, [x](size_t i) { return static_cast<double>(x[i]); });
}

double dot_f(const float* x, const float* y, size_t n) {
    return striped_reduce<float>(
        n, [x, y](size_t i) { return static_cast<double>(x[i]) * static_cast<double>(y[i]); });
}

double sum_sq_dev_f(const float* x, size_t n, double mean) {
    return striped_reduce<float>(n, [x, mean](size_t i) {
        const double d = static_cast<double>(x[i]) - mean;
        return d * d;
    });
}

void merge_f(const float* base, const float* inp, const float* ds, double alpha, double beta,
             float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const double b = base[i];
        const double r1 = static_cast<double>(inp[i]) - b;
        const double r2 = static_cast<double>(ds[i]) - b;
        out[i] = static_cast<float>((b + alpha * r1) + beta * r2);
    }
}

} // namespace

const KernelSet kScalar = {
    "scalar", gemm_f, add_f, sub_f, mul_f, scale_f, sum_f, dot_f, sum_sq_dev_f, merge_f,
};

void gemm_double(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                 bool accumulate) {
    gemm_ref(a, b, c, m, k, n, accumulate);
}

double sum_double(const double* x, size_t n) {
    return striped_reduce<double>(n, [x](size_t i) { return x[i]; });
}

double dot_double(const double* x, const double* y, size_t n) {
    return striped_reduce<double>(n, [x, y](size_t i) { return x[i] * y[i]; });
}

double sum_sq_dev_double(const double* x, size_t n, double mean) {
    return striped_reduce<double>(n, [x, mean](size_t i) {
        const double d = x[i] - mean;
        return d * d;
    });
}

} // namespace hv::kernels::detail
