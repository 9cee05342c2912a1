#include "kernel_variants.hpp"

#include <immintrin.h>

#include <vector>

// Compiled with -mavx2 only; dispatch guarantees these run on AVX2 hardware.
// FMA stays disabled so each lane rounds exactly like the scalar reference.

namespace hv::kernels::detail {

namespace {

inline __m256d load4_pd(const float* p) { return _mm256_cvtps_pd(_mm_loadu_ps(p)); }

inline double combine_lanes(__m256d v) {
    alignas(32) double l[4];
    _mm256_store_pd(l, v);
    return (l[0] + l[1]) + (l[2] + l[3]);
}

void gemm_avx2(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        int64_t j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
            for (int64_t p = 0; p < k; ++p) {
                const __m256d av = _mm256_set1_pd(static_cast<double>(arow[p]));
                const float* bp = b + p * n + j;
                s0 = _mm256_add_pd(s0, _mm256_mul_pd(av, load4_pd(bp)));
                s1 = _mm256_add_pd(s1, _mm256_mul_pd(av, load4_pd(bp + 4)));
                s2 = _mm256_add_pd(s2, _mm256_mul_pd(av, load4_pd(bp + 8)));
                s3 = _mm256_add_pd(s3, _mm256_mul_pd(av, load4_pd(bp + 12)));
            }
            __m256 lo = _mm256_set_m128(_mm256_cvtpd_ps(s1), _mm256_cvtpd_ps(s0));
            __m256 hi = _mm256_set_m128(_mm256_cvtpd_ps(s3), _mm256_cvtpd_ps(s2));
            if (accumulate) {
                lo = _mm256_add_ps(_mm256_loadu_ps(crow + j), lo);
                hi = _mm256_add_ps(_mm256_loadu_ps(crow + j + 8), hi);
            }
            _mm256_storeu_ps(crow + j, lo);
            _mm256_storeu_ps(crow + j + 8, hi);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d s = _mm256_setzero_pd();
            for (int64_t p = 0; p < k; ++p) {
                const __m256d av = _mm256_set1_pd(static_cast<double>(arow[p]));
                s = _mm256_add_pd(s, _mm256_mul_pd(av, load4_pd(b + p * n + j)));
            }
            __m128 r = _mm256_cvtpd_ps(s);
            if (accumulate) r = _mm_add_ps(_mm_loadu_ps(crow + j), r);
            _mm_storeu_ps(crow + j, r);
        }
        for (; j < n; ++j) {
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p)
                s += static_cast<double>(arow[p]) * static_cast<double>(b[p * n + j]);
            crow[j] = accumulate ? crow[j] + static_cast<float>(s) : static_cast<float>(s);
        }
    }
}

template <typename Op>
void elementwise(const float* a, const float* b, float* out, size_t n, Op op) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, op(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) {
        __m256 r = op(_mm256_set1_ps(a[i]), _mm256_set1_ps(b[i]));
        out[i] = _mm256_cvtss_f32(r);
    }
}

void add_avx2(const float* a, const float* b, float* out, size_t n) {
    elementwise(a, b, out, n, [](__m256 x, __m256 y) { return _mm256_add_ps(x, y); });
}

void sub_avx2(const float* a, const float* b, float* out, size_t n) {
    elementwise(a, b, out, n, [](__m256 x, __m256 y) { return _mm256_sub_ps(x, y); });
}

void mul_avx2(const float* a, const float* b, float* out, size_t n) {
    elementwise(a, b, out, n, [](__m256 x, __m256 y) { return _mm256_mul_ps(x, y); });
}

void scale_avx2(const float* a, float s, float* out, size_t n) {
    const __m256 sv = _mm256_set1_ps(s);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), sv));
    for (; i < n; ++i) out[i] = a[i] * s;
}

double sum_avx2(const float* x, size_t n) {
    __m256d lanes = _mm256_setzero_pd();
    const size_t body = n - n % 4;
    for (size_t i = 0; i < body; i += 4) lanes = _mm256_add_pd(lanes, load4_pd(x + i));
    double total = combine_lanes(lanes);
    for (size_t i = body; i < n; ++i) total += static_cast<double>(x[i]);
    return total;
}

double dot_avx2(const float* x, const float* y, size_t n) {
    __m256d lanes = _mm256_setzero_pd();
    const size_t body = n - n % 4;
    for (size_t i = 0; i < body; i += 4)
        lanes = _mm256_add_pd(lanes, _mm256_mul_pd(load4_pd(x + i), load4_pd(y + i)));
    double total = combine_lanes(lanes);
    for (size_t i = body; i < n; ++i) total += static_cast<double>(x[i]) * static_cast<double>(y[i]);
    return total;
}

double sum_sq_dev_avx2(const float* x, size_t n, double mean) {
    const __m256d mv = _mm256_set1_pd(mean);
    __m256d lanes = _mm256_setzero_pd();
    const size_t body = n - n % 4;
    for (size_t i = 0; i < body; i += 4) {
        const __m256d d = _mm256_sub_pd(load4_pd(x + i), mv);
        lanes = _mm256_add_pd(lanes, _mm256_mul_pd(d, d));
    }
    double total = combine_lanes(lanes);
    for (size_t i = body; i < n; ++i) {
        const double d = static_cast<double>(x[i]) - mean;
        total += d * d;
    }
    return total;
}

void merge_avx2(const float* base, const float* inp, const float* ds, double alpha, double beta,
                float* out, size_t n) {
    const __m256d av = _mm256_set1_pd(alpha), bv = _mm256_set1_pd(beta);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d b = load4_pd(base + i);
        const __m256d r1 = _mm256_sub_pd(load4_pd(inp + i), b);
        const __m256d r2 = _mm256_sub_pd(load4_pd(ds + i), b);
        const __m256d w = _mm256_add_pd(_mm256_add_pd(b, _mm256_mul_pd(av, r1)), _mm256_mul_pd(bv, r2));
        _mm_storeu_ps(out + i, _mm256_cvtpd_ps(w));
    }
    for (; i < n; ++i) {
        const double b = base[i];
        out[i] = static_cast<float>((b + alpha * (static_cast<double>(inp[i]) - b)) +
                                    beta * (static_cast<double>(ds[i]) - b));
    }
}

} // namespace

const KernelSet kAvx2 = {
    "avx2", gemm_avx2, add_avx2, sub_avx2, mul_avx2, scale_avx2, sum_avx2, dot_avx2, sum_sq_dev_avx2, merge_avx2,
};

} // namespace hv::kernels::detail
