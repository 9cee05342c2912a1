#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Inner-loop arithmetic behind the tensor ops. Every variant in a KernelSet
// is required to produce bit-identical results to the scalar reference:
// reductions use a fixed 4-lane striped order, products accumulate in double
// and no variant is allowed to fuse multiply-adds.

namespace hv::kernels {

struct KernelSet {
    const char* name;

    /// c[m,n] (+)= a[m,k] * b[k,n], row-major, accumulated in double.
    void (*gemm)(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
                 bool accumulate);
    void (*add)(const float* a, const float* b, float* out, size_t n);
    void (*sub)(const float* a, const float* b, float* out, size_t n);
    void (*mul)(const float* a, const float* b, float* out, size_t n);
    void (*scale)(const float* a, float s, float* out, size_t n);
    double (*sum)(const float* x, size_t n);
    double (*dot)(const float* x, const float* y, size_t n);
    /// sum of (x - mean)^2
    double (*sum_sq_dev)(const float* x, size_t n, double mean);
    /// out = base + alpha*(inp - base) + beta*(ds - base), evaluated in double.
    void (*merge_residuals)(const float* base, const float* inp, const float* ds, double alpha,
                            double beta, float* out, size_t n);
};

const KernelSet& scalar_kernels();
/// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2.
const KernelSet* avx2_kernels();

/// All variants usable on this machine, scalar first.
std::vector<const KernelSet*> available_kernels();

/// Selected once from CPU features; HV_KERNELS=scalar|avx2 overrides.
const KernelSet& active();

/// Replaces the active set for the lifetime of the guard (tests, CLI flag).
class ScopedKernels {
public:
    explicit ScopedKernels(const KernelSet& ks);
    ~ScopedKernels();
    ScopedKernels(const ScopedKernels&) = delete;
    ScopedKernels& operator=(const ScopedKernels&) = delete;

private:
    const KernelSet* previous_;
};

const KernelSet* find_kernels(std::string_view name);

// Typed entry points used by the ops. The double overloads always run the
// scalar reference loops (the grad-check precision path).
void gemm(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void gemm(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void add(const float* a, const float* b, float* out, size_t n);
void add(const double* a, const double* b, double* out, size_t n);
void mul(const float* a, const float* b, float* out, size_t n);
void mul(const double* a, const double* b, double* out, size_t n);
double sum(const float* x, size_t n);
double sum(const double* x, size_t n);
double dot(const float* x, const float* y, size_t n);
double dot(const double* x, const double* y, size_t n);
double sum_sq_dev(const float* x, size_t n, double mean);
double sum_sq_dev(const double* x, size_t n, double mean);

} // namespace hv::kernels
