#include <atomic>
#include <cstdlib>
#include <string>

#include "hv/errors.hpp"
#include "kernel_variants.hpp"

namespace hv::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(HV_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

const KernelSet* select_default() {
    if (const char* env = std::getenv("HV_KERNELS")) {
        if (const KernelSet* ks = find_kernels(env)) return ks;
        throw InputError(std::string("HV_KERNELS names an unavailable kernel set: ") + env);
    }
    if (const KernelSet* ks = avx2_kernels()) return ks;
    return &scalar_kernels();
}

std::atomic<const KernelSet*>& current() {
    static std::atomic<const KernelSet*> ks{select_default()};
    return ks;
}

} // namespace

const KernelSet& scalar_kernels() { return detail::kScalar; }

const KernelSet* avx2_kernels() {
#if defined(HV_HAVE_AVX2)
    static const bool ok = cpu_has_avx2();
    return ok ? &detail::kAvx2 : nullptr;
#else
    return nullptr;
#endif
}

std::vector<const KernelSet*> available_kernels() {
    std::vector<const KernelSet*> out{&scalar_kernels()};
    if (const KernelSet* ks = avx2_kernels()) out.push_back(ks);
    return out;
}

const KernelSet* find_kernels(std::string_view name) {
    for (const KernelSet* ks : available_kernels())
        if (name == ks->name) return ks;
    return nullptr;
}

const KernelSet& active() { return *current().load(std::memory_order_acquire); }

ScopedKernels::ScopedKernels(const KernelSet& ks) : previous_(current().exchange(&ks)) {}

ScopedKernels::~ScopedKernels() { current().store(previous_); }

void gemm(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    active().gemm(a, b, c, m, k, n, accumulate);
}
void gemm(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    detail::gemm_double(a, b, c, m, k, n, accumulate);
}
void add(const float* a, const float* b, float* out, size_t n) { active().add(a, b, out, n); }
void add(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void mul(const float* a, const float* b, float* out, size_t n) { active().mul(a, b, out, n); }
void mul(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
double sum(const float* x, size_t n) { return active().sum(x, n); }
double sum(const double* x, size_t n) { return detail::sum_double(x, n); }
double dot(const float* x, const float* y, size_t n) { return active().dot(x, y, n); }
double dot(const double* x, const double* y, size_t n) { return detail::dot_double(x, y, n); }
double sum_sq_dev(const float* x, size_t n, double mean) { return active().sum_sq_dev(x, n, mean); }
double sum_sq_dev(const double* x, size_t n, double mean) { return detail::sum_sq_dev_double(x, n, mean); }

} // namespace hv::kernels
