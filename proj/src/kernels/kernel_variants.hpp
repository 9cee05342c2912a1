#pragma once

#include "hv/kernels.hpp"

namespace hv::kernels::detail {

extern const KernelSet kScalar;
#if defined(HV_HAVE_AVX2)
extern const KernelSet kAvx2;
#endif

void gemm_double(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                 bool accumulate);
double sum_double(const double* x, size_t n);
double dot_double(const double* x, const double* y, size_t n);
double sum_sq_dev_double(const double* x, size_t n, double mean);

} // namespace hv::kernels::detail
