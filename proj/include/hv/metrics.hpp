#pragma once

#include <vector>

#include "hv/tensor.hpp"

namespace hv {

/// Mean SSIM of two [c,H,W] images in [0,1]: 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 1, valid windows only, averaged
/// over positions and then channels. Needs H, W >= 11.
double ssim(const Tensor& a, const Tensor& b);

struct SsimSummary {
    std::vector<double> values;
    double mean = 0.0;
    double stddev = 0.0;
};

/// Per-pair SSIM of two equally long image lists.
SsimSummary ssim_pairs(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

} // namespace hv
