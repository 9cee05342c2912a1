#include "hv/metrics.hpp"

#include <cmath>

#include "hv/errors.hpp"

namespace hv {

namespace {

constexpr int kWin = 11;

std::vector<double> gaussian_window() {
    std::vector<double> g(kWin);
    double total = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        g[static_cast<size_t>(i)] = std::exp(-d * d / (2 * 1.5 * 1.5));
        total += g[static_cast<size_t>(i)];
    }
    for (double& v : g) v /= total;
    return g;
}

// separable valid-mode filtering of one plane
std::vector<double> filter(const std::vector<double>& x, int64_t H, int64_t W, const std::vector<double>& g) {
    const int64_t oh = H - kWin + 1, ow = W - kWin + 1;
    std::vector<double> tmp(static_cast<size_t>(H * ow)), out(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x0 = 0; x0 < ow; ++x0) {
            double s = 0.0;
            for (int k = 0; k < kWin; ++k) s += g[static_cast<size_t>(k)] * x[static_cast<size_t>(y * W + x0 + k)];
            tmp[static_cast<size_t>(y * ow + x0)] = s;
        }
    for (int64_t y0 = 0; y0 < oh; ++y0)
        for (int64_t x0 = 0; x0 < ow; ++x0) {
            double s = 0.0;
            for (int k = 0; k < kWin; ++k) s += g[static_cast<size_t>(k)] * tmp[static_cast<size_t>((y0 + k) * ow + x0)];
            out[static_cast<size_t>(y0 * ow + x0)] = s;
        }
    return out;
}

} // namespace

double ssim(const Tensor& a, const Tensor& b) {
    require_same_dims(a.dims(), b.dims(), "ssim");
    if (a.dims().size() != 3) throw ShapeError("ssim expects [c,H,W], got " + to_string(a.dims()));
    const int64_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
    if (H < kWin || W < kWin) throw ShapeError("ssim needs images of at least 11x11, got " + to_string(a.dims()));
    static const std::vector<double> g = gaussian_window();
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    for (int64_t c = 0; c < C; ++c) {
        std::vector<double> x(static_cast<size_t>(H * W)), y(x.size()), xx(x.size()), yy(x.size()), xy(x.size());
        for (int64_t i = 0; i < H * W; ++i) {
            const double u = a[c * H * W + i], v = b[c * H * W + i];
            x[static_cast<size_t>(i)] = u;
            y[static_cast<size_t>(i)] = v;
            xx[static_cast<size_t>(i)] = u * u;
            yy[static_cast<size_t>(i)] = v * v;
            xy[static_cast<size_t>(i)] = u * v;
        }
        const auto mx = filter(x, H, W, g), my = filter(y, H, W, g);
        const auto sxx = filter(xx, H, W, g), syy = filter(yy, H, W, g), sxy = filter(xy, H, W, g);
        double plane = 0.0;
        for (size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
            plane += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                     ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += plane / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(C);
}

SsimSummary ssim_pairs(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size() || a.empty()) throw InputError("ssim needs two equally long, non-empty image lists");
    SsimSummary s;
    for (size_t i = 0; i < a.size(); ++i) s.values.push_back(ssim(a[i], b[i]));
    for (double v : s.values) s.mean += v;
    s.mean /= static_cast<double>(s.values.size());
    for (double v : s.values) s.stddev += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(s.values.size()));
    return s;
}

} // namespace hv
