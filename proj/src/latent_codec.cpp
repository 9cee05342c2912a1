#include "hv/latent_codec.hpp"

#include <cmath>

#include "hv/errors.hpp"
#include "hv/rng.hpp"

namespace hv {

namespace {

constexpr int F = LatentCodec::kFactor;
constexpr int C = LatentCodec::kCellChannels;
constexpr double kScale = 1.0 / F;

// cell channel index for colour ch at offset (dy, dx)
int cell_index(int ch, int dy, int dx) { return ch * F * F + dy * F + dx; }

void check_image(const Tensor& image) {
    const Shape& d = image.dims();
    if (d.size() != 4 || d[1] != 3 || d[2] % F != 0 || d[3] % F != 0)
        throw ShapeError("latent codec expects [b,3,H,W] with H,W divisible by 8, got " + to_string(d));
}

} // namespace

LatentCodec::LatentCodec(uint64_t seed) : basis_(static_cast<size_t>(C) * C, 0.0) {
    std::vector<std::vector<double>> rows;
    for (int ch = 0; ch < 3; ++ch) {
        std::vector<double> r(C, 0.0);
        for (int i = 0; i < F * F; ++i) r[static_cast<size_t>(ch * F * F + i)] = 1.0;
        rows.push_back(r);
    }
    std::vector<double> contrast(C, 0.0);
    for (int ch = 0; ch < 3; ++ch)
        for (int dy = 0; dy < F; ++dy)
            for (int dx = 0; dx < F; ++dx) contrast[static_cast<size_t>(cell_index(ch, dy, dx))] = dy < F / 2 ? 1.0 : -1.0;
    rows.push_back(contrast);

    // complete to an orthonormal basis with seeded Gram-Schmidt (applied twice
    // per vector for numerical safety)
    Rng rng(seed);
    std::vector<std::vector<double>> basis;
    auto orthonormalize = [&basis](std::vector<double> v) {
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) {
                double d = 0.0;
                for (int i = 0; i < C; ++i) d += v[static_cast<size_t>(i)] * b[static_cast<size_t>(i)];
                for (int i = 0; i < C; ++i) v[static_cast<size_t>(i)] -= d * b[static_cast<size_t>(i)];
            }
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n < 1e-6) return false;
        for (double& x : v) x /= n;
        basis.push_back(std::move(v));
        return true;
    };
    for (auto& r : rows) orthonormalize(r);
    while (static_cast<int>(basis.size()) < C) {
        std::vector<double> v(C);
        for (double& x : v) x = rng.normal();
        orthonormalize(std::move(v));
    }
    for (int r = 0; r < C; ++r)
        for (int i = 0; i < C; ++i) basis_[static_cast<size_t>(r * C + i)] = basis[static_cast<size_t>(r)][static_cast<size_t>(i)];
}

LatentCodec::Encoded LatentCodec::encode_full(const Tensor& image) const {
    check_image(image);
    const int64_t b = image.dim(0), H = image.dim(2), W = image.dim(3);
    const int64_t h = H / F, w = W / F;
    Encoded out{Tensor(Shape{b, kLatentChannels, h, w}), Tensor(Shape{b, C - kLatentChannels, h, w})};
    std::vector<double> cell(C);
    for (int64_t n = 0; n < b; ++n)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                for (int ch = 0; ch < 3; ++ch)
                    for (int dy = 0; dy < F; ++dy)
                        for (int dx = 0; dx < F; ++dx) {
                            const float px = image[((n * 3 + ch) * H + i * F + dy) * W + j * F + dx];
                            cell[static_cast<size_t>(cell_index(ch, dy, dx))] = 2.0 * px - 1.0;
                        }
                for (int r = 0; r < C; ++r) {
                    const double* row = &basis_[static_cast<size_t>(r * C)];
                    double acc = 0.0;
                    for (int k = 0; k < C; ++k) acc += row[k] * cell[static_cast<size_t>(k)];
                    const float v = static_cast<float>(acc * kScale);
                    if (r < kLatentChannels)
                        out.latent[((n * kLatentChannels + r) * h + i) * w + j] = v;
                    else
                        out.detail[((n * (C - kLatentChannels) + (r - kLatentChannels)) * h + i) * w + j] = v;
                }
            }
    return out;
}

Tensor LatentCodec::decode(const Tensor& latent, const Tensor& detail) const {
    const Shape& d = latent.dims();
    if (d.size() != 4 || d[1] != kLatentChannels)
        throw ShapeError("latent codec decode expects [b,4,h,w], got " + to_string(d));
    const bool with_detail = !detail.empty();
    if (with_detail && detail.dims() != Shape{d[0], C - kLatentChannels, d[2], d[3]})
        throw ShapeError("latent codec detail dims " + to_string(detail.dims()) + " do not match latent " +
                         to_string(d));
    const int64_t b = d[0], h = d[2], w = d[3], H = h * F, W = w * F;
    Tensor image(Shape{b, 3, H, W});
    std::vector<double> z(C), cell(C);
    for (int64_t n = 0; n < b; ++n)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                for (int r = 0; r < C; ++r) {
                    double v = 0.0;
                    if (r < kLatentChannels)
                        v = latent[((n * kLatentChannels + r) * h + i) * w + j];
                    else if (with_detail)
                        v = detail[((n * (C - kLatentChannels) + (r - kLatentChannels)) * h + i) * w + j];
                    z[static_cast<size_t>(r)] = v / kScale;
                }
                for (int k = 0; k < C; ++k) cell[static_cast<size_t>(k)] = 0.0;
                for (int r = 0; r < C; ++r) {
                    const double zr = z[static_cast<size_t>(r)];
                    if (zr == 0.0) continue;
                    const double* row = &basis_[static_cast<size_t>(r * C)];
                    for (int k = 0; k < C; ++k) cell[static_cast<size_t>(k)] += row[k] * zr;
                }
                for (int ch = 0; ch < 3; ++ch)
                    for (int dy = 0; dy < F; ++dy)
                        for (int dx = 0; dx < F; ++dx)
                            image[((n * 3 + ch) * H + i * F + dy) * W + j * F + dx] =
                                static_cast<float>((cell[static_cast<size_t>(cell_index(ch, dy, dx))] + 1.0) * 0.5);
            }
    return image;
}

Tensor LatentCodec::decode(const Tensor& latent) const { return decode(latent, Tensor()); }

Tensor mask_to_latent(const Tensor& mask, int factor) {
    const Shape& d = mask.dims();
    if (d.size() != 4 || d[1] != 1 || d[2] % factor != 0 || d[3] % factor != 0)
        throw ShapeError("mask_to_latent expects [b,1,H,W] divisible by " + std::to_string(factor) + ", got " +
                         to_string(d));
    const int64_t b = d[0], H = d[2], W = d[3], h = H / factor, w = W / factor;
    Tensor out(Shape{b, 1, h, w});
    for (int64_t n = 0; n < b; ++n)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j)
                out[(n * h + i) * w + j] = mask[(n * H + i * factor + factor / 2) * W + j * factor + factor / 2];
    return out;
}

} // namespace hv
