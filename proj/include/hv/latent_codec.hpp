#pragma once

#include <cstdint>
#include <vector>

#include "hv/tensor.hpp"

namespace hv {

/// Fixed invertible stand-in for an image autoencoder. An image x[b,3,H,W]
/// in [0,1] is mapped to 2x-1, folded 8x8 space-to-depth into 192 channels
/// per cell, rotated by a fixed orthogonal 192x192 matrix and scaled by 1/8.
/// The first 4 rotated channels are the latent; the other 188 are kept as
/// "detail" so that decode(encode(x)) is exact when the detail is supplied.
///
/// Latent channel 0..2: block mean of each colour (in [-1,1]);
/// channel 3: top-half minus bottom-half luminance contrast.
class LatentCodec {
public:
    static constexpr int kFactor = 8;
    static constexpr int kLatentChannels = 4;
    static constexpr int kCellChannels = 3 * kFactor * kFactor;

    explicit LatentCodec(uint64_t seed = 0x1A7E57C0DECULL);

    struct Encoded {
        Tensor latent; ///< [b,4,H/8,W/8]
        Tensor detail; ///< [b,188,H/8,W/8]
    };

    Encoded encode_full(const Tensor& image) const;
    Tensor encode(const Tensor& image) const { return encode_full(image).latent; }
    /// Exact inverse when `detail` comes from the same image.
    Tensor decode(const Tensor& latent, const Tensor& detail) const;
    /// Decode with zero detail: block-constant reconstruction.
    Tensor decode(const Tensor& latent) const;

    /// Row-major 192x192 mixing matrix (rows orthonormal).
    const std::vector<double>& basis() const { return basis_; }

private:
    std::vector<double> basis_;
};

/// Nearest-neighbour resize of a {0,1} mask [b,1,H,W] to the latent grid,
/// sampling each 8x8 cell at its centre pixel. Stays binary.
Tensor mask_to_latent(const Tensor& mask, int factor = LatentCodec::kFactor);

} // namespace hv
