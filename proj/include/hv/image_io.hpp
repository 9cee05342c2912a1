#pragma once

#include <filesystem>

#include "hv/tensor.hpp"

namespace hv {

/// Binary PPM (P6, maxval 255) <-> Tensor[3,H,W] in [0,1]. Values are
/// clamped and rounded on write.
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255) <-> Tensor[1,H,W]; masks are written 0/255.
void write_pgm(const std::filesystem::path& path, const Tensor& gray);
Tensor read_pgm(const std::filesystem::path& path);

/// [3,H,W] or [1,H,W] quantised to 8 bits exactly as the writers do.
Tensor quantize8(const Tensor& image);

/// Drops/adds a leading batch axis of size 1.
Tensor unbatch(const Tensor& t);
Tensor batch1(const Tensor& t);

/// Stacks equally shaped [c,H,W] images into [b,c,H,W].
Tensor stack(const std::vector<Tensor>& images);

} // namespace hv
