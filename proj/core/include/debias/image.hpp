#pragma once

#include "debias/rng.hpp"
#include "debias/tensor.hpp"

#include <filesystem>

namespace debias {

/// Reads binary PGM (P5) or PPM (P6) with maxval 255 into CxHxW in [0, 1].
Tensor read_pnm(const std::filesystem::path& path);
/// Writes a 1xHxW / HxW tensor as P5 or a 3xHxW tensor as P6, rounding v * 255.
void write_pnm(const std::filesystem::path& path, const Tensor& image);

struct ClaheConfig {
    double clip_limit = 2.0;  // multiple of the uniform per-bin tile count
    std::size_t tiles_x = 2;
    std::size_t tiles_y = 2;
};

inline constexpr std::size_t kHistogramBins = 256;

/// Contrast-limited adaptive histogram equalization of an HxW image in
/// [0, 1]. The result is quantized to 8-bit levels.
Tensor clahe(const Tensor& image, const ClaheConfig& cfg);

/// CLAHE on a CxHxW image. Multi-channel images are equalized on their
/// luminance and the luminance change is added back to every channel.
Tensor clahe_image(const Tensor& image, const ClaheConfig& cfg);

struct AugmentConfig {
    double flip_probability = 0.5;
    double rotation_degrees = 10.0;
    double translation_pixels = 2.0;
};

/// Random horizontal flip followed by a random rotation about the centre
/// and translation, resampled nearest-neighbour with zero fill.
Tensor augment(const Tensor& image, Rng& rng, const AugmentConfig& cfg);

Tensor flip_horizontal(const Tensor& image);

} // namespace debias
