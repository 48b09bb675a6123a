#pragma once

#include "adstage/tensor.hpp"

#include <filesystem>

namespace adstage {

/// Decodes a PPM/PGM (P2, P3, P5, P6) or, when built with libjpeg, a JPEG file
/// into an [H,W,3] tensor with values in [0,255]. Grey images are replicated
/// across the three channels. Throws DataError on malformed input, IoError
/// when unreadable.
Tensor read_image(const std::filesystem::path& path);

/// Writes an [H,W,3] tensor as binary PPM (P6), rounding and clamping to 0..255.
void write_ppm(const std::filesystem::path& path, const Tensor& image);

bool jpeg_supported() noexcept;

/// True for extensions read_image understands in this build.
bool is_supported_image(const std::filesystem::path& path);

} // namespace adstage
