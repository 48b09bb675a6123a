#pragma once

#include "adstage/data_pipeline.hpp"

#include <array>
#include <cstdint>
#include <filesystem>

namespace adstage {

/// Synthetic stand-in for the MRI set: 32x32 RGB images of a bright disc
/// carrying a class-specific stripe orientation (horizontal, vertical,
/// diagonal, anti-diagonal) with random period, phase, position, brightness
/// and pixel noise. Class order and names match the real dataset.
struct ToyDatasetSpec {
    std::array<std::size_t, 4> counts{100, 40, 150, 110}; // 400 images, imbalanced like the real set
    std::size_t size = 32;
    std::uint64_t seed = 7;
};

LabeledImageSet make_toy_dataset(const ToyDatasetSpec& spec = {});

/// Writes the toy set as <root>/<class>/<index>.ppm.
void write_toy_dataset(const std::filesystem::path& root, const ToyDatasetSpec& spec = {});

} // namespace adstage
