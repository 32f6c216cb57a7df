#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "protoseg/image.hpp"

namespace protoseg {

void png_write_rgb(const std::filesystem::path& path, const Image& image);
Image png_read_rgb(const std::filesystem::path& path);

// Single-channel index PNG with an explicit palette (VOC-style label files).
void png_write_indexed(const std::filesystem::path& path, const IndexGrid& grid,
                       std::span<const std::array<std::uint8_t, 3>> palette);

// Reads palette or grayscale PNGs as raw index values.
IndexGrid png_read_indexed(const std::filesystem::path& path);

std::vector<std::array<std::uint8_t, 3>> voc_palette(int count);

}  // namespace protoseg
