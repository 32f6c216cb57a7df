#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace protoseg {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// Interleaved 8-bit RGB, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

    bool empty() const { return width <= 0 || height <= 0; }

    Rgb at(int x, int y) const {
        const std::uint8_t* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, Rgb c) {
        std::uint8_t* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }
};

// Row-major float grid. Backs attribution maps and per-class score maps.
struct FloatGrid {
    int width = 0;
    int height = 0;
    std::vector<float> values;

    FloatGrid() = default;
    FloatGrid(int w, int h, float fill = 0.f)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    bool empty() const { return width <= 0 || height <= 0; }
    float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Binary mask stored one byte per pixel (0 or 1); packed only on disk.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;

    BinaryMask() = default;
    BinaryMask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    bool empty() const { return width <= 0 || height <= 0; }
    std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    std::int64_t count_on() const {
        std::int64_t n = 0;
        for (auto v : values) n += (v != 0);
        return n;
    }
    bool operator==(const BinaryMask&) const = default;
};

// Per-pixel class indices (labels, ground truth).
struct IndexGrid {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> values;

    IndexGrid() = default;
    IndexGrid(int w, int h, std::uint16_t fill = 0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    bool empty() const { return width <= 0 || height <= 0; }
    std::uint16_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint16_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    bool operator==(const IndexGrid&) const = default;
};

Image resize_bilinear(const Image& src, int new_w, int new_h);
FloatGrid resize_bilinear(const FloatGrid& src, int new_w, int new_h);
BinaryMask resize_nearest(const BinaryMask& src, int new_w, int new_h);
IndexGrid resize_nearest(const IndexGrid& src, int new_w, int new_h);

// Scales so the shorter side equals `target`; the other side is rounded to
// the nearest pixel. Returns the input unchanged when already at target.
Image resize_shortest_side(const Image& src, int target);

Image crop(const Image& src, int x0, int y0, int w, int h);

// VOC-convention color palette for index `i` (bit-reversal construction).
std::array<std::uint8_t, 3> voc_palette_color(int index);

}  // namespace protoseg
