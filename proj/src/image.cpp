#include "protoseg/image.hpp"

#include <algorithm>
#include <cmath>

#include "protoseg/common.hpp"

namespace protoseg {

namespace {

struct Tap {
    int i0, i1;
    float w1;  // weight of i1; i0 gets 1-w1
};

// Pixel-center sampling: dst x maps to (x+0.5)*scale - 0.5 in source space.
Tap bilinear_tap(int dst, int dst_size, int src_size) {
    double scale = static_cast<double>(src_size) / dst_size;
    double pos = (dst + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src_size - 1));
    int i0 = static_cast<int>(std::floor(pos));
    int i1 = std::min(i0 + 1, src_size - 1);
    return {i0, i1, static_cast<float>(pos - i0)};
}

int nearest_tap(int dst, int dst_size, int src_size) {
    double scale = static_cast<double>(src_size) / dst_size;
    int i = static_cast<int>(std::floor((dst + 0.5) * scale));
    return std::clamp(i, 0, src_size - 1);
}

}  // namespace

Image resize_bilinear(const Image& src, int new_w, int new_h) {
    require(!src.empty() && new_w > 0 && new_h > 0, "resize_bilinear: empty image or size");
    if (new_w == src.width && new_h == src.height) return src;
    Image dst(new_w, new_h);
    std::vector<Tap> xs(new_w);
    for (int x = 0; x < new_w; ++x) xs[x] = bilinear_tap(x, new_w, src.width);
    for (int y = 0; y < new_h; ++y) {
        Tap ty = bilinear_tap(y, new_h, src.height);
        for (int x = 0; x < new_w; ++x) {
            const Tap& tx = xs[x];
            for (int c = 0; c < 3; ++c) {
                auto s = [&](int sx, int sy) {
                    return static_cast<float>(
                        src.pixels[(static_cast<std::size_t>(sy) * src.width + sx) * 3 + c]);
                };
                float top = s(tx.i0, ty.i0) * (1.f - tx.w1) + s(tx.i1, ty.i0) * tx.w1;
                float bot = s(tx.i0, ty.i1) * (1.f - tx.w1) + s(tx.i1, ty.i1) * tx.w1;
                float v = top * (1.f - ty.w1) + bot * ty.w1;
                dst.pixels[(static_cast<std::size_t>(y) * new_w + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 255.f)));
            }
        }
    }
    return dst;
}

FloatGrid resize_bilinear(const FloatGrid& src, int new_w, int new_h) {
    require(!src.empty() && new_w > 0 && new_h > 0, "resize_bilinear: empty grid or size");
    if (new_w == src.width && new_h == src.height) return src;
    FloatGrid dst(new_w, new_h);
    std::vector<Tap> xs(new_w);
    for (int x = 0; x < new_w; ++x) xs[x] = bilinear_tap(x, new_w, src.width);
    for (int y = 0; y < new_h; ++y) {
        Tap ty = bilinear_tap(y, new_h, src.height);
        for (int x = 0; x < new_w; ++x) {
            const Tap& tx = xs[x];
            float top = src.at(tx.i0, ty.i0) * (1.f - tx.w1) + src.at(tx.i1, ty.i0) * tx.w1;
            float bot = src.at(tx.i0, ty.i1) * (1.f - tx.w1) + src.at(tx.i1, ty.i1) * tx.w1;
            dst.at(x, y) = top * (1.f - ty.w1) + bot * ty.w1;
        }
    }
    return dst;
}

BinaryMask resize_nearest(const BinaryMask& src, int new_w, int new_h) {
    require(!src.empty() && new_w > 0 && new_h > 0, "resize_nearest: empty mask or size");
    if (new_w == src.width && new_h == src.height) return src;
    BinaryMask dst(new_w, new_h);
    std::vector<int> xs(new_w);
    for (int x = 0; x < new_w; ++x) xs[x] = nearest_tap(x, new_w, src.width);
    for (int y = 0; y < new_h; ++y) {
        int sy = nearest_tap(y, new_h, src.height);
        for (int x = 0; x < new_w; ++x) dst.at(x, y) = src.at(xs[x], sy);
    }
    return dst;
}

IndexGrid resize_nearest(const IndexGrid& src, int new_w, int new_h) {
    require(!src.empty() && new_w > 0 && new_h > 0, "resize_nearest: empty grid or size");
    if (new_w == src.width && new_h == src.height) return src;
    IndexGrid dst(new_w, new_h);
    std::vector<int> xs(new_w);
    for (int x = 0; x < new_w; ++x) xs[x] = nearest_tap(x, new_w, src.width);
    for (int y = 0; y < new_h; ++y) {
        int sy = nearest_tap(y, new_h, src.height);
        for (int x = 0; x < new_w; ++x) dst.at(x, y) = src.at(xs[x], sy);
    }
    return dst;
}

Image resize_shortest_side(const Image& src, int target) {
    require(!src.empty() && target > 0, "resize_shortest_side: empty image or target");
    int shortest = std::min(src.width, src.height);
    if (shortest == target) return src;
    double scale = static_cast<double>(target) / shortest;
    int new_w = src.width == shortest
                    ? target
                    : static_cast<int>(std::lround(src.width * scale));
    int new_h = src.height == shortest
                    ? target
                    : static_cast<int>(std::lround(src.height * scale));
    return resize_bilinear(src, std::max(new_w, 1), std::max(new_h, 1));
}

Image crop(const Image& src, int x0, int y0, int w, int h) {
    require(x0 >= 0 && y0 >= 0 && w > 0 && h > 0 && x0 + w <= src.width && y0 + h <= src.height,
            "crop: rectangle out of bounds");
    Image dst(w, h);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* s = &src.pixels[(static_cast<std::size_t>(y0 + y) * src.width + x0) * 3];
        std::copy(s, s + static_cast<std::size_t>(w) * 3,
                  &dst.pixels[static_cast<std::size_t>(y) * w * 3]);
    }
    return dst;
}

std::array<std::uint8_t, 3> voc_palette_color(int index) {
    std::array<std::uint8_t, 3> c = {0, 0, 0};
    int id = index;
    for (int shift = 7; shift >= 0 && id > 0; --shift) {
        c[0] |= static_cast<std::uint8_t>(((id >> 0) & 1) << shift);
        c[1] |= static_cast<std::uint8_t>(((id >> 1) & 1) << shift);
        c[2] |= static_cast<std::uint8_t>(((id >> 2) & 1) << shift);
        id >>= 3;
    }
    return c;
}

}  // namespace protoseg
