#include "protoseg/binio.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "protoseg/common.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
    require(offset + 4 <= in.size(), "get_u32: out of range");
    return static_cast<std::uint32_t>(in[offset]) |
           (static_cast<std::uint32_t>(in[offset + 1]) << 8) |
           (static_cast<std::uint32_t>(in[offset + 2]) << 16) |
           (static_cast<std::uint32_t>(in[offset + 3]) << 24);
}

float get_f32(std::span<const std::uint8_t> in, std::size_t offset) {
    std::uint32_t bits = get_u32(in, offset);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // crc32 takes uInt lengths; feed in chunks to stay safe for large inputs.
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        uInt chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        crc = crc32(crc, bytes.data() + pos, chunk);
        pos += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_string(std::string_view s) {
    return crc32_bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "cannot open file: " + path.string());
    f.seekg(0, std::ios::end);
    std::streamoff size = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (size > 0) f.read(reinterpret_cast<char*>(bytes.data()), size);
    require(f.good(), "error reading file: " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "cannot open file for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    require(f.good(), "error writing file: " + path.string());
}

void write_file_text(const std::filesystem::path& path, std::string_view text) {
    write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_file_text(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

std::vector<std::uint8_t> encode_float_grid(const FloatGrid& grid) {
    require(!grid.empty(), "encode_float_grid: empty grid");
    std::vector<std::uint8_t> out;
    out.reserve(8 + grid.values.size() * 4);
    put_u32(out, static_cast<std::uint32_t>(grid.height));
    put_u32(out, static_cast<std::uint32_t>(grid.width));
    for (float v : grid.values) put_f32(out, v);
    return out;
}

FloatGrid decode_float_grid(std::span<const std::uint8_t> bytes, const std::string& context) {
    require(bytes.size() >= 8, "float grid too short: " + context);
    std::uint32_t h = get_u32(bytes, 0);
    std::uint32_t w = get_u32(bytes, 4);
    require(h > 0 && w > 0 && h < (1u << 20) && w < (1u << 20),
            "float grid header invalid: " + context);
    std::size_t expected = 8 + static_cast<std::size_t>(h) * w * 4;
    require(bytes.size() == expected, "float grid size mismatch: " + context);
    FloatGrid grid(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < grid.values.size(); ++i)
        grid.values[i] = get_f32(bytes, 8 + i * 4);
    return grid;
}

void write_float_grid(const std::filesystem::path& path, const FloatGrid& grid) {
    write_file_bytes(path, encode_float_grid(grid));
}

FloatGrid read_float_grid(const std::filesystem::path& path) {
    return decode_float_grid(read_file_bytes(path), path.string());
}

std::vector<std::uint8_t> encode_bitmask(const BinaryMask& mask) {
    require(!mask.empty(), "encode_bitmask: empty mask");
    std::vector<std::uint8_t> out;
    std::size_t row_bytes = (static_cast<std::size_t>(mask.width) + 7) / 8;
    out.reserve(8 + row_bytes * mask.height);
    put_u32(out, static_cast<std::uint32_t>(mask.height));
    put_u32(out, static_cast<std::uint32_t>(mask.width));
    for (int y = 0; y < mask.height; ++y) {
        std::uint8_t acc = 0;
        int bit = 7;
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y)) acc |= static_cast<std::uint8_t>(1u << bit);
            if (--bit < 0) {
                out.push_back(acc);
                acc = 0;
                bit = 7;
            }
        }
        if (bit != 7) out.push_back(acc);
    }
    return out;
}

BinaryMask decode_bitmask(std::span<const std::uint8_t> bytes, const std::string& context) {
    require(bytes.size() >= 8, "bitmask too short: " + context);
    std::uint32_t h = get_u32(bytes, 0);
    std::uint32_t w = get_u32(bytes, 4);
    require(h > 0 && w > 0 && h < (1u << 20) && w < (1u << 20),
            "bitmask header invalid: " + context);
    std::size_t row_bytes = (static_cast<std::size_t>(w) + 7) / 8;
    require(bytes.size() == 8 + row_bytes * h, "bitmask size mismatch: " + context);
    BinaryMask mask(static_cast<int>(w), static_cast<int>(h));
    for (std::uint32_t y = 0; y < h; ++y) {
        const std::uint8_t* row = bytes.data() + 8 + static_cast<std::size_t>(y) * row_bytes;
        for (std::uint32_t x = 0; x < w; ++x) {
            mask.at(static_cast<int>(x), static_cast<int>(y)) =
                (row[x / 8] >> (7 - (x % 8))) & 1u;
        }
    }
    return mask;
}

void write_bitmask(const std::filesystem::path& path, const BinaryMask& mask) {
    write_file_bytes(path, encode_bitmask(mask));
}

BinaryMask read_bitmask(const std::filesystem::path& path) {
    return decode_bitmask(read_file_bytes(path), path.string());
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace protoseg
