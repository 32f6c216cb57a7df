#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "protoseg/image.hpp"

namespace protoseg {

// Little-endian primitive serialization into byte buffers.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset);
float get_f32(std::span<const std::uint8_t> in, std::size_t offset);

std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes);
std::uint32_t crc32_string(std::string_view s);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, std::string_view text);
std::string read_file_text(const std::filesystem::path& path);

// Float grid file: 8-byte header (h: u32, w: u32) then h*w little-endian f32,
// row-major. Used for attribution grids and score dumps.
std::vector<std::uint8_t> encode_float_grid(const FloatGrid& grid);
FloatGrid decode_float_grid(std::span<const std::uint8_t> bytes, const std::string& context);
void write_float_grid(const std::filesystem::path& path, const FloatGrid& grid);
FloatGrid read_float_grid(const std::filesystem::path& path);

// Binary mask file: same 8-byte header, then rows packed 1 bit per pixel
// (MSB first), each row padded to a whole byte.
std::vector<std::uint8_t> encode_bitmask(const BinaryMask& mask);
BinaryMask decode_bitmask(std::span<const std::uint8_t> bytes, const std::string& context);
void write_bitmask(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_bitmask(const std::filesystem::path& path);

}  // namespace protoseg
