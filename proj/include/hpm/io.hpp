#pragma once

// Little-endian blob encoding and atomic file writes shared by the bank,
// model and report writers.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hpm::io {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

void ensure_directory(const std::filesystem::path& dir);

std::string encode_f32le(std::span<const double> values);
std::string encode_f64le(std::span<const double> values);
std::string encode_u32le(std::span<const std::uint32_t> values);

std::vector<double> decode_f32le(std::string_view bytes);
std::vector<double> decode_f64le(std::string_view bytes);
std::vector<std::uint32_t> decode_u32le(std::string_view bytes);

// Shortest round-tripping decimal text for a double ("%.17g").
std::string format_double(double value);

}  // namespace hpm::io
