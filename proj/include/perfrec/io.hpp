#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "perfrec/core.hpp"

namespace perfrec::io {

/// Key-value sidecar written next to every raw file (same basename, ".meta").
using Meta = std::map<std::string, std::string>;

void write_meta(const std::filesystem::path& raw_path, const Meta& meta);
Meta read_meta(const std::filesystem::path& raw_path);

/// Image format used across the project: flat little-endian float32,
/// row-major, with a .meta sidecar listing at least nx, ny, dx, dy, units.
void write_image(const std::filesystem::path& path, const std::vector<double>& pixels,
                 const ImageGrid& grid, const std::string& units,
                 Meta extra = {});
std::vector<double> read_image(const std::filesystem::path& path, ImageGrid* grid_out = nullptr);

/// Raw float32 block without grid interpretation (sinogram stacks, weights).
void write_f32(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_f32(const std::filesystem::path& path);

/// 8-bit label map with .meta sidecar.
void write_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels,
                  const ImageGrid& grid, Meta extra = {});
std::vector<std::uint8_t> read_labels(const std::filesystem::path& path, ImageGrid* grid_out = nullptr);

/// CSV with a header row; every cell is formatted with max_digits10.
void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// CSV with preformatted string cells (mixed-type tables).
void write_csv_rows(const std::filesystem::path& path,
                    const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);

/// 8-bit PGM preview of a map with a display window (window width / level).
void write_pgm(const std::filesystem::path& path, const std::vector<double>& pixels,
               const ImageGrid& grid, double window, double level);

/// FNV-1a 64-bit content hash, hex-encoded; used for manifest entries.
std::uint64_t fnv1a64(const void* bytes, std::size_t n);
std::string hash_file(const std::filesystem::path& path);

}  // namespace perfrec::io
