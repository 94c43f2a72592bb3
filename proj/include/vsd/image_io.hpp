#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vsd/geometry.hpp"

namespace vsd {

// Binary PPM (P6), 8-bit. Values are quantized with round(v * 255).
void write_ppm(const ImageBuffer& img, const std::filesystem::path& file);
ImageBuffer read_ppm(const std::filesystem::path& file);

// Binary PGM (P5), 8-bit; nonzero mask entries map to 255.
void write_pgm(std::span<const uint8_t> mask, int width, int height,
               const std::filesystem::path& file);
std::vector<uint8_t> read_pgm(const std::filesystem::path& file, int* width,
                              int* height);

// Grayscale PFM ("Pf"), scale -1.0 (little-endian), rows bottom-to-top.
// Invalid depth pixels are stored as 0.0 and restored as invalid on read;
// negative or non-finite values in a file are ingestion errors.
void write_pfm(const DepthMap& depth, const std::filesystem::path& file);
DepthMap read_pfm(const std::filesystem::path& file);

// Raw raster variant used for error maps (no validity semantics).
void write_pfm_raster(std::span<const double> values, int width, int height,
                      const std::filesystem::path& file);

// 16-bit grayscale PNG depth: stored value = round(meters * divisor),
// value 0 means invalid.
void write_depth_png16(const DepthMap& depth, const std::filesystem::path& file,
                       double divisor = 256.0);
DepthMap read_depth_png16(const std::filesystem::path& file,
                          double divisor = 256.0);

// False-color rendering of a scalar raster on a purple-to-yellow ramp over
// [vmin, vmax]; entries with mask 0 (when given) render black.
ImageBuffer false_color(std::span<const double> values,
                        std::span<const uint8_t> mask, int width, int height,
                        double vmin, double vmax);

}  // namespace vsd
