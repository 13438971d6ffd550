#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pal/core_types.hpp"

namespace pal::io {

enum class BitDepth { eight = 8, sixteen = 16 };

/// Raw integer samples as stored in a PGM/PNG file.
struct Samples {
  Extent extent;
  int maxval = 255;
  std::vector<std::uint16_t> values;
};

Samples read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Samples& samples);
Samples read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Samples& samples);

/// Dispatches on extension (.pgm / .png).
Samples read_samples(const std::filesystem::path& path);
void write_samples(const std::filesystem::path& path, const Samples& samples);

/// Quantizes [0,1] values (clamped) to the given depth.
template <typename T, typename Tag>
Samples quantize(const Raster<T, Tag>& raster, BitDepth depth = BitDepth::eight) {
  Samples s;
  s.extent = raster.extent();
  s.maxval = depth == BitDepth::eight ? 255 : 65535;
  s.values.resize(raster.size());
  auto src = raster.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    double v = static_cast<double>(src[i]);
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    s.values[i] = static_cast<std::uint16_t>(v * s.maxval + 0.5);
  }
  return s;
}

/// Intensities normalized by maxval (8-bit files: /255).
GrayImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const GrayImage& img, BitDepth depth = BitDepth::eight);

SoftLabel read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const SoftLabel& label, BitDepth depth = BitDepth::eight);

/// Nonzero samples are foreground.
BinaryMask read_mask(const std::filesystem::path& path);
/// Foreground written as maxval (255 for 8-bit).
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// Portable float map ("Pf", little-endian, bottom-to-top rows); lossless for labels.
SoftLabel read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const SoftLabel& label);

}  // namespace pal::io
