#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pmapcut/raster.hpp"

namespace pmapcut {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class PMapFormat { Pgm16, RawFloat };

// Images: PNG (8-bit RGB/RGBA/gray, alpha dropped) or binary PPM (P6, maxval <= 255).
RgbImage decode_image(ByteView bytes);
RgbImage load_image(const std::filesystem::path& path);
Bytes encode_png(const RgbImage& image);
Bytes encode_ppm(const RgbImage& image);
void save_image(const RgbImage& image, const std::filesystem::path& path);

// P-maps: binary PGM (P5, value = sample / maxval) or the raw-float container
// ("PMAPF32\0", u32 width, u32 height, width*height f32, all little-endian).
ProbMap decode_pmap(ByteView bytes);
ProbMap load_pmap(const std::filesystem::path& path);
Bytes encode_pmap(const ProbMap& pmap, PMapFormat format = PMapFormat::Pgm16);
void save_pmap(const ProbMap& pmap, const std::filesystem::path& path, PMapFormat format = PMapFormat::Pgm16);

// Masks: PGM P5 maxval 255, FG = 255, BG = 0. Decoding treats samples above
// maxval / 2 as foreground.
CutoutMask decode_mask(ByteView bytes);
CutoutMask load_mask(const std::filesystem::path& path);
Bytes encode_mask(const CutoutMask& mask);
void save_mask(const CutoutMask& mask, const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, ByteView bytes);

} // namespace pmapcut
