#pragma once

#include <cstdint>
#include <string>

#include "twise/types.hpp"

namespace twise {

using Image16 = DepthImage<std::uint16_t>;
using Image8 = DepthImage<std::uint8_t>;

/// Binary P5 I/O. 16-bit samples are big-endian. Throws std::runtime_error on
/// I/O or format errors.
void write_pgm16(const std::string& path, const Image16& image);
Image16 read_pgm16(const std::string& path);
void write_pgm8(const std::string& path, const Image8& image);
Image8 read_pgm8(const std::string& path);

/// KITTI-style depth scaling: value = round(depth_m * 256), 0 = invalid.
constexpr double kDepthScale = 256.0;

Image16 encode_depth(const DepthMap& depth);
DepthMap decode_depth(const Image16& image);
void write_depth_pgm(const std::string& path, const DepthMap& depth);
DepthMap read_depth_pgm(const std::string& path);

/// value = clamp(round(x * scale), 0, 65535). Used for sigma (scale 65535).
Image16 encode_scaled(const DepthMap& values, double scale);

/// Offset encoding for signed maps: clamp(round(x * scale) + 32768, 0, 65535).
constexpr int kSignedOffset = 32768;
Image16 encode_signed(const DepthMap& values, double scale);
DepthMap decode_signed(const Image16& image, double scale);

/// Labels must lie in [0, 255].
void write_label_pgm(const std::string& path, const LabelMap& labels);
LabelMap read_label_pgm(const std::string& path);

}  // namespace twise
