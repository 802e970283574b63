#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqn/fmap.hpp"

namespace sqn {

// 8-bit interleaved RGB image, row-major.
struct ImageU8 {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // width*height*3
};

struct PpmError : std::runtime_error {
  enum class Kind { kNotP6, kBadHeader, kBadMaxval, kTruncated };
  Kind kind;
  PpmError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

enum class ChannelOrder { kRGB, kBGR };

struct PreprocessConfig {
  int target_w = 227, target_h = 227;
  ChannelOrder order = ChannelOrder::kBGR;
  // Per-channel means in the *output* channel order (Caffe-lineage BGR
  // convention by default; configurable, the convention is not fixed by the
  // network itself).
  std::array<double, 3> mean{104.0, 117.0, 123.0};
};

// Binary PPM ("P6", maxval 255) decode/encode.
ImageU8 decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const ImageU8& image);
ImageU8 load_ppm(const std::string& path);

// Bilinear resize with center-aligned sampling, edge clamping, and
// round-half-up to 8 bits. Same-size input is returned unchanged.
ImageU8 resize_bilinear(const ImageU8& image, int target_w, int target_h);

// Mean subtraction and channel reordering into a pixel-major float fmap.
FmapF normalize_float(const ImageU8& image, const PreprocessConfig& cfg);

// Same pipeline, quantized to the network input format.
FmapQ normalize_quantize(const ImageU8& image, const PreprocessConfig& cfg, QFormat input_fmt);

}  // namespace sqn
