#include "sqn/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace sqn {

namespace {

struct PpmCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  bool eof() const { return pos >= bytes.size(); }
  std::uint8_t peek() const { return bytes[pos]; }

  // Skips whitespace and '#' comments between header tokens.
  void skip_separators() {
    while (!eof()) {
      const std::uint8_t c = peek();
      if (c == '#') {
        while (!eof() && peek() != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        return;
      }
    }
  }

  int read_int() {
    skip_separators();
    if (eof() || peek() < '0' || peek() > '9')
      throw PpmError(PpmError::Kind::kBadHeader, "ppm: expected a number in the header");
    long v = 0;
    while (!eof() && peek() >= '0' && peek() <= '9') {
      v = v * 10 + (peek() - '0');
      if (v > 1 << 24) throw PpmError(PpmError::Kind::kBadHeader, "ppm: absurd header value");
      ++pos;
    }
    return static_cast<int>(v);
  }
};

}  // namespace

ImageU8 decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw PpmError(PpmError::Kind::kNotP6, "ppm: not a binary P6 file");
  PpmCursor cur{bytes, 2};
  ImageU8 img;
  img.width = cur.read_int();
  img.height = cur.read_int();
  const int maxval = cur.read_int();
  if (img.width <= 0 || img.height <= 0)
    throw PpmError(PpmError::Kind::kBadHeader, "ppm: bad dimensions");
  if (maxval != 255)
    throw PpmError(PpmError::Kind::kBadMaxval,
                   "ppm: maxval must be 255, got " + std::to_string(maxval));
  // Exactly one whitespace byte separates the header from the raster.
  if (cur.eof() || !(cur.peek() == ' ' || cur.peek() == '\t' || cur.peek() == '\r' ||
                     cur.peek() == '\n'))
    throw PpmError(PpmError::Kind::kBadHeader, "ppm: missing raster separator");
  ++cur.pos;

  const std::size_t need = static_cast<std::size_t>(img.width) * img.height * 3;
  if (bytes.size() - cur.pos < need)
    throw PpmError(PpmError::Kind::kTruncated,
                   "ppm: raster truncated, need " + std::to_string(need) + " bytes, have " +
                       std::to_string(bytes.size() - cur.pos));
  img.rgb.assign(bytes.begin() + cur.pos, bytes.begin() + cur.pos + need);
  return img;
}

std::vector<std::uint8_t> encode_ppm(const ImageU8& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw std::invalid_argument("encode_ppm: inconsistent image");
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n", image.width,
                              image.height);
  std::vector<std::uint8_t> out(header, header + n);
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

ImageU8 load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ppm: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

ImageU8 resize_bilinear(const ImageU8& image, int target_w, int target_h) {
  if (target_w <= 0 || target_h <= 0)
    throw std::invalid_argument("resize_bilinear: target dims must be positive");
  if (image.width <= 0 || image.height <= 0)
    throw std::invalid_argument("resize_bilinear: empty source image");
  if (target_w == image.width && target_h == image.height) return image;

  ImageU8 out;
  out.width = target_w;
  out.height = target_h;
  out.rgb.resize(static_cast<std::size_t>(target_w) * target_h * 3);

  const double sx = static_cast<double>(image.width) / target_w;
  const double sy = static_cast<double>(image.height) / target_h;
  auto src = [&](int x, int y, int c) {
    return image.rgb[(static_cast<std::size_t>(y) * image.width + x) * 3 + c];
  };

  for (int y = 0; y < target_h; ++y) {
    // Center-aligned sample position, clamped to the source extent.
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * src(x0, y0, c) + wx * src(x1, y0, c)) +
                         wy * ((1 - wx) * src(x0, y1, c) + wx * src(x1, y1, c));
        const double rounded = std::floor(v + 0.5);  // round half up
        out.rgb[(static_cast<std::size_t>(y) * target_w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(rounded, 0.0, 255.0));
      }
    }
  }
  return out;
}

FmapF normalize_float(const ImageU8& image, const PreprocessConfig& cfg) {
  if (image.width != cfg.target_w || image.height != cfg.target_h)
    throw std::invalid_argument("normalize: image is " + std::to_string(image.width) + "x" +
                                std::to_string(image.height) + ", expected " +
                                std::to_string(cfg.target_w) + "x" +
                                std::to_string(cfg.target_h));
  FmapF out(image.width, image.height, 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      auto pix = out.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        const int src_c = cfg.order == ChannelOrder::kBGR ? 2 - c : c;
        const std::uint8_t v =
            image.rgb[(static_cast<std::size_t>(y) * image.width + x) * 3 + src_c];
        pix[c] = static_cast<float>(v - cfg.mean[c]);
      }
    }
  return out;
}

FmapQ normalize_quantize(const ImageU8& image, const PreprocessConfig& cfg, QFormat input_fmt) {
  const FmapF f = normalize_float(image, cfg);
  FmapQ out(f.width(), f.height(), f.channels(), input_fmt);
  for (std::size_t i = 0; i < f.size(); ++i)
    out.data()[i] = static_cast<std::int16_t>(quantize_value(f.data()[i], input_fmt));
  return out;
}

}  // namespace sqn
