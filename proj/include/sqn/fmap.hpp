#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sqn/fixedpoint.hpp"

namespace sqn {

// Feature map in pixel-major order: all channels of an (x, y) location are
// contiguous, index(x, y, c) = (y*width + x)*channels + c. A "pixel" is the
// run of `channels` values at one location.
template <typename T>
class Fmap {
 public:
  Fmap() = default;

  Fmap(int width, int height, int channels, QFormat format = QFormat{})
      : fmt(format), width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0 || channels <= 0)
      throw std::invalid_argument("Fmap: dimensions must be positive");
    data_.resize(static_cast<std::size_t>(width) * height * channels);
  }

  static Fmap wrap(int width, int height, int channels, std::vector<T> values,
                   QFormat format = QFormat{}) {
    Fmap m(width, height, channels, format);
    if (values.size() != m.data_.size())
      throw std::invalid_argument("Fmap::wrap: data length " + std::to_string(values.size()) +
                                  " != w*h*c = " + std::to_string(m.data_.size()));
    m.data_ = std::move(values);
    return m;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }

  std::span<T> pixel(int x, int y) {
    return {data_.data() + pixel_offset(x, y), static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(int x, int y) const {
    return {data_.data() + pixel_offset(x, y), static_cast<std::size_t>(channels_)};
  }

  T at(int x, int y, int c) const { return data_[pixel_offset(x, y) + check_channel(c)]; }
  T& at(int x, int y, int c) { return data_[pixel_offset(x, y) + check_channel(c)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  // 16-bit format on the quantized path; stays the float marker otherwise.
  QFormat fmt{};

 private:
  std::size_t pixel_offset(int x, int y) const {
    if (x < 0 || x >= width_ || y < 0 || y >= height_)
      throw std::out_of_range("Fmap: pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                              ") outside " + std::to_string(width_) + "x" + std::to_string(height_));
    return (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }
  int check_channel(int c) const {
    if (c < 0 || c >= channels_) throw std::out_of_range("Fmap: channel out of range");
    return c;
  }

  int width_ = 0, height_ = 0, channels_ = 0;
  std::vector<T> data_;
};

using FmapF = Fmap<float>;
using FmapQ = Fmap<std::int16_t>;

// 8-bit weight tensor laid out [out][ky][kx][in] with input channels
// innermost, so one 16-wide input-channel chunk is a single contiguous read.
struct QTensor {
  int out_ch = 0, in_ch = 0, kh = 0, kw = 0;
  QFormat fmt{8, 0};
  std::vector<std::int8_t> data;

  QTensor() = default;
  QTensor(int out_channels, int in_channels, int kernel_h, int kernel_w, QFormat format)
      : out_ch(out_channels), in_ch(in_channels), kh(kernel_h), kw(kernel_w), fmt(format) {
    if (out_ch <= 0 || in_ch <= 0 || kh <= 0 || kw <= 0)
      throw std::invalid_argument("QTensor: dimensions must be positive");
    data.resize(static_cast<std::size_t>(out_ch) * in_ch * kh * kw);
  }

  std::size_t index(int o, int ky, int kx, int i) const {
    return ((static_cast<std::size_t>(o) * kh + ky) * kw + kx) * in_ch + i;
  }
  std::int8_t at(int o, int ky, int kx, int i) const { return data[index(o, ky, kx, i)]; }
  std::int8_t& at(int o, int ky, int kx, int i) { return data[index(o, ky, kx, i)]; }
  std::size_t size() const { return data.size(); }
};

}  // namespace sqn
