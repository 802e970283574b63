#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace sqn {

// The 32-bit integer accumulator of the quantized convolution contract cannot
// legally overflow for network-realistic magnitudes; hitting this means the
// chosen formats are broken.
struct AccumulatorOverflow : std::overflow_error {
  using std::overflow_error::overflow_error;
};

// Dynamic fixed-point format: signed two's-complement raw values scaled by
// 2^-frac_bits. frac_bits may be negative or exceed total_bits-1, which lets a
// tensor group cover magnitudes outside [1, 2) with a pure power-of-two scale.
struct QFormat {
  int total_bits = 32;  // 8, 16 or 32; 32 doubles as the float-path marker
  int frac_bits = 0;

  std::int64_t raw_min() const { return -(std::int64_t{1} << (total_bits - 1)); }
  std::int64_t raw_max() const { return (std::int64_t{1} << (total_bits - 1)) - 1; }
  // Quantization step, i.e. the real value of one raw LSB.
  double step() const { return std::ldexp(1.0, -frac_bits); }
  double max_value() const { return std::ldexp(static_cast<double>(raw_max()), -frac_bits); }
  bool is_float_marker() const { return total_bits == 32; }

  friend bool operator==(const QFormat&, const QFormat&) = default;
};

// Throws std::invalid_argument unless total_bits is 8, 16 or 32 and frac_bits
// is within a sane window.
void validate_format(const QFormat& fmt);

// round(x * 2^frac_bits), half away from zero, saturated to the raw range.
// Saturation is defined behavior, not an error.
std::int32_t quantize_value(double x, const QFormat& fmt);

// raw * 2^-frac_bits, exact (power-of-two scale, no rounding). Rejects raw
// values outside the format range.
double dequantize(std::int64_t raw, const QFormat& fmt);

// value * 2^shift with round-half-away-from-zero on right shifts. Left shifts
// that overflow 64 bits throw std::overflow_error.
std::int64_t shift_round(std::int64_t value, int shift);

std::int16_t saturate16(std::int64_t v);

// Formats of one convolution unit: 8-bit parameters, 16-bit fmaps.
struct LayerQSpec {
  QFormat weight_fmt{8, 0};
  QFormat bias_fmt{8, 0};
  QFormat input_fmt{16, 0};
  QFormat output_fmt{16, 0};

  friend bool operator==(const LayerQSpec&, const LayerQSpec&) = default;
};

}  // namespace sqn
