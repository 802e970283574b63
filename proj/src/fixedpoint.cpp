#include "sqn/fixedpoint.hpp"

#include <limits>
#include <stdexcept>
#include <string>

namespace sqn {

void validate_format(const QFormat& fmt) {
  if (fmt.total_bits != 8 && fmt.total_bits != 16 && fmt.total_bits != 32)
    throw std::invalid_argument("QFormat: total_bits must be 8, 16 or 32, got " +
                                std::to_string(fmt.total_bits));
  if (fmt.frac_bits < -64 || fmt.frac_bits > 64)
    throw std::invalid_argument("QFormat: frac_bits out of range: " +
                                std::to_string(fmt.frac_bits));
}

std::int32_t quantize_value(double x, const QFormat& fmt) {
  validate_format(fmt);
  const double scaled = std::ldexp(x, fmt.frac_bits);
  const double rounded = std::round(scaled);  // half away from zero
  if (std::isnan(rounded)) return 0;
  if (rounded >= static_cast<double>(fmt.raw_max()))
    return static_cast<std::int32_t>(fmt.raw_max());
  if (rounded <= static_cast<double>(fmt.raw_min()))
    return static_cast<std::int32_t>(fmt.raw_min());
  return static_cast<std::int32_t>(rounded);
}

double dequantize(std::int64_t raw, const QFormat& fmt) {
  validate_format(fmt);
  if (raw < fmt.raw_min() || raw > fmt.raw_max())
    throw std::out_of_range("dequantize: raw value " + std::to_string(raw) +
                            " outside " + std::to_string(fmt.total_bits) + "-bit range");
  return std::ldexp(static_cast<double>(raw), -fmt.frac_bits);
}

std::int64_t shift_round(std::int64_t value, int shift) {
  if (shift >= 0) {
    if (value == 0 || shift == 0) return shift == 0 ? value : (value << shift);
    if (shift >= 63)
      throw std::overflow_error("shift_round: left shift overflows 64 bits");
    if (value > (std::numeric_limits<std::int64_t>::max() >> shift) ||
        value < (std::numeric_limits<std::int64_t>::min() >> shift))
      throw std::overflow_error("shift_round: left shift overflows 64 bits");
    return value << shift;
  }
  const int k = -shift;
  const bool neg = value < 0;
  // Two's-complement negation handles INT64_MIN cleanly in unsigned space.
  const std::uint64_t mag = neg ? ~static_cast<std::uint64_t>(value) + 1
                                : static_cast<std::uint64_t>(value);
  if (k >= 64) {
    const bool round_up = (k == 64) && (mag >= (std::uint64_t{1} << 63));
    return round_up ? (neg ? -1 : 1) : 0;
  }
  std::uint64_t q = mag >> k;
  const std::uint64_t rem = mag & ((std::uint64_t{1} << k) - 1);
  if (rem >= (std::uint64_t{1} << (k - 1))) ++q;
  return neg ? -static_cast<std::int64_t>(q) : static_cast<std::int64_t>(q);
}

std::int16_t saturate16(std::int64_t v) {
  if (v > 32767) return 32767;
  if (v < -32768) return -32768;
  return static_cast<std::int16_t>(v);
}

}  // namespace sqn
