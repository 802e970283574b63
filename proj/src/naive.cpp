#include "sqn/naive.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace sqn {

namespace {

// value * 2^shift with round-half-away-from-zero on right shifts, written via
// truncating division so it does not share code with the engine's helper.
// Left shifts past the point where any nonzero value exceeds the 16-bit
// output range collapse to a sign-preserving sentinel.
std::int64_t rescale_rhafz(std::int64_t value, int shift) {
  if (shift >= 0) {
    if (value == 0) return 0;
    if (shift >= 31 || std::llabs(value) > (std::int64_t{1} << (60 - shift)))
      return value > 0 ? (std::int64_t{1} << 50) : -(std::int64_t{1} << 50);
    return value << shift;
  }
  if (-shift >= 62) return 0;
  const std::int64_t d = std::int64_t{1} << (-shift);
  std::int64_t q = value / d;
  const std::int64_t r = value % d;
  if (2 * std::llabs(r) >= d) q += (value < 0 ? -1 : 1);
  return q;
}

}  // namespace

FmapQ conv_quant_naive(const FmapQ& input, const QTensor& weights,
                       std::span<const std::int8_t> bias, const LayerQSpec& qspec, bool relu,
                       int stride, int pad) {
  if (qspec.weight_fmt.total_bits != 8 || qspec.bias_fmt.total_bits != 8 ||
      qspec.input_fmt.total_bits != 16 || qspec.output_fmt.total_bits != 16)
    throw std::invalid_argument("conv_quant_naive: LayerQSpec widths must be 8/8/16/16");
  if (!(input.fmt == qspec.input_fmt))
    throw std::invalid_argument("conv_quant_naive: input format mismatch");
  if (input.channels() != weights.in_ch)
    throw std::invalid_argument("conv_quant_naive: channel mismatch");
  if (bias.size() != static_cast<std::size_t>(weights.out_ch))
    throw std::invalid_argument("conv_quant_naive: bias length mismatch");
  if (stride < 1 || pad < 0)
    throw std::invalid_argument("conv_quant_naive: bad stride/pad");

  const int w_out = (input.width() + 2 * pad - weights.kw) / stride + 1;
  const int h_out = (input.height() + 2 * pad - weights.kh) / stride + 1;
  if (w_out <= 0 || h_out <= 0)
    throw std::invalid_argument("conv_quant_naive: kernel larger than padded input");

  const int acc_frac = qspec.weight_fmt.frac_bits + qspec.input_fmt.frac_bits;
  const int out_shift = qspec.output_fmt.frac_bits - acc_frac;

  FmapQ out(w_out, h_out, weights.out_ch, qspec.output_fmt);
  for (int y = 0; y < h_out; ++y) {
    for (int x = 0; x < w_out; ++x) {
      for (int o = 0; o < weights.out_ch; ++o) {
        std::int64_t acc = rescale_rhafz(bias[o], acc_frac - qspec.bias_fmt.frac_bits);
        for (int ky = 0; ky < weights.kh; ++ky) {
          const int iy = y * stride + ky - pad;
          if (iy < 0 || iy >= input.height()) continue;
          for (int kx = 0; kx < weights.kw; ++kx) {
            const int ix = x * stride + kx - pad;
            if (ix < 0 || ix >= input.width()) continue;
            for (int c = 0; c < weights.in_ch; ++c)
              acc += static_cast<std::int64_t>(weights.at(o, ky, kx, c)) *
                     static_cast<std::int64_t>(input.at(ix, iy, c));
          }
        }
        if (acc > 2147483647LL || acc < -2147483648LL)
          throw AccumulatorOverflow("conv_quant_naive: 32-bit accumulator overflow at (" +
                                    std::to_string(x) + "," + std::to_string(y) + ") channel " +
                                    std::to_string(o));
        std::int64_t scaled = rescale_rhafz(acc, out_shift);
        scaled = std::clamp<std::int64_t>(scaled, -32768, 32767);
        if (relu && scaled < 0) scaled = 0;
        out.at(x, y, o) = static_cast<std::int16_t>(scaled);
      }
    }
  }
  return out;
}

FmapQ maxpool_quant(const FmapQ& input, int kernel, int stride) {
  if (kernel <= 0 || stride <= 0)
    throw std::invalid_argument("maxpool_quant: kernel and stride must be positive");
  if (kernel > input.width() || kernel > input.height())
    throw std::invalid_argument("maxpool_quant: kernel larger than input");
  const int w_out = (input.width() - kernel) / stride + 1;
  const int h_out = (input.height() - kernel) / stride + 1;
  FmapQ out(w_out, h_out, input.channels(), input.fmt);
  for (int y = 0; y < h_out; ++y)
    for (int x = 0; x < w_out; ++x)
      for (int c = 0; c < input.channels(); ++c) {
        std::int16_t best = input.at(x * stride, y * stride, c);
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx)
            best = std::max(best, input.at(x * stride + kx, y * stride + ky, c));
        out.at(x, y, c) = best;
      }
  return out;
}

}  // namespace sqn
