#include "sqn/sqj.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <limits>
#include <string>

namespace sqn {

void validate_config(const SqjConfig& cfg) {
  const int p = cfg.mac_units;
  if (p < 4 || (p & (p - 1)) != 0)
    throw std::invalid_argument("SqjConfig: mac_units must be a power of two >= 4, got " +
                                std::to_string(p));
  if (!(cfg.clock_mhz > 0.0))
    throw std::invalid_argument("SqjConfig: clock_mhz must be positive");
}

// ---------------------------------------------------------------------------
// ItbState
// ---------------------------------------------------------------------------

ItbState::ItbState(int kernel, int pad, int stride, int width_in, int height_in, int channels,
                   int padded_channels)
    : kernel_(kernel), pad_(pad), stride_(stride), width_in_(width_in), height_in_(height_in),
      channels_(channels), padded_channels_(padded_channels) {
  if (kernel <= 0 || stride <= 0 || pad < 0 || width_in <= 0 || height_in <= 0 || channels <= 0)
    throw std::invalid_argument("ItbState: bad geometry");
  if (padded_channels < channels || padded_channels % SqjConfig::kLaneWidth != 0)
    throw std::invalid_argument("ItbState: padded_channels must be a lane multiple >= channels");
  rows_.assign(static_cast<std::size_t>(kernel_) * width_in_ * padded_channels_, 0);
  window_.assign(static_cast<std::size_t>(kernel_) * kernel_ * padded_channels_, 0);
}

namespace {
int ring_slot(int in_y, int kernel) { return ((in_y % kernel) + kernel) % kernel; }
}  // namespace

void ItbState::load_row_slot(const FmapQ& input, int slot, int in_y) {
  std::int16_t* dst = rows_.data() + static_cast<std::size_t>(slot) * width_in_ * padded_channels_;
  if (in_y < 0 || in_y >= height_in_) {
    std::fill(dst, dst + static_cast<std::size_t>(width_in_) * padded_channels_,
              static_cast<std::int16_t>(0));
    return;
  }
  for (int x = 0; x < width_in_; ++x) {
    std::span<const std::int16_t> pix = input.pixel(x, in_y);
    std::int16_t* d = dst + static_cast<std::size_t>(x) * padded_channels_;
    std::copy(pix.begin(), pix.end(), d);
    std::fill(d + channels_, d + padded_channels_, static_cast<std::int16_t>(0));
  }
}

void ItbState::load_output_row(const FmapQ& input, int out_y) {
  if (input.width() != width_in_ || input.height() != height_in_ ||
      input.channels() != channels_)
    throw std::invalid_argument("ItbState: input geometry changed");
  const int top = out_y * stride_ - pad_;
  if (!rows_valid_ || top < top_row_ || top > top_row_ + kernel_) {
    for (int ky = 0; ky < kernel_; ++ky)
      load_row_slot(input, ring_slot(top + ky, kernel_), top + ky);
  } else {
    for (int in_y = top_row_ + kernel_; in_y < top + kernel_; ++in_y)
      load_row_slot(input, ring_slot(in_y, kernel_), in_y);
  }
  top_row_ = top;
  rows_valid_ = true;
  window_x_ = -2;  // a row change invalidates the window
}

void ItbState::fill_window_column(int kx, int in_x) {
  const std::size_t pc = padded_channels_;
  for (int ky = 0; ky < kernel_; ++ky) {
    std::int16_t* dst = window_.data() + (static_cast<std::size_t>(ky) * kernel_ + kx) * pc;
    if (in_x < 0 || in_x >= width_in_) {
      std::fill(dst, dst + pc, static_cast<std::int16_t>(0));
      continue;
    }
    const int slot = ring_slot(top_row_ + ky, kernel_);
    const std::int16_t* src =
        rows_.data() + (static_cast<std::size_t>(slot) * width_in_ + in_x) * pc;
    std::copy(src, src + pc, dst);
  }
}

void ItbState::slide_window(int out_x) {
  if (!rows_valid_) throw std::logic_error("ItbState: slide_window before load_output_row");
  if (out_x == window_x_) return;
  const int base_x = out_x * stride_ - pad_;
  const int shift = (out_x - window_x_) * stride_;
  if (window_x_ >= 0 && shift > 0 && shift < kernel_) {
    const std::size_t pc = padded_channels_;
    for (int ky = 0; ky < kernel_; ++ky) {
      std::int16_t* row = window_.data() + static_cast<std::size_t>(ky) * kernel_ * pc;
      std::memmove(row, row + static_cast<std::size_t>(shift) * pc,
                   static_cast<std::size_t>(kernel_ - shift) * pc * sizeof(std::int16_t));
    }
    for (int kx = kernel_ - shift; kx < kernel_; ++kx) fill_window_column(kx, base_x + kx);
  } else {
    for (int kx = 0; kx < kernel_; ++kx) fill_window_column(kx, base_x + kx);
  }
  window_x_ = out_x;
}

std::span<const std::int16_t> ItbState::window_tap(int ky, int kx) const {
  if (ky < 0 || ky >= kernel_ || kx < 0 || kx >= kernel_)
    throw std::out_of_range("ItbState: tap outside kernel");
  return {window_.data() + (static_cast<std::size_t>(ky) * kernel_ + kx) * padded_channels_,
          static_cast<std::size_t>(padded_channels_)};
}

// ---------------------------------------------------------------------------
// Streaming convolution core
// ---------------------------------------------------------------------------

namespace {

void validate_common(const FmapQ& input, const QTensor& weights, std::span<const std::int8_t> bias,
                     const LayerQSpec& qspec) {
  if (qspec.weight_fmt.total_bits != 8 || qspec.bias_fmt.total_bits != 8 ||
      qspec.input_fmt.total_bits != 16 || qspec.output_fmt.total_bits != 16)
    throw std::invalid_argument("conv: LayerQSpec widths must be 8/8/16/16");
  if (!(input.fmt == qspec.input_fmt))
    throw std::invalid_argument("conv: input fmap format does not match qspec.input_fmt");
  if (!(weights.fmt == qspec.weight_fmt))
    throw std::invalid_argument("conv: weight tensor format does not match qspec.weight_fmt");
  if (weights.kh != weights.kw)
    throw std::invalid_argument("conv: kernel must be square");
  if (input.channels() != weights.in_ch)
    throw std::invalid_argument("conv: input has " + std::to_string(input.channels()) +
                                " channels, weights expect " + std::to_string(weights.in_ch));
  if (bias.size() != static_cast<std::size_t>(weights.out_ch))
    throw std::invalid_argument("conv: bias length must equal output channels");
}

FmapQ conv_stream_core(const FmapQ& input, const QTensor& weights,
                       std::span<const std::int8_t> bias, const LayerQSpec& qspec,
                       const SqjConfig& cfg, bool relu, int stride, int pad, ConvTrace* trace) {
  const int k = weights.kh;
  const int c_in = weights.in_ch;
  const int c_out = weights.out_ch;
  const int p_units = cfg.mac_units;
  const int lanes = ((c_in + 15) / 16) * 16;
  const int chunks = lanes / SqjConfig::kLaneWidth;
  const int w_out = (input.width() + 2 * pad - k) / stride + 1;
  const int h_out = (input.height() + 2 * pad - k) / stride + 1;
  if (w_out <= 0 || h_out <= 0)
    throw std::invalid_argument("conv: kernel larger than padded input");

  const int acc_frac = qspec.weight_fmt.frac_bits + qspec.input_fmt.frac_bits;
  const int out_shift = qspec.output_fmt.frac_bits - acc_frac;

  // Bias raws aligned to the accumulator scale once, up front.
  std::vector<std::int32_t> bias_acc(c_out);
  for (int o = 0; o < c_out; ++o) {
    const std::int64_t aligned = shift_round(bias[o], acc_frac - qspec.bias_fmt.frac_bits);
    if (aligned > std::numeric_limits<std::int32_t>::max() ||
        aligned < std::numeric_limits<std::int32_t>::min())
      throw AccumulatorOverflow("conv: aligned bias overflows 32-bit accumulator");
    bias_acc[o] = static_cast<std::int32_t>(aligned);
  }

  // Weights repacked with zero lanes up to the lane multiple: [o][ky][kx][lane].
  std::vector<std::int8_t> wlanes(static_cast<std::size_t>(c_out) * k * k * lanes, 0);
  for (int o = 0; o < c_out; ++o)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const std::int8_t* src = &weights.data[weights.index(o, ky, kx, 0)];
        std::int8_t* dst = &wlanes[((static_cast<std::size_t>(o) * k + ky) * k + kx) * lanes];
        std::copy(src, src + c_in, dst);
      }

  FmapQ out(w_out, h_out, c_out, qspec.output_fmt);
  ItbState itb(k, pad, stride, input.width(), input.height(), c_in, lanes);
  const int groups = c_out / p_units;
  std::vector<std::int32_t> acc(p_units);

  for (int y = 0; y < h_out; ++y) {
    itb.load_output_row(input, y);
    for (int x = 0; x < w_out; ++x) {
      itb.slide_window(x);
      std::span<std::int16_t> opix = out.pixel(x, y);
      for (int g = 0; g < groups; ++g) {
        const int o_base = g * p_units;
        for (int p = 0; p < p_units; ++p) acc[p] = bias_acc[o_base + p];
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            std::span<const std::int16_t> tap = itb.window_tap(ky, kx);
            for (int ch = 0; ch < chunks; ++ch) {
              const std::size_t lane_off =
                  static_cast<std::size_t>(ch) * SqjConfig::kLaneWidth;
              const std::int16_t* a = tap.data() + lane_off;
              // One lockstep cycle: all P units fire on this chunk.
              if (trace) ++trace->mac_cycles;
              for (int p = 0; p < p_units; ++p) {
                const std::int8_t* w =
                    &wlanes[((static_cast<std::size_t>(o_base + p) * k + ky) * k + kx) * lanes +
                            lane_off];
                acc[p] = mac16(std::span<const std::int8_t, 16>(w, 16),
                               std::span<const std::int16_t, 16>(a, 16), acc[p]);
              }
              if (trace) trace->mac16_calls += p_units;
            }
          }
        for (int p = 0; p < p_units; ++p) {
          std::int16_t v;
          if (out_shift >= 31)  // any nonzero value lands beyond the 16-bit range
            v = acc[p] == 0 ? std::int16_t{0} : (acc[p] > 0 ? std::int16_t{32767}
                                                            : std::int16_t{-32768});
          else
            v = saturate16(shift_round(acc[p], out_shift));
          if (relu && v < 0) v = 0;
          opix[o_base + p] = v;
        }
      }
      if (trace && trace->record_emissions) trace->emissions.emplace_back(x, y);
    }
  }
  return out;
}

}  // namespace

FmapQ conv_sqj(const FmapQ& input, const QTensor& weights, std::span<const std::int8_t> bias,
               const LayerQSpec& qspec, const SqjConfig& cfg, bool relu, ConvTrace* trace) {
  validate_config(cfg);
  validate_common(input, weights, bias, qspec);
  if (weights.kh != 1 && weights.kh != 3)
    throw std::invalid_argument("conv_sqj: kernel must be 1x1 or 3x3, got " +
                                std::to_string(weights.kh) + "x" + std::to_string(weights.kw));
  if (weights.in_ch % SqjConfig::kLaneWidth != 0)
    throw std::invalid_argument("conv_sqj: input channels must be divisible by 16, got " +
                                std::to_string(weights.in_ch));
  if (weights.out_ch % cfg.mac_units != 0)
    throw std::invalid_argument("conv_sqj: output channels must be divisible by P=" +
                                std::to_string(cfg.mac_units) + ", got " +
                                std::to_string(weights.out_ch));
  const int pad = weights.kh == 3 ? 1 : 0;
  return conv_stream_core(input, weights, bias, qspec, cfg, relu, /*stride=*/1, pad, trace);
}

FmapQ conv_first_layer(const FmapQ& input, const QTensor& weights,
                       std::span<const std::int8_t> bias, const LayerQSpec& qspec,
                       const SqjConfig& cfg, bool relu, ConvTrace* trace) {
  validate_config(cfg);
  validate_common(input, weights, bias, qspec);
  if (input.channels() != 3)
    throw std::invalid_argument("conv_first_layer: expects a 3-channel input, got " +
                                std::to_string(input.channels()));
  if (weights.kh != 3)
    throw std::invalid_argument("conv_first_layer: kernel must be 3x3");
  if (weights.out_ch % cfg.mac_units != 0)
    throw std::invalid_argument("conv_first_layer: output channels must be divisible by P=" +
                                std::to_string(cfg.mac_units));
  return conv_stream_core(input, weights, bias, qspec, cfg, relu, /*stride=*/2, /*pad=*/0, trace);
}

std::vector<std::pair<int, int>> trace_stream(const FmapQ& input, const QTensor& weights,
                                              std::span<const std::int8_t> bias,
                                              const LayerQSpec& qspec, const SqjConfig& cfg,
                                              bool relu) {
  ConvTrace trace;
  trace.record_emissions = true;
  conv_sqj(input, weights, bias, qspec, cfg, relu, &trace);
  return std::move(trace.emissions);
}

std::string cycle_report_kv(const std::string& name, const CycleReport& report) {
  char buf[192];
  std::snprintf(buf, sizeof(buf),
                "name=%s mac_cycles=%llu buffer_init_cycles=%llu total_cycles=%llu "
                "latency_ms=%.17g",
                name.c_str(), static_cast<unsigned long long>(report.mac_cycles),
                static_cast<unsigned long long>(report.buffer_init_cycles),
                static_cast<unsigned long long>(report.total_cycles), report.latency_ms);
  return buf;
}

CycleReport estimate_cycles(const ConvDims& dims, const SqjConfig& cfg) {
  validate_config(cfg);
  if (dims.h_out <= 0 || dims.w_out <= 0 || dims.c_in <= 0 || dims.c_out <= 0 ||
      dims.kernel <= 0 || dims.w_in <= 0)
    throw std::invalid_argument("estimate_cycles: dimensions must be positive");
  if (dims.c_out % cfg.mac_units != 0)
    throw std::invalid_argument("estimate_cycles: c_out must be divisible by P");
  const std::uint64_t chunks = (static_cast<std::uint64_t>(dims.c_in) + 15) / 16;
  CycleReport r;
  r.mac_cycles = static_cast<std::uint64_t>(dims.h_out) * dims.w_out * chunks *
                 static_cast<std::uint64_t>(dims.kernel) * dims.kernel *
                 (static_cast<std::uint64_t>(dims.c_out) / cfg.mac_units);
  r.buffer_init_cycles = chunks * dims.kernel * static_cast<std::uint64_t>(dims.w_in);
  r.total_cycles = r.mac_cycles + r.buffer_init_cycles;
  r.latency_ms = static_cast<double>(r.total_cycles) / (cfg.clock_mhz * 1000.0);
  return r;
}

}  // namespace sqn
