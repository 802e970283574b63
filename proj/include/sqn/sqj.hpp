#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sqn/fmap.hpp"

namespace sqn {

// Accelerator shape: P MAC-16 units computing P output channels in lockstep,
// each consuming one 16-wide input-channel chunk per clock.
struct SqjConfig {
  int mac_units = 8;        // P, must be 2^n with n >= 2
  double clock_mhz = 100.0;
  static constexpr int kLaneWidth = 16;
};

void validate_config(const SqjConfig& cfg);

// One MAC-16 step: acc + sum(w[i]*a[i], i=0..15) in exact integer arithmetic.
// The 16-lane dot itself cannot exceed 16*127*32768 < 2^31, so only the
// accumulator add needs the widened overflow check. A result beyond 32 bits
// signals a quantization format bug and throws.
inline std::int32_t mac16(std::span<const std::int8_t, 16> w,
                          std::span<const std::int16_t, 16> a, std::int32_t acc) {
  std::int32_t dot = 0;
  for (int i = 0; i < 16; ++i)
    dot += static_cast<std::int32_t>(w[i]) * static_cast<std::int32_t>(a[i]);
  const std::int64_t sum = static_cast<std::int64_t>(acc) + dot;
  if (sum > 2147483647LL || sum < -2147483648LL)
    throw AccumulatorOverflow("mac16: 32-bit accumulator overflow");
  return static_cast<std::int32_t>(sum);
}

// Input tile buffer: a rolling ring of kernel_h input rows plus the ITBW, the
// kernel_h x kernel_w x channels window for the pixel currently computed. The
// window always equals the zero-padded input window of the active output
// coordinate; lanes >= channels are the zero padding up to a lane multiple.
class ItbState {
 public:
  ItbState(int kernel, int pad, int stride, int width_in, int height_in, int channels,
           int padded_channels);

  // Rolls the ring so it holds input rows out_y*stride - pad .. + kernel-1.
  void load_output_row(const FmapQ& input, int out_y);
  // Slides the ITBW to output column out_x (single-column shift when adjacent).
  void slide_window(int out_x);

  // All padded_channels values of the window at kernel tap (ky, kx).
  std::span<const std::int16_t> window_tap(int ky, int kx) const;

  int padded_channels() const { return padded_channels_; }

 private:
  void fill_window_column(int kx, int in_x);
  void load_row_slot(const FmapQ& input, int slot, int in_y);

  int kernel_, pad_, stride_, width_in_, height_in_, channels_, padded_channels_;
  std::vector<std::int16_t> rows_;    // kernel_ * width_in_ * padded_channels_
  std::vector<std::int16_t> window_;  // kernel_ * kernel_ * padded_channels_
  int top_row_ = 0;    // input row index held by ring slot 0 (may be negative)
  bool rows_valid_ = false;
  int window_x_ = -2;  // output column the window currently matches
};

// Analytic cycle estimate. mac_cycles counts lockstep cycles of the P-unit
// bank; buffer_init_cycles is one ITB fill pass, a declared simplification.
struct CycleReport {
  std::uint64_t mac_cycles = 0;
  std::uint64_t buffer_init_cycles = 0;
  std::uint64_t total_cycles = 0;
  double latency_ms = 0.0;
};

struct ConvDims {
  int h_out = 0, w_out = 0;
  int c_in = 0, c_out = 0;
  int kernel = 0;
  int w_in = 0;
};

CycleReport estimate_cycles(const ConvDims& dims, const SqjConfig& cfg);

// One machine-readable key-value record per report, e.g.
// "name=13:Conv mac_cycles=676000 buffer_init_cycles=416 total_cycles=676416
//  latency_ms=6.76416".
std::string cycle_report_kv(const std::string& name, const CycleReport& report);

// Instrumentation filled by one convolution invocation. mac_cycles increments
// once per lockstep bank step (P mac16 calls each); emissions records the
// pixel-by-pixel output order when requested.
struct ConvTrace {
  std::uint64_t mac_cycles = 0;
  std::uint64_t mac16_calls = 0;
  bool record_emissions = false;
  std::vector<std::pair<int, int>> emissions;  // (x, y) in production order
};

// Streaming convolution over the stride-1 layers. Preconditions: stride 1,
// kernel 1x1 (pad 0) or 3x3 (pad 1), input channels divisible by 16, output
// channels divisible by P. Output is bit-exact against the naive quantized
// convolution contract and is produced pixel-by-pixel in row-major order.
FmapQ conv_sqj(const FmapQ& input, const QTensor& weights, std::span<const std::int8_t> bias,
               const LayerQSpec& qspec, const SqjConfig& cfg, bool relu,
               ConvTrace* trace = nullptr);

// Dedicated first-layer unit: 3 input channels zero-padded to one 16-lane
// chunk, kernel 3x3, stride 2, no padding. Same integer contract as conv_sqj.
FmapQ conv_first_layer(const FmapQ& input, const QTensor& weights,
                       std::span<const std::int8_t> bias, const LayerQSpec& qspec,
                       const SqjConfig& cfg, bool relu, ConvTrace* trace = nullptr);

// Runs conv_sqj and returns the ordered (x, y) output pixel emissions.
std::vector<std::pair<int, int>> trace_stream(const FmapQ& input, const QTensor& weights,
                                              std::span<const std::int8_t> bias,
                                              const LayerQSpec& qspec, const SqjConfig& cfg,
                                              bool relu);

}  // namespace sqn
