#pragma once

#include <span>
#include <vector>

#include "sqn/fmap.hpp"

namespace sqn {

// Float-path convolution parameters. Weight layout matches QTensor:
// [out][ky][kx][in], input channels innermost. Padding is symmetric zeros.
struct FloatLayerParams {
  int out_ch = 0, in_ch = 0, kh = 0, kw = 0;
  int stride = 1;
  int pad = 0;
  std::vector<float> weights;  // out_ch * kh * kw * in_ch
  std::vector<float> bias;     // out_ch

  std::size_t windex(int o, int ky, int kx, int i) const {
    return ((static_cast<std::size_t>(o) * kh + ky) * kw + kx) * in_ch + i;
  }
};

// Single-threaded 32-bit float convolution, the correctness oracle for the
// quantized paths. Accumulation order is fixed (kernel rows, kernel columns,
// channels innermost) so results are bit-reproducible across runs.
FmapF conv2d_ref(const FmapF& input, const FloatLayerParams& p, bool relu);

// Per-channel max over k x k windows, floor placement (windows fully inside
// the input): out_dim = (in - k)/stride + 1.
FmapF maxpool_ref(const FmapF& input, int kernel, int stride);

// Per-channel mean over all (x, y); returns a 1x1xC map.
FmapF avgpool_global_ref(const FmapF& input);

// Numerically stable softmax, computed in double precision.
std::vector<double> softmax_ref(std::span<const double> logits);

// Fire block: squeeze 1x1 -> ReLU, then parallel expand 1x1 and expand 3x3
// (pad 1) -> ReLU each, concatenated along channels with expand1 first.
FmapF fire_ref(const FmapF& input, const FloatLayerParams& squeeze,
               const FloatLayerParams& expand1, const FloatLayerParams& expand3);

}  // namespace sqn
