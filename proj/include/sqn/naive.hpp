#pragma once

#include <cstdint>
#include <span>

#include "sqn/fmap.hpp"

namespace sqn {

// Plain quantized convolution: six nested loops, exact integer accumulation,
// then rescale to the output format. Implements the same arithmetic contract
// as the streaming engine but shares no code with it, so the two act as
// independent routes for the bit-exactness checks. Accepts any kernel, stride
// and pad.
FmapQ conv_quant_naive(const FmapQ& input, const QTensor& weights,
                       std::span<const std::int8_t> bias, const LayerQSpec& qspec, bool relu,
                       int stride, int pad);

// Max pooling directly on 16-bit raws (max is format-invariant), floor window
// placement. The output keeps the input format.
FmapQ maxpool_quant(const FmapQ& input, int kernel, int stride);

}  // namespace sqn
