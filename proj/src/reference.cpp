#include "sqn/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sqn {

namespace {

void validate_conv(const FmapF& input, const FloatLayerParams& p) {
  if (input.channels() != p.in_ch)
    throw std::invalid_argument("conv2d_ref: input has " + std::to_string(input.channels()) +
                                " channels, params expect " + std::to_string(p.in_ch));
  if (p.stride < 1 || p.pad < 0)
    throw std::invalid_argument("conv2d_ref: stride must be >= 1 and pad >= 0");
  if (p.weights.size() != static_cast<std::size_t>(p.out_ch) * p.in_ch * p.kh * p.kw)
    throw std::invalid_argument("conv2d_ref: weight tensor size mismatch");
  if (p.bias.size() != static_cast<std::size_t>(p.out_ch))
    throw std::invalid_argument("conv2d_ref: bias length mismatch");
  if (input.width() + 2 * p.pad < p.kw || input.height() + 2 * p.pad < p.kh)
    throw std::invalid_argument("conv2d_ref: kernel larger than padded input");
}

}  // namespace

FmapF conv2d_ref(const FmapF& input, const FloatLayerParams& p, bool relu) {
  validate_conv(input, p);
  const int w_out = (input.width() + 2 * p.pad - p.kw) / p.stride + 1;
  const int h_out = (input.height() + 2 * p.pad - p.kh) / p.stride + 1;
  FmapF out(w_out, h_out, p.out_ch);

  for (int y = 0; y < h_out; ++y) {
    for (int x = 0; x < w_out; ++x) {
      std::span<float> opix = out.pixel(x, y);
      for (int o = 0; o < p.out_ch; ++o) {
        float acc = p.bias[o];
        for (int ky = 0; ky < p.kh; ++ky) {
          const int iy = y * p.stride + ky - p.pad;
          if (iy < 0 || iy >= input.height()) continue;
          for (int kx = 0; kx < p.kw; ++kx) {
            const int ix = x * p.stride + kx - p.pad;
            if (ix < 0 || ix >= input.width()) continue;
            std::span<const float> ipix = input.pixel(ix, iy);
            const float* w = &p.weights[p.windex(o, ky, kx, 0)];
            for (int c = 0; c < p.in_ch; ++c) acc += w[c] * ipix[c];
          }
        }
        opix[o] = (relu && acc < 0.0f) ? 0.0f : acc;
      }
    }
  }
  return out;
}

FmapF maxpool_ref(const FmapF& input, int kernel, int stride) {
  if (kernel <= 0 || stride <= 0)
    throw std::invalid_argument("maxpool_ref: kernel and stride must be positive");
  if (kernel > input.width() || kernel > input.height())
    throw std::invalid_argument("maxpool_ref: kernel larger than input");
  const int w_out = (input.width() - kernel) / stride + 1;
  const int h_out = (input.height() - kernel) / stride + 1;
  FmapF out(w_out, h_out, input.channels());

  for (int y = 0; y < h_out; ++y) {
    for (int x = 0; x < w_out; ++x) {
      std::span<float> opix = out.pixel(x, y);
      for (int c = 0; c < input.channels(); ++c) {
        float best = input.at(x * stride, y * stride, c);
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx)
            best = std::max(best, input.at(x * stride + kx, y * stride + ky, c));
        opix[c] = best;
      }
    }
  }
  return out;
}

FmapF avgpool_global_ref(const FmapF& input) {
  FmapF out(1, 1, input.channels());
  const double count = static_cast<double>(input.width()) * input.height();
  std::span<float> opix = out.pixel(0, 0);
  for (int c = 0; c < input.channels(); ++c) {
    double sum = 0.0;
    for (int y = 0; y < input.height(); ++y)
      for (int x = 0; x < input.width(); ++x) sum += input.at(x, y, c);
    opix[c] = static_cast<float>(sum / count);
  }
  return out;
}

std::vector<double> softmax_ref(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax_ref: empty logits");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - top);
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

FmapF fire_ref(const FmapF& input, const FloatLayerParams& squeeze,
               const FloatLayerParams& expand1, const FloatLayerParams& expand3) {
  if (squeeze.kh != 1 || squeeze.kw != 1 || squeeze.stride != 1 || squeeze.pad != 0)
    throw std::invalid_argument("fire_ref: squeeze must be 1x1, stride 1, pad 0");
  if (expand1.kh != 1 || expand1.kw != 1 || expand1.stride != 1 || expand1.pad != 0)
    throw std::invalid_argument("fire_ref: expand1 must be 1x1, stride 1, pad 0");
  if (expand3.kh != 3 || expand3.kw != 3 || expand3.stride != 1 || expand3.pad != 1)
    throw std::invalid_argument("fire_ref: expand3 must be 3x3, stride 1, pad 1");
  if (expand1.in_ch != squeeze.out_ch || expand3.in_ch != squeeze.out_ch)
    throw std::invalid_argument("fire_ref: expand input channels must equal squeeze output");

  const FmapF squeezed = conv2d_ref(input, squeeze, /*relu=*/true);
  const FmapF e1 = conv2d_ref(squeezed, expand1, /*relu=*/true);
  const FmapF e3 = conv2d_ref(squeezed, expand3, /*relu=*/true);

  FmapF out(e1.width(), e1.height(), e1.channels() + e3.channels());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      std::span<float> opix = out.pixel(x, y);
      std::span<const float> a = e1.pixel(x, y);
      std::span<const float> b = e3.pixel(x, y);
      std::copy(a.begin(), a.end(), opix.begin());
      std::copy(b.begin(), b.end(), opix.begin() + a.size());
    }
  }
  return out;
}

}  // namespace sqn
