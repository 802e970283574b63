#include "sqn/forward.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "sqn/naive.hpp"
#include "sqn/reference.hpp"

namespace sqn {

const char* mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::kFloat: return "float";
    case RunMode::kQuantNaive: return "quant-naive";
    case RunMode::kQuantSqj: return "quant-sqj";
  }
  return "?";
}

ExecPlan ExecPlan::make(RunMode mode, const NetworkDef& net, SqjConfig sqj) {
  validate_config(sqj);
  ExecPlan plan;
  plan.mode = mode;
  plan.sqj = sqj;
  plan.layer_backend.reserve(net.layers.size());
  for (const LayerSpec& l : net.layers) {
    Backend b = Backend::kReferenceFloat;
    if (mode == RunMode::kQuantNaive)
      b = Backend::kReferenceQuant;
    else if (mode == RunMode::kQuantSqj)
      b = l.is_conv_like() ? Backend::kSqj : Backend::kReferenceQuant;
    plan.layer_backend.push_back(b);
  }
  return plan;
}

double steady_clock_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

namespace {

const ConvUnitWeights& unit_of(const WeightStore& store, const LayerSpec& layer, int unit) {
  const LayerWeights& lw = store.layers.at(layer.index - 1);
  if (unit >= static_cast<int>(lw.units.size()))
    throw std::invalid_argument("forward: layer '" + layer.name + "' has no unit " +
                                std::to_string(unit));
  return lw.units[unit];
}

const FloatLayerParams& float_params(const ConvUnitWeights& u) {
  if (!u.f)
    throw std::invalid_argument("forward: unit '" + u.name + "' has no float parameters");
  return *u.f;
}

const QuantConvParams& quant_params(const ConvUnitWeights& u) {
  if (!u.q)
    throw std::invalid_argument("forward: unit '" + u.name + "' has no quantized parameters");
  return *u.q;
}

FmapF concat_channels(const FmapF& a, const FmapF& b) {
  FmapF out(a.width(), a.height(), a.channels() + b.channels());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      auto dst = out.pixel(x, y);
      auto pa = a.pixel(x, y);
      auto pb = b.pixel(x, y);
      std::copy(pa.begin(), pa.end(), dst.begin());
      std::copy(pb.begin(), pb.end(), dst.begin() + pa.size());
    }
  return out;
}

FmapQ concat_channels_q(const FmapQ& a, const FmapQ& b) {
  if (!(a.fmt == b.fmt))
    throw std::invalid_argument("forward: fire expand outputs must share one format");
  FmapQ out(a.width(), a.height(), a.channels() + b.channels(), a.fmt);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      auto dst = out.pixel(x, y);
      auto pa = a.pixel(x, y);
      auto pb = b.pixel(x, y);
      std::copy(pa.begin(), pa.end(), dst.begin());
      std::copy(pb.begin(), pb.end(), dst.begin() + pa.size());
    }
  return out;
}

FmapF dequantize_fmap(const FmapQ& q) {
  FmapF out(q.width(), q.height(), q.channels());
  for (std::size_t i = 0; i < q.size(); ++i)
    out.data()[i] = static_cast<float>(dequantize(q.data()[i], q.fmt));
  return out;
}

FmapQ quantize_fmap(const FmapF& f, QFormat fmt) {
  FmapQ out(f.width(), f.height(), f.channels(), fmt);
  for (std::size_t i = 0; i < f.size(); ++i)
    out.data()[i] = static_cast<std::int16_t>(quantize_value(f.data()[i], fmt));
  return out;
}

struct FloatState {
  FmapF fmap;
  std::vector<double> logits;
};

FmapF conv_unit_float(const FmapF& in, const ConvUnitWeights& u, const UnitObserver& observer) {
  FmapF out = conv2d_ref(in, float_params(u), /*relu=*/true);
  if (observer) observer(u.name, in, out);
  return out;
}

FmapQ conv_unit_quant(const FmapQ& in, const ConvUnitWeights& u, Backend backend,
                      const SqjConfig& cfg, bool first_layer) {
  const QuantConvParams& q = quant_params(u);
  if (backend == Backend::kSqj) {
    if (first_layer) return conv_first_layer(in, q.weights, q.bias, q.qspec, cfg, true);
    return conv_sqj(in, q.weights, q.bias, q.qspec, cfg, true);
  }
  return conv_quant_naive(in, q.weights, q.bias, q.qspec, true, u.stride, u.pad);
}

}  // namespace

void validate_plan_weights(const NetworkDef& net, const WeightStore& store,
                           const ExecPlan& plan) {
  validate_store(store, net);
  for (const LayerSpec& l : net.layers) {
    if (!l.is_conv_like()) continue;
    for (const ConvUnitWeights& u : store.layers[l.index - 1].units) {
      if (plan.mode == RunMode::kFloat && !u.f)
        throw std::invalid_argument("plan: unit '" + u.name +
                                    "' has no float parameters for float mode");
      if (plan.mode != RunMode::kFloat && !u.q)
        throw std::invalid_argument("plan: unit '" + u.name +
                                    "' has no quantized parameters for " +
                                    mode_name(plan.mode) + std::string(" mode"));
    }
  }
}

ForwardResult forward(const NetworkDef& net, const WeightStore& store, const ExecPlan& plan,
                      const FmapF& input, const ForwardOptions& opts) {
  if (plan.layer_backend.size() != net.layers.size())
    throw std::invalid_argument("forward: plan does not cover the network");
  validate_store(store, net);
  if (input.width() != net.input_w || input.height() != net.input_h ||
      input.channels() != net.input_ch)
    throw std::invalid_argument("forward: input geometry mismatch");

  const ClockFn& clock = opts.clock ? opts.clock : steady_clock_ms;
  const bool quant = plan.mode != RunMode::kFloat;

  FmapF fmap_f = input;
  FmapQ fmap_q;
  if (quant) {
    const LayerSpec& first = net.layers.front();
    if (!first.is_conv_like())
      throw std::invalid_argument("forward: quantized modes need a leading conv layer");
    fmap_q = quantize_fmap(input, quant_params(unit_of(store, first, 0)).qspec.input_fmt);
  }

  ForwardResult result;
  std::vector<double> probs;
  bool have_float_tail = false;  // quant modes hand a float fmap to avgpool/softmax

  for (const LayerSpec& layer : net.layers) {
    const Backend backend = plan.layer_backend[layer.index - 1];
    const double t0 = opts.timing ? clock() : 0.0;

    if (!quant) {
      switch (layer.kind) {
        case LayerKind::kConv:
          fmap_f = conv_unit_float(fmap_f, unit_of(store, layer, 0), opts.observer);
          break;
        case LayerKind::kFire: {
          const FmapF squeezed =
              conv_unit_float(fmap_f, unit_of(store, layer, 0), opts.observer);
          const FmapF e1 = conv_unit_float(squeezed, unit_of(store, layer, 1), opts.observer);
          const FmapF e3 = conv_unit_float(squeezed, unit_of(store, layer, 2), opts.observer);
          fmap_f = concat_channels(e1, e3);
          break;
        }
        case LayerKind::kMaxpool:
          fmap_f = maxpool_ref(fmap_f, layer.kernel, layer.stride);
          break;
        case LayerKind::kAvgpool:
          fmap_f = avgpool_global_ref(fmap_f);
          break;
        case LayerKind::kSoftmax: {
          std::vector<double> logits(fmap_f.data().begin(), fmap_f.data().end());
          probs = softmax_ref(logits);
          break;
        }
      }
    } else {
      switch (layer.kind) {
        case LayerKind::kConv:
          fmap_q = conv_unit_quant(fmap_q, unit_of(store, layer, 0), backend, plan.sqj,
                                   layer.index == 1);
          break;
        case LayerKind::kFire: {
          const FmapQ squeezed =
              conv_unit_quant(fmap_q, unit_of(store, layer, 0), backend, plan.sqj, false);
          const FmapQ e1 =
              conv_unit_quant(squeezed, unit_of(store, layer, 1), backend, plan.sqj, false);
          const FmapQ e3 =
              conv_unit_quant(squeezed, unit_of(store, layer, 2), backend, plan.sqj, false);
          fmap_q = concat_channels_q(e1, e3);
          break;
        }
        case LayerKind::kMaxpool:
          fmap_q = maxpool_quant(fmap_q, layer.kernel, layer.stride);
          break;
        case LayerKind::kAvgpool:
          fmap_f = avgpool_global_ref(dequantize_fmap(fmap_q));
          have_float_tail = true;
          break;
        case LayerKind::kSoftmax: {
          if (!have_float_tail)
            throw std::invalid_argument("forward: softmax without a preceding avgpool");
          std::vector<double> logits(fmap_f.data().begin(), fmap_f.data().end());
          probs = softmax_ref(logits);
          break;
        }
      }
    }

    if (opts.timing) result.per_layer_ms.push_back(clock() - t0);
  }

  if (probs.empty()) throw std::invalid_argument("forward: network has no softmax layer");
  if (static_cast<int>(probs.size()) != net.classes)
    throw std::logic_error("forward: class count mismatch");
  result.probs = std::move(probs);
  return result;
}

std::vector<std::pair<int, double>> top_k(std::span<const double> probs, int k) {
  if (k <= 0) throw std::invalid_argument("top_k: k must be positive");
  if (k > static_cast<int>(probs.size()))
    throw std::invalid_argument("top_k: k exceeds the class count");
  std::vector<int> ids(probs.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&](int a, int b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });
  std::vector<std::pair<int, double>> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.emplace_back(ids[i], probs[ids[i]]);
  return out;
}

}  // namespace sqn
