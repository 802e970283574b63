#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sqn/reference.hpp"
#include "sqn/topology.hpp"

namespace sqn {

struct QuantConvParams {
  QTensor weights;
  std::vector<std::int8_t> bias;
  LayerQSpec qspec;
};

// One convolution unit: a Conv layer owns one, a Fire layer owns three
// (squeeze, expand1, expand3 in that order). Float and quantized parameter
// sets live side by side; either may be absent.
struct ConvUnitWeights {
  std::string name;
  int out_ch = 0, in_ch = 0, kernel = 0, stride = 1, pad = 0;
  std::optional<FloatLayerParams> f;
  std::optional<QuantConvParams> q;
};

struct LayerWeights {
  LayerKind kind = LayerKind::kConv;
  std::string name;
  int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
  int squeeze = 0, expand1 = 0, expand3 = 0;
  std::vector<ConvUnitWeights> units;
};

struct WeightStore {
  std::vector<LayerWeights> layers;
};

struct WeightFileError : std::runtime_error {
  enum class Kind { kBadMagic, kBadVersion, kTruncated, kShapeMismatch, kIo };
  Kind kind;
  WeightFileError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Store skeleton for a topology: per-layer unit entries with dims filled in
// and no parameter tensors yet.
WeightStore make_store_skeleton(const NetworkDef& net);

// Shape cross-check of a store against a topology; throws on mismatch.
void validate_store(const WeightStore& store, const NetworkDef& net);

// "SQNW" container, format version 1, all multi-byte integers little-endian.
// load(save(x)) is bitwise lossless for float and quantized parameters.
std::vector<std::uint8_t> save_weights_bytes(const WeightStore& store);
WeightStore load_weights_bytes(const std::vector<std::uint8_t>& bytes);
void save_weights(const WeightStore& store, const std::string& path);
WeightStore load_weights(const std::string& path);

// Rebuilds a NetworkDef from the store's embedded kinds and dims. The class
// count is derived from the channel flow into the softmax layer.
NetworkDef topology_from_store(const WeightStore& store, int input_w, int input_h, int input_ch);

// Deterministic float parameters (fan-in scaled uniform) for a topology.
WeightStore random_float_store(const NetworkDef& net, std::uint32_t seed);

// Deterministic quantized parameters with fixed sane formats; weights and
// biases are drawn small enough that activations stay mostly unsaturated.
WeightStore random_quant_store(const NetworkDef& net, std::uint32_t seed);

}  // namespace sqn
