#pragma once

#include <string>
#include <vector>

#include "sqn/fmap.hpp"

namespace sqn {

enum class LayerKind { kConv, kMaxpool, kFire, kAvgpool, kSoftmax };

const char* kind_name(LayerKind kind);

// One topology entry. Conv carries kernel/stride/pad and channel counts, Fire
// carries squeeze/expand widths, pools carry kernel/stride. in_* / out_* are
// filled by the composition check.
struct LayerSpec {
  int index = 0;  // 1-based, Table position
  std::string name;
  LayerKind kind = LayerKind::kConv;

  int in_ch = 0, out_ch = 0;
  int kernel = 0, stride = 1, pad = 0;
  int squeeze = 0, expand1 = 0, expand3 = 0;  // fire only

  int in_w = 0, in_h = 0, out_w = 0, out_h = 0;

  bool is_conv_like() const { return kind == LayerKind::kConv || kind == LayerKind::kFire; }
};

struct NetworkDef {
  int input_w = 0, input_h = 0, input_ch = 0;
  int classes = 0;
  std::vector<LayerSpec> layers;
};

// Validates and composes a raw definition (input geometry, classes and layers
// with declared dims); fills the per-layer in/out shapes. parse_topology and
// topology_from_store both funnel through this.
NetworkDef compose_network(NetworkDef raw);

// Parses the line-oriented topology config:
//   input <w> <h> <c>
//   classes <n>
//   layer <index> <name> <kind> key=value...
// and runs the composition check (each layer's input dims must equal its
// predecessor's output dims); violations are rejected with the layer index.
NetworkDef parse_topology(const std::string& text);
NetworkDef load_topology(const std::string& path);

// Loads a topology and additionally enforces the canonical 15-layer sequence
// Conv, Maxpool, Fire, Fire, Maxpool, Fire, Fire, Maxpool, Fire x4, Conv,
// Avgpool, Softmax.
NetworkDef build_v11_topology(const std::string& path);

// True when the layer sequence matches the canonical 15-layer order.
bool is_v11_sequence(const NetworkDef& net);

// Labels file: one class name per line, index = line number - 1.
std::vector<std::string> load_labels(const std::string& path);

}  // namespace sqn
