#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "sqn/sqj.hpp"
#include "sqn/topology.hpp"
#include "sqn/weights.hpp"

namespace sqn {

enum class RunMode { kFloat, kQuantNaive, kQuantSqj };
enum class Backend { kReferenceFloat, kReferenceQuant, kSqj };

const char* mode_name(RunMode mode);

// Per-layer backend assignment. In QUANT_SQJ mode exactly the Conv and Fire
// layers run on the accelerator model (layer 1 on the dedicated first-layer
// unit); pools and softmax always run on the reference path.
struct ExecPlan {
  RunMode mode = RunMode::kFloat;
  SqjConfig sqj{};
  std::vector<Backend> layer_backend;

  static ExecPlan make(RunMode mode, const NetworkDef& net, SqjConfig sqj = {});
};

// Monotonic clock in milliseconds; injectable so timing math is testable.
using ClockFn = std::function<double()>;
double steady_clock_ms();

// Observer over float-path conv units, used for range calibration.
using UnitObserver =
    std::function<void(const std::string& unit, const FmapF& input, const FmapF& output)>;

struct ForwardOptions {
  bool timing = false;
  ClockFn clock;           // defaults to steady_clock_ms
  UnitObserver observer;   // float mode only
};

struct ForwardResult {
  std::vector<double> probs;          // one per class
  std::vector<double> per_layer_ms;   // one per layer when timing was requested
};

// Checks that the store carries the parameter sets the plan needs (float or
// quantized per conv unit); throws naming the first unit that does not.
void validate_plan_weights(const NetworkDef& net, const WeightStore& store,
                           const ExecPlan& plan);

// Runs the network with the planned backend per layer. The input is the
// normalized float fmap; quantized modes quantize it to the first conv unit's
// input format. Quantized maxpool operates directly on 16-bit raws; avgpool
// and softmax dequantize to float first.
ForwardResult forward(const NetworkDef& net, const WeightStore& store, const ExecPlan& plan,
                      const FmapF& input, const ForwardOptions& opts = {});

// Top-k classes by probability, descending, ties broken by ascending id.
std::vector<std::pair<int, double>> top_k(std::span<const double> probs, int k);

}  // namespace sqn
