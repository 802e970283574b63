#pragma once

#include <map>
#include <span>
#include <string>

#include "sqn/forward.hpp"

namespace sqn {

// Largest frac_bits such that quantize_value(+-max_abs) does not saturate;
// total_bits - 1 for a zero range. total_bits must be 8 or 16.
int choose_frac_bits(double max_abs, int total_bits);

struct UnitStats {
  double input_max = 0.0;
  double output_max = 0.0;
  double weight_max = 0.0;
  double bias_max = 0.0;
};

// Per-conv-unit range maxima observed over the calibration set, keyed by unit
// name ("conv1", "fire2.squeeze", ...).
struct CalibrationStats {
  std::map<std::string, UnitStats> units;

  // Elementwise max merge; order-independent.
  void merge_max(const CalibrationStats& other);
};

// Runs the float forward pass over every sample, recording per-unit max
// absolute values of inputs, outputs, weights and biases.
CalibrationStats calibrate(const NetworkDef& net, const WeightStore& store,
                           std::span<const FmapF> samples);

// Quantizes every conv unit: weights and biases to 8 bits with per-unit
// fraction lengths from the calibrated maxima, fmap edges to 16 bits. A
// unit's input format is its producer's output format (pools pass formats
// through unchanged); fire expand1/expand3 share one output format. Returns
// the store with quantized parameters added alongside the float ones.
WeightStore quantize_network(const NetworkDef& net, const WeightStore& float_store,
                             const CalibrationStats& stats);

struct LabeledSample {
  FmapF input;
  int label = 0;
};

struct AccuracyDelta {
  double float_topk = 0.0;
  double quant_topk = 0.0;
  double delta = 0.0;  // float - quant, positive when quantization loses accuracy
};

AccuracyDelta measure_accuracy_delta(const NetworkDef& net, const WeightStore& float_store,
                                     const WeightStore& quant_store,
                                     std::span<const LabeledSample> dataset, int k);

// Text table: unit name, chosen frac_bits for weight/bias/input/output, and
// the calibrated maxima they came from.
std::string render_quantization_report(const NetworkDef& net, const WeightStore& quant_store,
                                       const CalibrationStats& stats);

}  // namespace sqn
