#include "sqn/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sqn {

int choose_frac_bits(double max_abs, int total_bits) {
  if (total_bits != 8 && total_bits != 16)
    throw std::invalid_argument("choose_frac_bits: total_bits must be 8 or 16");
  if (max_abs < 0.0 || !std::isfinite(max_abs))
    throw std::invalid_argument("choose_frac_bits: max_abs must be finite and >= 0");
  if (max_abs == 0.0) return total_bits - 1;

  const QFormat probe{total_bits, 0};
  const double raw_max = static_cast<double>(probe.raw_max());
  // Start above any feasible value and scan down until +-max_abs fits.
  int frac = total_bits - std::ilogb(max_abs);
  while (std::round(std::ldexp(max_abs, frac)) > raw_max) --frac;
  return frac;
}

void CalibrationStats::merge_max(const CalibrationStats& other) {
  for (const auto& [name, s] : other.units) {
    UnitStats& mine = units[name];
    mine.input_max = std::max(mine.input_max, s.input_max);
    mine.output_max = std::max(mine.output_max, s.output_max);
    mine.weight_max = std::max(mine.weight_max, s.weight_max);
    mine.bias_max = std::max(mine.bias_max, s.bias_max);
  }
}

namespace {

double max_abs(std::span<const float> values) {
  double m = 0.0;
  for (float v : values) m = std::max(m, std::fabs(static_cast<double>(v)));
  return m;
}

// Unit names in network order, with their store references.
std::vector<const ConvUnitWeights*> conv_units(const NetworkDef& net, const WeightStore& store) {
  std::vector<const ConvUnitWeights*> units;
  for (const LayerSpec& l : net.layers) {
    const LayerWeights& lw = store.layers.at(l.index - 1);
    for (const ConvUnitWeights& u : lw.units) units.push_back(&u);
  }
  return units;
}

const UnitStats& stats_for(const CalibrationStats& stats, const std::string& unit) {
  auto it = stats.units.find(unit);
  if (it == stats.units.end())
    throw std::invalid_argument("quantize_network: missing calibration stats for unit '" +
                                unit + "'");
  return it->second;
}

}  // namespace

CalibrationStats calibrate(const NetworkDef& net, const WeightStore& store,
                           std::span<const FmapF> samples) {
  if (samples.empty()) throw std::invalid_argument("calibrate: empty sample set");
  validate_store(store, net);

  CalibrationStats stats;
  for (const ConvUnitWeights* u : conv_units(net, store)) {
    if (!u->f)
      throw std::invalid_argument("calibrate: unit '" + u->name + "' has no float parameters");
    UnitStats& s = stats.units[u->name];
    s.weight_max = max_abs(u->f->weights);
    s.bias_max = max_abs(u->f->bias);
  }

  const ExecPlan plan = ExecPlan::make(RunMode::kFloat, net);
  for (const FmapF& sample : samples) {
    ForwardOptions opts;
    opts.observer = [&stats](const std::string& unit, const FmapF& in, const FmapF& out) {
      UnitStats& s = stats.units[unit];
      s.input_max = std::max(s.input_max, max_abs(in.data()));
      s.output_max = std::max(s.output_max, max_abs(out.data()));
    };
    forward(net, store, plan, sample, opts);
  }
  return stats;
}

WeightStore quantize_network(const NetworkDef& net, const WeightStore& float_store,
                             const CalibrationStats& stats) {
  validate_store(float_store, net);
  WeightStore store = float_store;

  bool have_edge = false;
  QFormat edge_fmt{16, 0};  // format of the fmap flowing between layers

  for (const LayerSpec& l : net.layers) {
    LayerWeights& lw = store.layers[l.index - 1];
    if (lw.units.empty()) continue;  // pools and softmax carry no parameters

    // Parameter formats per unit.
    std::vector<LayerQSpec> specs(lw.units.size());
    for (std::size_t ui = 0; ui < lw.units.size(); ++ui) {
      const UnitStats& s = stats_for(stats, lw.units[ui].name);
      specs[ui].weight_fmt = {8, choose_frac_bits(s.weight_max, 8)};
      specs[ui].bias_fmt = {8, choose_frac_bits(s.bias_max, 8)};
    }

    if (!have_edge) {
      // The first conv unit anchors the edge format chain from its own
      // calibrated input range (the preprocessed network input).
      edge_fmt = {16, choose_frac_bits(stats_for(stats, lw.units[0].name).input_max, 16)};
      have_edge = true;
    }

    if (l.kind == LayerKind::kConv) {
      specs[0].input_fmt = edge_fmt;
      specs[0].output_fmt = {
          16, choose_frac_bits(stats_for(stats, lw.units[0].name).output_max, 16)};
      edge_fmt = specs[0].output_fmt;
    } else {  // fire
      specs[0].input_fmt = edge_fmt;
      specs[0].output_fmt = {
          16, choose_frac_bits(stats_for(stats, lw.units[0].name).output_max, 16)};
      const double expand_max = std::max(stats_for(stats, lw.units[1].name).output_max,
                                         stats_for(stats, lw.units[2].name).output_max);
      const QFormat expand_fmt{16, choose_frac_bits(expand_max, 16)};
      specs[1].input_fmt = specs[2].input_fmt = specs[0].output_fmt;
      specs[1].output_fmt = specs[2].output_fmt = expand_fmt;
      edge_fmt = expand_fmt;
    }

    for (std::size_t ui = 0; ui < lw.units.size(); ++ui) {
      ConvUnitWeights& u = lw.units[ui];
      if (!u.f)
        throw std::invalid_argument("quantize_network: unit '" + u.name +
                                    "' has no float parameters");
      QuantConvParams q;
      q.qspec = specs[ui];
      q.weights = QTensor(u.out_ch, u.in_ch, u.kernel, u.kernel, q.qspec.weight_fmt);
      for (std::size_t i = 0; i < u.f->weights.size(); ++i)
        q.weights.data[i] =
            static_cast<std::int8_t>(quantize_value(u.f->weights[i], q.qspec.weight_fmt));
      q.bias.resize(u.f->bias.size());
      for (std::size_t i = 0; i < u.f->bias.size(); ++i)
        q.bias[i] = static_cast<std::int8_t>(quantize_value(u.f->bias[i], q.qspec.bias_fmt));
      u.q = std::move(q);
    }
  }
  return store;
}

AccuracyDelta measure_accuracy_delta(const NetworkDef& net, const WeightStore& float_store,
                                     const WeightStore& quant_store,
                                     std::span<const LabeledSample> dataset, int k) {
  if (dataset.empty()) throw std::invalid_argument("measure_accuracy_delta: empty dataset");
  if (k < 1 || k > net.classes)
    throw std::invalid_argument("measure_accuracy_delta: k out of range");
  for (const LabeledSample& s : dataset)
    if (s.label < 0 || s.label >= net.classes)
      throw std::invalid_argument("measure_accuracy_delta: label " + std::to_string(s.label) +
                                  " outside class range");

  const ExecPlan fplan = ExecPlan::make(RunMode::kFloat, net);
  const ExecPlan qplan = ExecPlan::make(RunMode::kQuantNaive, net);

  auto hit = [&](const std::vector<double>& probs, int label) {
    for (const auto& [cls, p] : top_k(probs, k))
      if (cls == label) return true;
    return false;
  };

  int float_hits = 0, quant_hits = 0;
  for (const LabeledSample& s : dataset) {
    if (hit(forward(net, float_store, fplan, s.input).probs, s.label)) ++float_hits;
    if (hit(forward(net, quant_store, qplan, s.input).probs, s.label)) ++quant_hits;
  }
  AccuracyDelta d;
  d.float_topk = static_cast<double>(float_hits) / static_cast<double>(dataset.size());
  d.quant_topk = static_cast<double>(quant_hits) / static_cast<double>(dataset.size());
  d.delta = d.float_topk - d.quant_topk;
  return d;
}

std::string render_quantization_report(const NetworkDef& net, const WeightStore& quant_store,
                                       const CalibrationStats& stats) {
  std::ostringstream out;
  out << "unit                 wfrac bfrac infrac outfrac   max|w|     max|b|     max|in|    max|out|\n";
  char line[256];
  for (const LayerSpec& l : net.layers) {
    for (const ConvUnitWeights& u : quant_store.layers[l.index - 1].units) {
      if (!u.q) continue;
      const auto it = stats.units.find(u.name);
      const UnitStats s = it == stats.units.end() ? UnitStats{} : it->second;
      std::snprintf(line, sizeof(line),
                    "%-20s %5d %5d %6d %7d   %-10.4g %-10.4g %-10.4g %-10.4g\n",
                    u.name.c_str(), u.q->qspec.weight_fmt.frac_bits,
                    u.q->qspec.bias_fmt.frac_bits, u.q->qspec.input_fmt.frac_bits,
                    u.q->qspec.output_fmt.frac_bits, s.weight_max, s.bias_max, s.input_max,
                    s.output_max);
      out << line;
    }
  }
  return out.str();
}

}  // namespace sqn
