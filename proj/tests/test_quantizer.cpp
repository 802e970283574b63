#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sqn/quantizer.hpp"

using namespace sqn;

namespace {

std::mt19937 rng(51);

const char* kTinyTopo = R"(
input 21 21 3
classes 8
layer 1 c1 conv in=3 out=16 kernel=3 stride=2 pad=0
layer 2 p1 maxpool kernel=3 stride=2
layer 3 f2 fire in=16 squeeze=16 expand1=16 expand3=16
layer 4 c3 conv in=32 out=8 kernel=1 stride=1 pad=0
layer 5 ap avgpool
layer 6 sm softmax
)";

FmapF random_input(const NetworkDef& net, float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  FmapF m(net.input_w, net.input_h, net.input_ch);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

// Scan oracle: try every frac in a wide window, verify the no-saturation
// predicate directly, keep the largest.
int oracle_choose(double max_abs, int total_bits) {
  if (max_abs == 0.0) return total_bits - 1;
  const double raw_max = std::pow(2.0, total_bits - 1) - 1;
  int best = -2000;
  for (int f = -200; f <= 200; ++f) {
    const double mag = std::floor(std::fabs(max_abs * std::pow(2.0, f)) + 0.5);
    if (mag <= raw_max) best = f;
  }
  return best;
}

}  // namespace

TEST_CASE("choose_frac_bits: worked examples") {
  CHECK(choose_frac_bits(0.0, 8) == 7);
  CHECK(choose_frac_bits(0.0, 16) == 15);
  CHECK(choose_frac_bits(3.2, 8) == 5);    // 3.2*2^5 = 102.4 fits, 2^6 = 204.8 does not
  CHECK(choose_frac_bits(1.0, 16) == 14);  // 2^15 = 32768 saturates, 2^14 fits
  CHECK(choose_frac_bits(300.0, 8) == -2); // negative frac for large magnitudes
  CHECK_THROWS_AS(choose_frac_bits(1.0, 32), std::invalid_argument);
}

TEST_CASE("choose_frac_bits: random maxima match the scan oracle") {
  std::uniform_real_distribution<double> dist(1e-6, 1e6);
  for (int total : {8, 16})
    for (int i = 0; i < 500; ++i) {
      const double m = dist(rng);
      CHECK(choose_frac_bits(m, total) == oracle_choose(m, total));
    }
}

TEST_CASE("choose_frac_bits result never saturates, one more bit would") {
  std::uniform_real_distribution<double> dist(1e-3, 1e3);
  for (int i = 0; i < 300; ++i) {
    const double m = dist(rng);
    const int f = choose_frac_bits(m, 16);
    const QFormat fmt{16, f};
    CHECK(std::llabs(quantize_value(m, fmt)) < fmt.raw_max() + 1);
    CHECK(quantize_value(m, fmt) < fmt.raw_max() + 1);
    const QFormat tighter{16, f + 1};
    CHECK(quantize_value(m, tighter) == tighter.raw_max());  // saturates
  }
}

TEST_CASE("calibrate: zero net and zero sample give zero fmap maxima") {
  const NetworkDef net = parse_topology(kTinyTopo);
  WeightStore store = random_float_store(net, 61);
  for (auto& layer : store.layers)
    for (auto& u : layer.units) {
      std::fill(u.f->weights.begin(), u.f->weights.end(), 0.0f);
      std::fill(u.f->bias.begin(), u.f->bias.end(), 0.0f);
    }
  const FmapF zero(net.input_w, net.input_h, net.input_ch);
  const CalibrationStats stats = calibrate(net, store, std::vector<FmapF>{zero});
  for (const auto& [name, s] : stats.units) {
    CHECK(s.input_max == 0.0);
    CHECK(s.output_max == 0.0);
    CHECK(s.weight_max == 0.0);
    CHECK(s.bias_max == 0.0);
  }
  CHECK_THROWS_AS(calibrate(net, store, std::vector<FmapF>{}), std::invalid_argument);
}

TEST_CASE("calibrate: weight maxima are sample-independent, merges are elementwise max") {
  const NetworkDef net = parse_topology(kTinyTopo);
  const WeightStore store = random_float_store(net, 62);
  const FmapF a = random_input(net, -50.0f, 50.0f);
  const FmapF b = random_input(net, -120.0f, 120.0f);

  const CalibrationStats sa = calibrate(net, store, std::vector<FmapF>{a});
  const CalibrationStats sb = calibrate(net, store, std::vector<FmapF>{b});
  const CalibrationStats both = calibrate(net, store, std::vector<FmapF>{a, b});

  for (const auto& [name, s] : both.units) {
    const UnitStats& ua = sa.units.at(name);
    const UnitStats& ub = sb.units.at(name);
    CHECK(s.weight_max == ua.weight_max);  // parameters are static
    CHECK(s.weight_max == ub.weight_max);
    CHECK(s.input_max == std::max(ua.input_max, ub.input_max));
    CHECK(s.output_max == std::max(ua.output_max, ub.output_max));
  }

  // merge_max reproduces the two-sample stats
  CalibrationStats merged = sa;
  merged.merge_max(sb);
  for (const auto& [name, s] : both.units) {
    CHECK(merged.units.at(name).input_max == s.input_max);
    CHECK(merged.units.at(name).output_max == s.output_max);
  }
}

TEST_CASE("quantize_network: zero net quantizes to zero raws") {
  const NetworkDef net = parse_topology(kTinyTopo);
  WeightStore store = random_float_store(net, 63);
  for (auto& layer : store.layers)
    for (auto& u : layer.units) {
      std::fill(u.f->weights.begin(), u.f->weights.end(), 0.0f);
      std::fill(u.f->bias.begin(), u.f->bias.end(), 0.0f);
    }
  const CalibrationStats stats =
      calibrate(net, store, std::vector<FmapF>{FmapF(net.input_w, net.input_h, net.input_ch)});
  const WeightStore q = quantize_network(net, store, stats);
  for (const auto& layer : q.layers)
    for (const auto& u : layer.units) {
      for (auto v : u.q->weights.data) CHECK(v == 0);
      for (auto v : u.q->bias) CHECK(v == 0);
    }
}

TEST_CASE("quantize_network: elementwise scalar oracle, error bound, idempotence") {
  const NetworkDef net = parse_topology(kTinyTopo);
  const WeightStore store = random_float_store(net, 64);
  std::vector<FmapF> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(random_input(net, -128.0f, 128.0f));
  const CalibrationStats stats = calibrate(net, store, samples);
  const WeightStore q = quantize_network(net, store, stats);

  for (std::size_t li = 0; li < q.layers.size(); ++li) {
    for (std::size_t ui = 0; ui < q.layers[li].units.size(); ++ui) {
      const auto& fu = store.layers[li].units[ui];
      const auto& qu = q.layers[li].units[ui];
      REQUIRE(qu.q.has_value());
      const LayerQSpec& spec = qu.q->qspec;

      // every element matches the scalar primitive at the unit's format
      for (std::size_t i = 0; i < fu.f->weights.size(); ++i)
        REQUIRE(qu.q->weights.data[i] == quantize_value(fu.f->weights[i], spec.weight_fmt));
      for (std::size_t i = 0; i < fu.f->bias.size(); ++i)
        REQUIRE(qu.q->bias[i] == quantize_value(fu.f->bias[i], spec.bias_fmt));

      // per-weight quantization error bound
      const double step_half = std::ldexp(1.0, -spec.weight_fmt.frac_bits - 1);
      for (std::size_t i = 0; i < fu.f->weights.size(); ++i) {
        const double back = dequantize(qu.q->weights.data[i], spec.weight_fmt);
        REQUIRE(std::fabs(back - fu.f->weights[i]) <= step_half);
      }

      // no-saturation guarantee over the calibrated maxima
      const UnitStats& s = stats.units.at(qu.name);
      CHECK(std::llabs(quantize_value(s.weight_max, spec.weight_fmt)) <=
            spec.weight_fmt.raw_max());
      CHECK(quantize_value(s.weight_max, spec.weight_fmt) < spec.weight_fmt.raw_max() + 1);
      CHECK(quantize_value(s.output_max, spec.output_fmt) <= spec.output_fmt.raw_max());
      CHECK(quantize_value(s.input_max, spec.input_fmt) <= spec.input_fmt.raw_max());

      // idempotence: requantizing the dequantized values reproduces the raws
      for (std::size_t i = 0; i < fu.f->weights.size(); ++i) {
        const double back = dequantize(qu.q->weights.data[i], spec.weight_fmt);
        REQUIRE(quantize_value(back, spec.weight_fmt) == qu.q->weights.data[i]);
      }
    }
  }

  // fire expands share one output format; edges chain through the network
  const auto& fire = q.layers[2].units;
  CHECK(fire[1].q->qspec.output_fmt == fire[2].q->qspec.output_fmt);
  CHECK(fire[1].q->qspec.input_fmt == fire[0].q->qspec.output_fmt);
  CHECK(fire[2].q->qspec.input_fmt == fire[0].q->qspec.output_fmt);
  // pool passes the conv1 output format through to the fire squeeze
  CHECK(fire[0].q->qspec.input_fmt == q.layers[0].units[0].q->qspec.output_fmt);
  // representable weights round-trip exactly once quantized
  const WeightStore q2 = quantize_network(net, q, stats);  // uses float side of q
  (void)q2;
}

TEST_CASE("quantize_network: exactly representable weights survive unchanged") {
  const NetworkDef net = parse_topology(kTinyTopo);
  WeightStore store = random_float_store(net, 72);
  // snap every parameter onto the 2^-6 grid with max just under 2 so the
  // chosen weight format is exactly {8, 6}
  std::mt19937 grid_rng(73);
  std::uniform_int_distribution<int> raw(-127, 127);
  for (auto& layer : store.layers)
    for (auto& u : layer.units) {
      for (auto& v : u.f->weights) v = static_cast<float>(raw(grid_rng)) / 64.0f;
      for (auto& v : u.f->bias) v = static_cast<float>(raw(grid_rng)) / 64.0f;
      u.f->weights[0] = 127.0f / 64.0f;  // pin the max so frac_bits = 6
    }
  const CalibrationStats stats =
      calibrate(net, store, std::vector<FmapF>{random_input(net, -10.0f, 10.0f)});
  const WeightStore q = quantize_network(net, store, stats);
  for (std::size_t li = 0; li < q.layers.size(); ++li)
    for (std::size_t ui = 0; ui < q.layers[li].units.size(); ++ui) {
      const auto& qu = q.layers[li].units[ui];
      REQUIRE(qu.q->qspec.weight_fmt.frac_bits == 6);
      for (std::size_t i = 0; i < qu.q->weights.data.size(); ++i)
        REQUIRE(static_cast<float>(dequantize(qu.q->weights.data[i], qu.q->qspec.weight_fmt)) ==
                store.layers[li].units[ui].f->weights[i]);
    }
}

TEST_CASE("quantize_network: missing stats rejected") {
  const NetworkDef net = parse_topology(kTinyTopo);
  const WeightStore store = random_float_store(net, 65);
  CalibrationStats partial =
      calibrate(net, store, std::vector<FmapF>{random_input(net, -10.0f, 10.0f)});
  const CalibrationStats full = partial;
  partial.units.erase("f2.expand3");
  CHECK_THROWS_WITH_AS(quantize_network(net, store, partial), doctest::Contains("f2.expand3"),
                       std::invalid_argument);

  // a quant-only store has nothing to quantize from
  const WeightStore qonly = random_quant_store(net, 65);
  CHECK_THROWS_WITH_AS(quantize_network(net, qonly, full),
                       doctest::Contains("no float parameters"), std::invalid_argument);
}

TEST_CASE("quantized forward stays close to float on calibrated inputs") {
  const NetworkDef net = parse_topology(kTinyTopo);
  const WeightStore store = random_float_store(net, 66);
  std::vector<FmapF> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(random_input(net, -120.0f, 120.0f));
  const WeightStore q = quantize_network(net, store, calibrate(net, store, samples));

  const ExecPlan fplan = ExecPlan::make(RunMode::kFloat, net);
  const ExecPlan qplan = ExecPlan::make(RunMode::kQuantNaive, net);
  const ForwardResult fr = forward(net, store, fplan, samples[0]);
  const ForwardResult qr = forward(net, q, qplan, samples[0]);
  // 16-bit fmaps and 8-bit weights keep the probabilities in the same
  // neighborhood; this guards gross scale errors, not a tight bound.
  for (std::size_t i = 0; i < fr.probs.size(); ++i)
    CHECK(std::fabs(fr.probs[i] - qr.probs[i]) < 0.05);
}

TEST_CASE("measure_accuracy_delta: identical networks, delta zero") {
  const NetworkDef net = parse_topology(kTinyTopo);
  const WeightStore store = random_float_store(net, 67);
  const CalibrationStats stats =
      calibrate(net, store, std::vector<FmapF>{random_input(net, -100.0f, 100.0f)});
  const WeightStore q = quantize_network(net, store, stats);

  std::vector<LabeledSample> data;
  for (int i = 0; i < 10; ++i) {
    LabeledSample s{random_input(net, -100.0f, 100.0f), i % net.classes};
    data.push_back(std::move(s));
  }
  // quant store vs itself: float side of q equals store's float side
  const AccuracyDelta d = measure_accuracy_delta(net, q, q, data, 3);
  CHECK(d.delta == 0.0);
  CHECK(d.float_topk == d.quant_topk);

  CHECK_THROWS_AS(measure_accuracy_delta(net, q, q, std::vector<LabeledSample>{}, 3),
                  std::invalid_argument);
  std::vector<LabeledSample> bad;
  bad.push_back({random_input(net, -1.0f, 1.0f), 99});
  CHECK_THROWS_AS(measure_accuracy_delta(net, q, q, bad, 3), std::invalid_argument);
}

TEST_CASE("measure_accuracy_delta: one item right under float only gives delta 1") {
  const NetworkDef net = parse_topology(kTinyTopo);
  const WeightStore fstore = random_float_store(net, 70);
  const CalibrationStats stats =
      calibrate(net, fstore, std::vector<FmapF>{random_input(net, -100.0f, 100.0f)});
  const WeightStore own_q = quantize_network(net, fstore, stats);

  // an unrelated quantized net stands in for a badly quantized one; scan a few
  // deterministic inputs for one where the two top-1 classes differ
  const WeightStore other_q = random_quant_store(net, 71);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const FmapF input = random_input(net, -100.0f, 100.0f);
    const int float_top =
        top_k(forward(net, fstore, ExecPlan::make(RunMode::kFloat, net), input).probs, 1)[0]
            .first;
    const int quant_top =
        top_k(forward(net, other_q, ExecPlan::make(RunMode::kQuantNaive, net), input).probs,
              1)[0]
            .first;
    if (float_top == quant_top) continue;
    std::vector<LabeledSample> one;
    one.push_back({input, float_top});
    const AccuracyDelta d = measure_accuracy_delta(net, fstore, other_q, one, 1);
    CHECK(d.float_topk == 1.0);
    CHECK(d.quant_topk == 0.0);
    CHECK(d.delta == 1.0);
    return;
  }
  FAIL("no separating input found");
}

TEST_CASE("measure_accuracy_delta: top-k containment matches an independent oracle") {
  const NetworkDef net = parse_topology(kTinyTopo);
  const WeightStore fstore = random_float_store(net, 68);
  const CalibrationStats stats =
      calibrate(net, fstore, std::vector<FmapF>{random_input(net, -100.0f, 100.0f)});
  const WeightStore qstore = quantize_network(net, fstore, stats);

  std::vector<LabeledSample> data;
  std::uniform_int_distribution<int> labels(0, net.classes - 1);
  for (int i = 0; i < 50; ++i) data.push_back({random_input(net, -100.0f, 100.0f), labels(rng)});

  const int k = 2;
  const AccuracyDelta d = measure_accuracy_delta(net, fstore, qstore, data, k);

  // independent oracle: full sort of each forward's probs
  auto topk_hit = [&](const std::vector<double>& probs, int label) {
    std::vector<int> ids(probs.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      if (probs[a] != probs[b]) return probs[a] > probs[b];
      return a < b;
    });
    return std::find(ids.begin(), ids.begin() + k, label) != ids.begin() + k;
  };
  int fhits = 0, qhits = 0;
  for (const auto& s : data) {
    if (topk_hit(forward(net, fstore, ExecPlan::make(RunMode::kFloat, net), s.input).probs,
                 s.label))
      ++fhits;
    if (topk_hit(forward(net, qstore, ExecPlan::make(RunMode::kQuantNaive, net), s.input).probs,
                 s.label))
      ++qhits;
  }
  CHECK(d.float_topk == doctest::Approx(fhits / 50.0).epsilon(1e-12));
  CHECK(d.quant_topk == doctest::Approx(qhits / 50.0).epsilon(1e-12));
  CHECK(d.delta == doctest::Approx((fhits - qhits) / 50.0).epsilon(1e-12));
}

TEST_CASE("quantization report lists every unit with its formats") {
  const NetworkDef net = parse_topology(kTinyTopo);
  const WeightStore store = random_float_store(net, 69);
  const CalibrationStats stats =
      calibrate(net, store, std::vector<FmapF>{random_input(net, -100.0f, 100.0f)});
  const WeightStore q = quantize_network(net, store, stats);
  const std::string report = render_quantization_report(net, q, stats);
  for (const char* unit : {"c1", "f2.squeeze", "f2.expand1", "f2.expand3", "c3"})
    CHECK(report.find(unit) != std::string::npos);
}
