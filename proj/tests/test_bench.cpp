#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "sqn/bench.hpp"
#include "sqn/config.hpp"
#include "sqn/service.hpp"

using namespace sqn;

namespace {

std::mt19937 rng(91);

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

// Reference per-layer means of the i3 column used for the derivation checks.
const double kI3PerLayer[15] = {25.5531, 2.2457, 16.6766, 17.8092, 1.5101,
                                14.167,  15.1649, 0.06697, 7.7804, 8.2085,
                                13.7099, 14.2955, 36.3992, 1.6158, 0.0277};

}  // namespace

TEST_CASE("aggregate_remote: identity, constants, arithmetic mean oracle") {
  RemoteSample one{10.0, 180.0, 58.0, 238.0};
  const BenchReport single = aggregate_remote(std::vector<RemoteSample>{one});
  CHECK(single.iterations == 1);
  CHECK(*single.img_preprocessing_ms == 10.0);
  CHECK(*single.inference_ms == 180.0);
  CHECK(*single.net_transfer_ms == 58.0);
  CHECK(*single.end_to_end_ms == 238.0);
  CHECK(*single.total_ms == 248.0);

  std::vector<RemoteSample> constant(7, one);
  const BenchReport c = aggregate_remote(constant);
  CHECK(*c.end_to_end_ms == 238.0);

  // injected sequence 1..100 ms
  std::vector<RemoteSample> seq;
  for (int i = 1; i <= 100; ++i)
    seq.push_back({0.0, 0.0, 0.0, static_cast<double>(i)});
  CHECK(*aggregate_remote(seq).end_to_end_ms == doctest::Approx(50.5).epsilon(1e-12));

  // order independence within 1e-9 relative of a long-double oracle
  std::uniform_real_distribution<double> dist(0.1, 500.0);
  std::vector<RemoteSample> samples;
  long double exact = 0.0L;
  for (int i = 0; i < 100; ++i) {
    const double v = dist(rng);
    samples.push_back({0.0, 0.0, 0.0, v});
    exact += v;
  }
  const double want = static_cast<double>(exact / 100.0L);
  const double a = *aggregate_remote(samples).end_to_end_ms;
  std::shuffle(samples.begin(), samples.end(), rng);
  const double b = *aggregate_remote(samples).end_to_end_ms;
  CHECK(std::fabs(a - want) <= 1e-9 * want);
  CHECK(std::fabs(b - want) <= 1e-9 * want);
}

TEST_CASE("aggregate_local: per-layer means, totals, conv+fire sum") {
  const NetworkDef net =
      build_v11_topology(std::string(SQN_DATA_DIR) + "/squeezenet_v11.topo");

  // one synthetic iteration carrying the reference per-layer means
  std::vector<std::vector<double>> iters{
      std::vector<double>(kI3PerLayer, kI3PerLayer + 15)};
  const BenchReport r = aggregate_local(net, iters);
  REQUIRE(r.per_layer_ms.size() == 15);
  CHECK(r.layer_names[0] == "1:Conv");
  CHECK(r.layer_names[14] == "15:Softmax");
  CHECK(*r.total_conv_fire_ms == doctest::Approx(169.7643).epsilon(1e-9));

  long double total = 0.0L;
  for (double v : kI3PerLayer) total += v;
  CHECK(*r.total_ms == doctest::Approx(static_cast<double>(total)).epsilon(1e-12));

  // averaging across iterations is the arithmetic mean per layer
  std::vector<std::vector<double>> two;
  two.push_back(std::vector<double>(15, 1.0));
  two.push_back(std::vector<double>(15, 3.0));
  const BenchReport m = aggregate_local(net, two);
  for (double v : m.per_layer_ms) CHECK(v == 2.0);
}

TEST_CASE("bench_local: injected clocks drive the rows") {
  const NetworkDef net = parse_topology(kTinyTopo);
  const WeightStore store = random_float_store(net, 92);
  const ExecPlan plan = ExecPlan::make(RunMode::kFloat, net);
  const FmapF input(net.input_w, net.input_h, net.input_ch);

  const BenchReport zero =
      bench_local(net, store, plan, input, 3, [] { return 0.0; });
  CHECK(zero.iterations == 3);
  for (double v : zero.per_layer_ms) CHECK(v == 0.0);
  CHECK(*zero.total_ms == 0.0);

  double t = 0.0;
  const BenchReport ticking =
      bench_local(net, store, plan, input, 2, [&t] { return t += 1.0; });
  for (double v : ticking.per_layer_ms) CHECK(v == 1.0);
  CHECK(*ticking.total_ms == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(*ticking.total_conv_fire_ms == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("compute_fps reproduces the reference frame rates") {
  CHECK(std::fabs(compute_fps(240.1507) - 4.16) <= 0.005);
  CHECK(std::fabs(compute_fps(342.8810) - 2.92) <= 0.005);
  CHECK(std::fabs(compute_fps(5149.2687) - 0.19) <= 0.005);
  CHECK(std::fabs(compute_fps(381.7705) - 2.62) <= 0.005);
  CHECK(compute_fps(1000.0) == 1.0);
  CHECK_THROWS_AS(compute_fps(0.0), std::invalid_argument);
  CHECK_THROWS_AS(compute_fps(-1.0), std::invalid_argument);
}

TEST_CASE("compute_speedup and its reciprocal property") {
  CHECK(std::fabs(compute_speedup(5149.2687, 381.7705) - 13.487) <= 0.001);
  CHECK(compute_speedup(7.0, 7.0) == 1.0);
  std::uniform_real_distribution<double> dist(0.5, 2000.0);
  for (int i = 0; i < 200; ++i) {
    const double a = dist(rng), b = dist(rng);
    CHECK(compute_speedup(a, b) == a / b);
    CHECK(std::fabs(compute_speedup(a, b) * compute_speedup(b, a) - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(compute_speedup(0.0, 1.0), std::invalid_argument);
}

TEST_CASE("power_efficiency from a profile") {
  PowerProfile profile;
  profile.chip_watts = {{"i3", 4.1187}, {"i5", 5.9883}, {"arm", 1.629}, {"arm_sqj", 2.227}};
  CHECK(std::fabs(power_efficiency(profile, "i5", "arm_sqj") - 2.689) <= 0.01);
  CHECK(power_efficiency(profile, "i3", "i3") == 1.0);
  std::uniform_real_distribution<double> dist(0.5, 50.0);
  for (int i = 0; i < 100; ++i) {
    profile.chip_watts["a"] = dist(rng);
    profile.chip_watts["b"] = dist(rng);
    CHECK(power_efficiency(profile, "a", "b") ==
          profile.chip_watts["a"] / profile.chip_watts["b"]);
  }
  CHECK_THROWS_WITH_AS(power_efficiency(profile, "riscv", "i3"), doctest::Contains("riscv"),
                       std::invalid_argument);
}

TEST_CASE("report rendering: machine formats round-trip, table carries row names") {
  BenchReport remote;
  remote.iterations = 100;
  remote.img_preprocessing_ms = 10.0961;
  remote.inference_ms = 181.8990;
  remote.net_transfer_ms = 58.2517;
  remote.end_to_end_ms = 240.1507;
  remote.total_ms = 250.2468;

  CHECK(parse_report_csv(render_report(remote, ReportFormat::kCsv)) == remote);
  CHECK(parse_report_jsonl(render_report(remote, ReportFormat::kJsonLines)) == remote);

  const std::string table = render_report(remote, ReportFormat::kTable);
  for (const char* row : {"Img Preprocessing", "SqN Inference", "Net Transfer", "End-To-End",
                          "Total"})
    CHECK(table.find(row) != std::string::npos);
  CHECK(table.find("4.16") != std::string::npos);  // fps to two decimals
  // no per-layer section in remote mode
  CHECK(table.find(":Conv") == std::string::npos);

  // local report with awkward doubles survives the text round trip exactly
  const NetworkDef net =
      build_v11_topology(std::string(SQN_DATA_DIR) + "/squeezenet_v11.topo");
  std::vector<std::vector<double>> iters{std::vector<double>(15)};
  std::uniform_real_distribution<double> dist(0.001, 97.0);
  for (auto& v : iters[0]) v = dist(rng) / 3.0;
  const BenchReport local = aggregate_local(net, iters);
  CHECK(parse_report_csv(render_report(local, ReportFormat::kCsv)) == local);
  CHECK(parse_report_jsonl(render_report(local, ReportFormat::kJsonLines)) == local);
  const std::string ltable = render_report(local, ReportFormat::kTable);
  CHECK(ltable.find("1:Conv") != std::string::npos);
  CHECK(ltable.find("Total Conv+Fire") != std::string::npos);

  CHECK(parse_report_format("csv") == ReportFormat::kCsv);
  CHECK_THROWS_AS(parse_report_format("xml"), std::invalid_argument);
}

TEST_CASE("bench_remote: live loopback run and failure abort") {
  // 1000-class model with small channels, servable geometry
  auto model = std::make_shared<LoadedModel>();
  model->net = parse_topology(R"(
input 227 227 3
classes 1000
layer 1 c1 conv in=3 out=16 kernel=3 stride=2 pad=0
layer 2 p1 maxpool kernel=3 stride=2
layer 3 p2 maxpool kernel=3 stride=2
layer 4 p3 maxpool kernel=3 stride=2
layer 5 c10 conv in=16 out=1000 kernel=1 stride=1 pad=0
layer 6 ap avgpool
layer 7 sm softmax
)");
  model->store = random_quant_store(model->net, 93);
  model->plan = ExecPlan::make(RunMode::kQuantSqj, model->net);
  InferenceService server(model, {});
  server.start();

  // a small synthetic image; bench resizes it to 227
  ImageU8 img;
  img.width = 32;
  img.height = 32;
  img.rgb.resize(32 * 32 * 3);
  std::uniform_int_distribution<int> px(0, 255);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(px(rng));
  const std::vector<std::uint8_t> file = encode_ppm(img);

  const BenchReport r = bench_remote("127.0.0.1", server.port(), file, PreprocessConfig{}, 3);
  CHECK(r.iterations == 3);
  CHECK(*r.img_preprocessing_ms >= 0.0);
  CHECK(*r.end_to_end_ms > 0.0);
  CHECK(*r.end_to_end_ms >= *r.net_transfer_ms);
  CHECK(*r.total_ms == doctest::Approx(*r.end_to_end_ms + *r.img_preprocessing_ms)
                           .epsilon(1e-9));
  const std::uint16_t port = server.port();
  server.stop();

  // failed iteration aborts with its index
  CHECK_THROWS_WITH_AS(bench_remote("127.0.0.1", port, file, PreprocessConfig{}, 2),
                       doctest::Contains("iteration 1"), std::runtime_error);
}
