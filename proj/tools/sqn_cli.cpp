// Command-line front end: recognition service, remote client, quantization
// and benchmarking around the SqueezeNet/SqueezeJet engine.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <random>
#include <thread>

#include "sqn/bench.hpp"
#include "sqn/client.hpp"
#include "sqn/config.hpp"
#include "sqn/quantizer.hpp"
#include "sqn/service.hpp"

using namespace sqn;

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

AppConfig config_or_default(const std::string& path) {
  if (path.empty()) return AppConfig{};
  return load_app_config(path);
}

RunMode parse_mode(const std::string& name) {
  if (name == "float") return RunMode::kFloat;
  if (name == "quant-naive") return RunMode::kQuantNaive;
  if (name == "quant-sqj") return RunMode::kQuantSqj;
  throw std::invalid_argument("unknown mode '" + name + "' (float|quant-naive|quant-sqj)");
}

NetworkDef net_for(const std::string& topology_path, const WeightStore& store) {
  if (!topology_path.empty()) {
    NetworkDef net = load_topology(topology_path);
    validate_store(store, net);
    return net;
  }
  return topology_from_store(store, 227, 227, 3);
}

std::string label_of(const std::vector<std::string>& labels, int cls) {
  if (cls >= 0 && cls < static_cast<int>(labels.size())) return labels[cls];
  return "class " + std::to_string(cls);
}

// Deterministic synthetic image for benchmarks without an input file.
ImageU8 synthetic_image(int w, int h, std::uint32_t seed) {
  ImageU8 img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> noise(-24, 24);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const int ramp = (x * 191 / std::max(1, w - 1) + y * 64 / std::max(1, h - 1) +
                          c * 37) % 256;
        const int v = std::clamp(ramp + noise(rng), 0, 255);
        img.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint8_t>(v);
      }
  return img;
}

int cmd_serve(const std::string& weights, const std::string& topology,
              const std::string& labels_path, const std::string& config_path, int port,
              int max_pending, const std::string& mode, double deadline) {
  auto model = std::make_shared<LoadedModel>();
  model->store = load_weights(weights);
  model->net = net_for(topology, model->store);
  model->plan = ExecPlan::make(parse_mode(mode), model->net);
  model->preprocess = config_or_default(config_path).preprocess;
  if (!labels_path.empty()) model->labels = load_labels(labels_path);

  ServiceConfig cfg;
  cfg.port = static_cast<std::uint16_t>(port);
  cfg.max_pending = max_pending;
  cfg.read_deadline_s = deadline;
  cfg.log = true;
  InferenceService server(model, cfg);
  server.start();
  std::printf("serving on port %u (%s mode), ctrl-c to stop\n", server.port(),
              mode_name(model->plan.mode));

  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::printf("shutting down after %llu requests\n",
              static_cast<unsigned long long>(server.requests_served()));
  server.stop();
  return 0;
}

int cmd_classify(const std::string& host, int port, const std::string& image_path,
                 const std::string& labels_path, const std::string& config_path) {
  const AppConfig cfg = config_or_default(config_path);
  const ImageU8 raw = load_ppm(image_path);
  const ImageU8 sized = resize_bilinear(raw, cfg.preprocess.target_w, cfg.preprocess.target_h);
  const ClassifyResult r =
      client_classify(host, static_cast<std::uint16_t>(port), sized);

  std::vector<std::string> labels;
  if (!labels_path.empty()) labels = load_labels(labels_path);
  for (const auto& e : r.entries)
    std::printf("%4u  %-24s %.6f\n", e.class_id, label_of(labels, e.class_id).c_str(),
                e.probability);
  std::printf("net transfer %.3f ms, end-to-end %.3f ms\n", r.timing.net_transfer_ms,
              r.timing.end_to_end_ms);
  return 0;
}

int cmd_quantize(const std::string& weights_in, const std::string& calib_dir,
                 const std::string& weights_out, const std::string& topology,
                 const std::string& config_path) {
  const AppConfig cfg = config_or_default(config_path);
  const WeightStore fstore = load_weights(weights_in);
  const NetworkDef net = net_for(topology, fstore);

  std::vector<FmapF> samples;
  for (const auto& entry : std::filesystem::directory_iterator(calib_dir)) {
    if (entry.path().extension() != ".ppm") continue;
    const ImageU8 img = load_ppm(entry.path().string());
    const ImageU8 sized =
        resize_bilinear(img, cfg.preprocess.target_w, cfg.preprocess.target_h);
    samples.push_back(normalize_float(sized, cfg.preprocess));
  }
  if (samples.empty())
    throw std::runtime_error("quantize: no .ppm calibration images in " + calib_dir);
  std::printf("calibrating over %zu images...\n", samples.size());

  const CalibrationStats stats = calibrate(net, fstore, samples);
  const WeightStore qstore = quantize_network(net, fstore, stats);
  std::fputs(render_quantization_report(net, qstore, stats).c_str(), stdout);
  save_weights(qstore, weights_out);
  std::printf("wrote %s\n", weights_out.c_str());
  return 0;
}

int cmd_bench_remote(const std::string& host, int port, const std::string& image_path,
                     int iterations, const std::string& format,
                     const std::string& config_path) {
  const AppConfig cfg = config_or_default(config_path);
  std::ifstream in(image_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + image_path);
  const std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
  const BenchReport r = bench_remote(host, static_cast<std::uint16_t>(port), file,
                                     cfg.preprocess, iterations);
  std::fputs(render_report(r, parse_report_format(format)).c_str(), stdout);
  return 0;
}

int cmd_bench_local(const std::string& weights, const std::string& topology,
                    const std::string& mode, int iterations, const std::string& image_path,
                    const std::string& format, const std::string& config_path) {
  const AppConfig cfg = config_or_default(config_path);
  const WeightStore store = load_weights(weights);
  const NetworkDef net = net_for(topology, store);
  const ExecPlan plan = ExecPlan::make(parse_mode(mode), net);
  validate_plan_weights(net, store, plan);

  ImageU8 img = image_path.empty() ? synthetic_image(net.input_w, net.input_h, 1)
                                   : load_ppm(image_path);
  img = resize_bilinear(img, net.input_w, net.input_h);
  const FmapF input = normalize_float(img, cfg.preprocess);

  const BenchReport r = bench_local(net, store, plan, input, iterations);
  std::fputs(render_report(r, parse_report_format(format)).c_str(), stdout);
  return 0;
}

int cmd_cycles(const std::string& topology, int mac_units, double clock_mhz,
               const std::string& format) {
  const NetworkDef net = load_topology(topology);
  SqjConfig cfg;
  cfg.mac_units = mac_units;
  cfg.clock_mhz = clock_mhz;
  const bool kv = format == "kv";
  if (!kv && format != "table")
    throw std::invalid_argument("cycles: format must be table or kv");

  if (!kv) {
    std::printf("analytic cycle model, P=%d MAC-16 units at %.1f MHz\n", cfg.mac_units,
                cfg.clock_mhz);
    std::printf("%-12s %14s %14s %14s %12s\n", "layer", "mac_cycles", "buffer_init",
                "total_cycles", "latency_ms");
  }
  std::uint64_t mac_total = 0, all_total = 0;
  for (const LayerSpec& l : net.layers) {
    const std::string row = std::to_string(l.index) + ":" + kind_name(l.kind);
    if (!l.is_conv_like()) {
      if (!kv) std::printf("%-12s %14s %14s %14s %12s\n", row.c_str(), "-", "-", "-", "-");
      continue;
    }
    CycleReport sum{};
    if (l.kind == LayerKind::kConv) {
      sum = estimate_cycles({l.out_h, l.out_w, l.in_ch, l.out_ch, l.kernel, l.in_w}, cfg);
    } else {
      const CycleReport sq =
          estimate_cycles({l.out_h, l.out_w, l.in_ch, l.squeeze, 1, l.in_w}, cfg);
      const CycleReport e1 =
          estimate_cycles({l.out_h, l.out_w, l.squeeze, l.expand1, 1, l.in_w}, cfg);
      const CycleReport e3 =
          estimate_cycles({l.out_h, l.out_w, l.squeeze, l.expand3, 3, l.in_w}, cfg);
      sum.mac_cycles = sq.mac_cycles + e1.mac_cycles + e3.mac_cycles;
      sum.buffer_init_cycles =
          sq.buffer_init_cycles + e1.buffer_init_cycles + e3.buffer_init_cycles;
      sum.total_cycles = sum.mac_cycles + sum.buffer_init_cycles;
      sum.latency_ms = static_cast<double>(sum.total_cycles) / (cfg.clock_mhz * 1000.0);
    }
    mac_total += sum.mac_cycles;
    all_total += sum.total_cycles;
    if (kv) {
      std::printf("%s\n", cycle_report_kv(row, sum).c_str());
    } else {
      std::printf("%-12s %14llu %14llu %14llu %12.4f\n", row.c_str(),
                  static_cast<unsigned long long>(sum.mac_cycles),
                  static_cast<unsigned long long>(sum.buffer_init_cycles),
                  static_cast<unsigned long long>(sum.total_cycles), sum.latency_ms);
    }
  }
  CycleReport totals{};
  totals.mac_cycles = mac_total;
  totals.buffer_init_cycles = all_total - mac_total;
  totals.total_cycles = all_total;
  totals.latency_ms = static_cast<double>(all_total) / (cfg.clock_mhz * 1000.0);
  if (kv) {
    std::printf("%s\n", cycle_report_kv("Conv+Fire", totals).c_str());
  } else {
    std::printf("%-12s %14llu %14s %14llu %12.4f\n", "Conv+Fire",
                static_cast<unsigned long long>(mac_total), "",
                static_cast<unsigned long long>(all_total), totals.latency_ms);
    std::printf("\nnote: the model counts MAC and one buffer fill pass per layer only;\n"
                "memory traffic and pipeline stalls are excluded, so measured latencies\n"
                "on hardware sit well above these lower bounds.\n");
  }
  return 0;
}

int cmd_init_weights(const std::string& topology, const std::string& out, unsigned seed) {
  const NetworkDef net = load_topology(topology);
  save_weights(random_float_store(net, seed), out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_gen_image(const std::string& out, int width, int height, unsigned seed) {
  const ImageU8 img = synthetic_image(width, height, seed);
  const std::vector<std::uint8_t> bytes = encode_ppm(img);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + out);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  std::printf("wrote %s (%dx%d)\n", out.c_str(), width, height);
  return 0;
}

}  // namespace

int main(int argc, char** argv) try {
  CLI::App app{"SqueezeNet v1.1 fixed-point inference engine and recognition service"};
  app.require_subcommand(1);

  // serve
  auto* serve = app.add_subcommand("serve", "run the TCP recognition service");
  int port = 0, max_pending = 16;
  double deadline = 10.0;
  std::string weights, topology, labels_path, config_path, mode = "quant-sqj";
  serve->add_option("--port", port, "TCP port")->required();
  serve->add_option("--weights", weights)->required();
  serve->add_option("--topology", topology, "topology config (defaults to the weight file's)");
  serve->add_option("--labels", labels_path);
  serve->add_option("--config", config_path);
  serve->add_option("--max-pending", max_pending, "connection queue depth");
  serve->add_option("--mode", mode, "float|quant-naive|quant-sqj");
  serve->add_option("--read-deadline", deadline, "per-connection read deadline, seconds");

  // classify
  auto* classify = app.add_subcommand("classify", "one-shot remote recognition");
  std::string host = "127.0.0.1", image_path;
  classify->add_option("--host", host);
  classify->add_option("--port", port)->required();
  classify->add_option("--image", image_path, "PPM image")->required();
  classify->add_option("--labels", labels_path);
  classify->add_option("--config", config_path);

  // quantize
  auto* quantize = app.add_subcommand("quantize", "calibrate and quantize a float network");
  std::string weights_in, weights_out, calib_dir;
  quantize->add_option("--weights-in", weights_in)->required();
  quantize->add_option("--calib-dir", calib_dir, "directory of .ppm calibration images")
      ->required();
  quantize->add_option("--weights-out", weights_out)->required();
  quantize->add_option("--topology", topology);
  quantize->add_option("--config", config_path);

  // bench remote|local
  auto* bench = app.add_subcommand("bench", "latency benchmarks");
  bench->require_subcommand(1);
  int iterations = 100;
  std::string format = "table";
  auto* bremote = bench->add_subcommand("remote", "classify round trips against a server");
  bremote->add_option("--host", host);
  bremote->add_option("--port", port)->required();
  bremote->add_option("--image", image_path)->required();
  bremote->add_option("--iterations", iterations);
  bremote->add_option("--format", format, "table|csv|jsonl");
  bremote->add_option("--config", config_path);
  auto* blocal = bench->add_subcommand("local", "per-layer forward timings");
  blocal->add_option("--weights", weights)->required();
  blocal->add_option("--topology", topology);
  blocal->add_option("--mode", mode, "float|quant-naive|quant-sqj");
  blocal->add_option("--iterations", iterations);
  blocal->add_option("--image", image_path, "PPM input (synthetic when omitted)");
  blocal->add_option("--format", format, "table|csv|jsonl");
  blocal->add_option("--config", config_path);

  // cycles
  auto* cycles = app.add_subcommand("cycles", "analytic cycle model per layer");
  int mac_units = 8;
  double clock_mhz = 100.0;
  std::string cycle_format = "table";
  cycles->add_option("--topology", topology)->required();
  cycles->add_option("--mac-units", mac_units, "P, power of two >= 4");
  cycles->add_option("--clock-mhz", clock_mhz);
  cycles->add_option("--format", cycle_format, "table|kv");

  // utilities
  auto* init = app.add_subcommand("init-weights", "write random float weights for a topology");
  unsigned seed = 1;
  init->add_option("--topology", topology)->required();
  init->add_option("--out", weights_out)->required();
  init->add_option("--seed", seed);
  auto* genimg = app.add_subcommand("gen-image", "write a synthetic PPM image");
  int width = 227, height = 227;
  genimg->add_option("--out", image_path)->required();
  genimg->add_option("--width", width);
  genimg->add_option("--height", height);
  genimg->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (serve->parsed())
      return cmd_serve(weights, topology, labels_path, config_path, port, max_pending, mode,
                       deadline);
    if (classify->parsed())
      return cmd_classify(host, port, image_path, labels_path, config_path);
    if (quantize->parsed())
      return cmd_quantize(weights_in, calib_dir, weights_out, topology, config_path);
    if (bremote->parsed())
      return cmd_bench_remote(host, port, image_path, iterations, format, config_path);
    if (blocal->parsed())
      return cmd_bench_local(weights, topology, mode, iterations, image_path, format,
                             config_path);
    if (cycles->parsed()) return cmd_cycles(topology, mac_units, clock_mhz, cycle_format);
    if (init->parsed()) return cmd_init_weights(topology, weights_out, seed);
    if (genimg->parsed()) return cmd_gen_image(image_path, width, height, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
} catch (const std::exception& e) {
  std::fprintf(stderr, "error: %s\n", e.what());
  return 1;
}
