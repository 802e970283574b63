#include "sqn/bench.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sqn/client.hpp"

namespace sqn {

namespace {

constexpr const char* kRowPreprocessing = "Img Preprocessing";
constexpr const char* kRowInference = "SqN Inference";
constexpr const char* kRowNetTransfer = "Net Transfer";
constexpr const char* kRowEndToEnd = "End-To-End";
constexpr const char* kRowTotal = "Total";
constexpr const char* kRowTotalConvFire = "Total Conv+Fire";

double mean(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::string fmt_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

BenchReport aggregate_remote(std::span<const RemoteSample> samples) {
  if (samples.empty()) throw std::invalid_argument("bench: no samples");
  std::vector<double> pre, inf, net, e2e, total;
  for (const RemoteSample& s : samples) {
    pre.push_back(s.preprocessing_ms);
    inf.push_back(s.inference_ms);
    net.push_back(s.net_transfer_ms);
    e2e.push_back(s.end_to_end_ms);
    total.push_back(s.end_to_end_ms + s.preprocessing_ms);
  }
  BenchReport r;
  r.iterations = static_cast<int>(samples.size());
  r.img_preprocessing_ms = mean(pre);
  r.inference_ms = mean(inf);
  r.net_transfer_ms = mean(net);
  r.end_to_end_ms = mean(e2e);
  r.total_ms = mean(total);
  return r;
}

BenchReport aggregate_local(const NetworkDef& net,
                            const std::vector<std::vector<double>>& per_iteration_layer_ms) {
  if (per_iteration_layer_ms.empty()) throw std::invalid_argument("bench: no samples");
  const std::size_t layers = net.layers.size();
  BenchReport r;
  r.iterations = static_cast<int>(per_iteration_layer_ms.size());
  r.per_layer_ms.assign(layers, 0.0);
  for (const auto& iteration : per_iteration_layer_ms) {
    if (iteration.size() != layers)
      throw std::invalid_argument("bench: iteration layer count mismatch");
    for (std::size_t i = 0; i < layers; ++i) r.per_layer_ms[i] += iteration[i];
  }
  for (double& v : r.per_layer_ms) v /= static_cast<double>(r.iterations);

  double total = 0.0, conv_fire = 0.0;
  for (std::size_t i = 0; i < layers; ++i) {
    const LayerSpec& l = net.layers[i];
    r.layer_names.push_back(std::to_string(l.index) + ":" + kind_name(l.kind));
    total += r.per_layer_ms[i];
    if (l.is_conv_like()) conv_fire += r.per_layer_ms[i];
  }
  r.total_conv_fire_ms = conv_fire;
  r.total_ms = total;
  return r;
}

BenchReport bench_remote(const std::string& host, std::uint16_t port,
                         const std::vector<std::uint8_t>& image_file,
                         const PreprocessConfig& cfg, int iterations, const ClockFn& clock_fn) {
  if (iterations < 1) throw std::invalid_argument("bench: iterations must be >= 1");
  const ClockFn& clock = clock_fn ? clock_fn : steady_clock_ms;
  std::vector<RemoteSample> samples;
  samples.reserve(iterations);
  for (int i = 0; i < iterations; ++i) {
    try {
      RemoteSample s;
      const double t0 = clock();
      const ImageU8 decoded = decode_ppm(image_file);
      const ImageU8 resized = resize_bilinear(decoded, cfg.target_w, cfg.target_h);
      s.preprocessing_ms = clock() - t0;
      const ClassifyResult r = client_classify(host, port, resized);
      s.net_transfer_ms = r.timing.net_transfer_ms;
      s.end_to_end_ms = r.timing.end_to_end_ms;
      s.inference_ms = r.timing.inference_ms();
      samples.push_back(s);
    } catch (const std::exception& e) {
      throw std::runtime_error("bench: iteration " + std::to_string(i + 1) +
                               " failed: " + e.what());
    }
  }
  return aggregate_remote(samples);
}

BenchReport bench_local(const NetworkDef& net, const WeightStore& store, const ExecPlan& plan,
                        const FmapF& input, int iterations, const ClockFn& clock) {
  if (iterations < 1) throw std::invalid_argument("bench: iterations must be >= 1");
  std::vector<std::vector<double>> layer_ms;
  layer_ms.reserve(iterations);
  ForwardOptions opts;
  opts.timing = true;
  opts.clock = clock;
  for (int i = 0; i < iterations; ++i)
    layer_ms.push_back(forward(net, store, plan, input, opts).per_layer_ms);
  return aggregate_local(net, layer_ms);
}

double compute_fps(double end_to_end_ms) {
  if (!(end_to_end_ms > 0.0)) throw std::invalid_argument("compute_fps: latency must be > 0");
  return 1000.0 / end_to_end_ms;
}

double compute_speedup(double baseline_ms, double accelerated_ms) {
  if (!(baseline_ms > 0.0) || !(accelerated_ms > 0.0))
    throw std::invalid_argument("compute_speedup: latencies must be > 0");
  return baseline_ms / accelerated_ms;
}

double power_efficiency(const PowerProfile& profile, const std::string& a,
                        const std::string& b) {
  auto ita = profile.chip_watts.find(a);
  if (ita == profile.chip_watts.end())
    throw std::invalid_argument("power_efficiency: unknown platform '" + a + "'");
  auto itb = profile.chip_watts.find(b);
  if (itb == profile.chip_watts.end())
    throw std::invalid_argument("power_efficiency: unknown platform '" + b + "'");
  if (!(ita->second > 0.0) || !(itb->second > 0.0))
    throw std::invalid_argument("power_efficiency: watts must be > 0");
  return ita->second / itb->second;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "table") return ReportFormat::kTable;
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "jsonl") return ReportFormat::kJsonLines;
  throw std::invalid_argument("unknown report format '" + name + "' (table|csv|jsonl)");
}

namespace {

using Row = std::pair<std::string, double>;

std::vector<Row> report_rows(const BenchReport& r) {
  std::vector<Row> rows;
  if (r.img_preprocessing_ms) rows.emplace_back(kRowPreprocessing, *r.img_preprocessing_ms);
  if (r.inference_ms) rows.emplace_back(kRowInference, *r.inference_ms);
  if (r.net_transfer_ms) rows.emplace_back(kRowNetTransfer, *r.net_transfer_ms);
  if (r.end_to_end_ms) rows.emplace_back(kRowEndToEnd, *r.end_to_end_ms);
  for (std::size_t i = 0; i < r.per_layer_ms.size(); ++i)
    rows.emplace_back(r.layer_names[i], r.per_layer_ms[i]);
  if (r.total_conv_fire_ms) rows.emplace_back(kRowTotalConvFire, *r.total_conv_fire_ms);
  if (r.total_ms) rows.emplace_back(kRowTotal, *r.total_ms);
  return rows;
}

void assign_row(BenchReport& r, const std::string& name, double value) {
  if (name == kRowPreprocessing)
    r.img_preprocessing_ms = value;
  else if (name == kRowInference)
    r.inference_ms = value;
  else if (name == kRowNetTransfer)
    r.net_transfer_ms = value;
  else if (name == kRowEndToEnd)
    r.end_to_end_ms = value;
  else if (name == kRowTotalConvFire)
    r.total_conv_fire_ms = value;
  else if (name == kRowTotal)
    r.total_ms = value;
  else if (!name.empty() && name[0] >= '0' && name[0] <= '9') {
    r.layer_names.push_back(name);
    r.per_layer_ms.push_back(value);
  } else {
    throw std::invalid_argument("report: unknown row '" + name + "'");
  }
}

}  // namespace

std::string render_report(const BenchReport& r, ReportFormat format) {
  const std::vector<Row> rows = report_rows(r);
  std::ostringstream out;
  switch (format) {
    case ReportFormat::kTable: {
      char line[160];
      std::snprintf(line, sizeof(line), "%-22s %10d\n", "Iterations", r.iterations);
      out << line;
      for (const Row& row : rows) {
        std::snprintf(line, sizeof(line), "%-22s %14.4f\n", row.first.c_str(), row.second);
        out << line;
      }
      if (r.end_to_end_ms) {
        std::snprintf(line, sizeof(line), "%-22s %14.2f\n", "fps",
                      compute_fps(*r.end_to_end_ms));
        out << line;
      }
      break;
    }
    case ReportFormat::kCsv: {
      out << "iterations," << r.iterations << "\n";
      for (const Row& row : rows) out << row.first << "," << fmt_full(row.second) << "\n";
      break;
    }
    case ReportFormat::kJsonLines: {
      out << nlohmann::json{{"iterations", r.iterations}}.dump() << "\n";
      for (const Row& row : rows)
        out << nlohmann::json{{"row", row.first}, {"ms", row.second}}.dump() << "\n";
      break;
    }
  }
  return out.str();
}

BenchReport parse_report_csv(const std::string& text) {
  BenchReport r;
  std::istringstream in(text);
  std::string line;
  bool have_iterations = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("report: bad csv line '" + line + "'");
    const std::string name = line.substr(0, comma);
    const std::string value = line.substr(comma + 1);
    if (name == "iterations") {
      r.iterations = std::stoi(value);
      have_iterations = true;
    } else {
      assign_row(r, name, std::stod(value));
    }
  }
  if (!have_iterations) throw std::invalid_argument("report: csv missing iterations");
  return r;
}

BenchReport parse_report_jsonl(const std::string& text) {
  BenchReport r;
  std::istringstream in(text);
  std::string line;
  bool have_iterations = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j.contains("iterations")) {
      r.iterations = j.at("iterations").get<int>();
      have_iterations = true;
    } else {
      assign_row(r, j.at("row").get<std::string>(), j.at("ms").get<double>());
    }
  }
  if (!have_iterations) throw std::invalid_argument("report: jsonl missing iterations");
  return r;
}

}  // namespace sqn
