#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqn/forward.hpp"
#include "sqn/preprocess.hpp"

namespace sqn {

// Chip power per named platform. Configuration only, never measured here.
struct PowerProfile {
  std::map<std::string, double> chip_watts;
};

// Mean latencies over N iterations. Remote reports fill the top rows, local
// reports fill the per-layer section; "Total" is shared (end-to-end plus
// preprocessing remotely, sum of the layer means locally).
struct BenchReport {
  int iterations = 0;

  std::optional<double> img_preprocessing_ms;
  std::optional<double> inference_ms;
  std::optional<double> net_transfer_ms;
  std::optional<double> end_to_end_ms;

  std::vector<std::string> layer_names;  // "1:Conv", "2:Maxpool", ...
  std::vector<double> per_layer_ms;
  std::optional<double> total_conv_fire_ms;

  std::optional<double> total_ms;

  friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

// One remote iteration as measured on the client.
struct RemoteSample {
  double preprocessing_ms = 0.0;
  double inference_ms = 0.0;
  double net_transfer_ms = 0.0;
  double end_to_end_ms = 0.0;
};

// Aggregation is separated from measurement so the arithmetic is testable
// with synthetic samples.
BenchReport aggregate_remote(std::span<const RemoteSample> samples);
BenchReport aggregate_local(const NetworkDef& net,
                            const std::vector<std::vector<double>>& per_iteration_layer_ms);

// Runs `iterations` classify round trips against a live server; image
// preprocessing (decode + resize) is timed once per iteration on the client.
// A failed iteration aborts with its index.
BenchReport bench_remote(const std::string& host, std::uint16_t port,
                         const std::vector<std::uint8_t>& image_file,
                         const PreprocessConfig& cfg, int iterations,
                         const ClockFn& clock = {});

BenchReport bench_local(const NetworkDef& net, const WeightStore& store, const ExecPlan& plan,
                        const FmapF& input, int iterations, const ClockFn& clock = {});

double compute_fps(double end_to_end_ms);                              // 1000 / ms
double compute_speedup(double baseline_ms, double accelerated_ms);     // baseline / accelerated
// How many times platform `b` is more power efficient than baseline `a`:
// watts(a) / watts(b). Missing platforms are named in the error.
double power_efficiency(const PowerProfile& profile, const std::string& a,
                        const std::string& b);

enum class ReportFormat { kTable, kCsv, kJsonLines };

ReportFormat parse_report_format(const std::string& name);
std::string render_report(const BenchReport& report, ReportFormat format);
BenchReport parse_report_csv(const std::string& text);
BenchReport parse_report_jsonl(const std::string& text);

}  // namespace sqn
