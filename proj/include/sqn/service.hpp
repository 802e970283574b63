#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sqn/forward.hpp"
#include "sqn/preprocess.hpp"
#include "sqn/protocol.hpp"

namespace sqn {

// Everything the recognition endpoint needs, loaded once at startup.
struct LoadedModel {
  NetworkDef net;
  WeightStore store;
  ExecPlan plan;
  PreprocessConfig preprocess;
  std::vector<std::string> labels;  // optional, display/logging only
};

// Pure request handler: frame bytes in, response bytes out. The server's wire
// behavior is exactly this function behind socket reads, so tests can bypass
// the wire and compare byte-for-byte.
std::vector<std::uint8_t> handle_request(std::span<const std::uint8_t> frame,
                                         const LoadedModel& model);

struct ServiceConfig {
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  int max_pending = 16;
  double read_deadline_s = 10.0;
  bool log = false;
};

// One-shot TCP recognition service. Connections are accepted concurrently and
// queued FIFO up to max_pending; a single worker drains the queue so
// inference runs under exclusive access to the one engine instance. New
// connections are refused while the queue is full.
class InferenceService {
 public:
  InferenceService(std::shared_ptr<const LoadedModel> model, ServiceConfig cfg);
  ~InferenceService();

  InferenceService(const InferenceService&) = delete;
  InferenceService& operator=(const InferenceService&) = delete;

  void start();  // binds, listens, spawns the accept and worker threads
  void stop();
  std::uint16_t port() const { return port_; }
  std::uint64_t requests_served() const;

 private:
  void accept_loop();
  void worker_loop();
  void handle_connection(int fd);

  std::shared_ptr<const LoadedModel> model_;
  ServiceConfig cfg_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  std::thread worker_thread_;

  mutable std::mutex mu_;
  std::condition_variable queue_cv_;
  std::deque<int> pending_;
  bool running_ = false;
  std::uint64_t served_ = 0;
};

}  // namespace sqn
