#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqn/preprocess.hpp"
#include "sqn/protocol.hpp"

namespace sqn {

// Transport-level failures (resolve, connect, timeout, reset).
struct ConnectError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The server answered, but not with a usable top-5 (malformed frame or an
// error status); carries the server's message when there is one.
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ClientTiming {
  double net_transfer_ms = 0.0;  // request write + response read phases
  double end_to_end_ms = 0.0;    // connect start to response fully read
  // The gap between the two is the server-side inference (plus parse) time.
  double inference_ms() const { return end_to_end_ms - net_transfer_ms; }
};

struct ClassifyResult {
  std::vector<wire::ResponseEntry> entries;  // exactly 5, descending
  ClientTiming timing;
};

// One recognition round trip: sends the raw 227x227x3 image, parses the
// top-5 response. Throws ConnectError / ProtocolError.
ClassifyResult client_classify(const std::string& host, std::uint16_t port,
                               const ImageU8& image, double timeout_s = 10.0);

}  // namespace sqn
