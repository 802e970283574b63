#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sqn::wire {

// Headless one-shot recognition protocol, all multi-byte integers big-endian.
//
// Request:  "SQNJ" | version (1B) | width (2B) | height (2B) | channels (1B)
//           | pixel_format (1B) | payload_len (4B) | payload
// Response: "SQNR" | status (1B) | count (1B)
//           | count x [class_id (2B) | probability (IEEE-754 f32, 4B)]
//           on status != 0: msg_len (2B) | UTF-8 message instead of entries.
//
// One request per TCP connection; the server replies and closes.

constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kRequestHeaderSize = 15;
constexpr int kImageWidth = 227;
constexpr int kImageHeight = 227;
constexpr int kImageChannels = 3;
constexpr std::uint8_t kPixelFormatRgb8 = 0;
constexpr std::size_t kPayloadSize =
    static_cast<std::size_t>(kImageWidth) * kImageHeight * kImageChannels;

extern const std::uint8_t kRequestMagic[4];   // "SQNJ"
extern const std::uint8_t kResponseMagic[4];  // "SQNR"

// Header fields are validated in this order; the first failure wins.
enum class Status : std::uint8_t {
  kOk = 0,
  kBadMagic = 1,
  kBadVersion = 2,
  kBadDims = 3,
  kBadPixelFormat = 4,
  kTruncated = 5,
  kInternalError = 6,
};

const char* status_message(Status s);

struct RecognitionRequest {
  std::uint16_t width = kImageWidth;
  std::uint16_t height = kImageHeight;
  std::uint8_t channels = kImageChannels;
  std::uint8_t pixel_format = kPixelFormatRgb8;
  std::vector<std::uint8_t> payload;
};

struct ResponseEntry {
  std::uint16_t class_id = 0;
  float probability = 0.0f;
};

struct RecognitionResponse {
  Status status = Status::kOk;
  std::vector<ResponseEntry> entries;  // exactly 5 on status 0
  std::string message;                 // on status != 0
};

std::vector<std::uint8_t> encode_request(const RecognitionRequest& req);

struct RequestDecode {
  Status status = Status::kOk;
  RecognitionRequest request;  // valid only on kOk
};
RequestDecode decode_request(std::span<const std::uint8_t> bytes);

// Validates just the fixed-size header; used by the server to reject bad
// frames before reading any payload. Returns kOk when the payload should be
// read (exactly kPayloadSize bytes follow).
Status validate_request_header(std::span<const std::uint8_t> header);

std::vector<std::uint8_t> encode_response(const RecognitionResponse& resp);
std::optional<RecognitionResponse> decode_response(std::span<const std::uint8_t> bytes);

}  // namespace sqn::wire
