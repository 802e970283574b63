#include "sqn/protocol.hpp"

#include <bit>
#include <cstring>

namespace sqn::wire {

const std::uint8_t kRequestMagic[4] = {'S', 'Q', 'N', 'J'};
const std::uint8_t kResponseMagic[4] = {'S', 'Q', 'N', 'R'};

const char* status_message(Status s) {
  switch (s) {
    case Status::kOk: return "ok";
    case Status::kBadMagic: return "bad magic";
    case Status::kBadVersion: return "unsupported protocol version";
    case Status::kBadDims: return "image must be 227x227x3";
    case Status::kBadPixelFormat: return "unsupported pixel format";
    case Status::kTruncated: return "truncated request";
    case Status::kInternalError: return "internal error";
  }
  return "unknown status";
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

}  // namespace

std::vector<std::uint8_t> encode_request(const RecognitionRequest& req) {
  std::vector<std::uint8_t> out;
  out.reserve(kRequestHeaderSize + req.payload.size());
  out.insert(out.end(), kRequestMagic, kRequestMagic + 4);
  out.push_back(kVersion);
  put_u16(out, req.width);
  put_u16(out, req.height);
  out.push_back(req.channels);
  out.push_back(req.pixel_format);
  put_u32(out, static_cast<std::uint32_t>(req.payload.size()));
  out.insert(out.end(), req.payload.begin(), req.payload.end());
  return out;
}

Status validate_request_header(std::span<const std::uint8_t> header) {
  if (header.size() < 4) return Status::kTruncated;
  if (std::memcmp(header.data(), kRequestMagic, 4) != 0) return Status::kBadMagic;
  if (header.size() < kRequestHeaderSize) return Status::kTruncated;
  if (header[4] != kVersion) return Status::kBadVersion;
  const std::uint16_t w = get_u16(header.data() + 5);
  const std::uint16_t h = get_u16(header.data() + 7);
  const std::uint8_t ch = header[9];
  if (w != kImageWidth || h != kImageHeight || ch != kImageChannels) return Status::kBadDims;
  if (header[10] != kPixelFormatRgb8) return Status::kBadPixelFormat;
  if (get_u32(header.data() + 11) != kPayloadSize) return Status::kTruncated;
  return Status::kOk;
}

RequestDecode decode_request(std::span<const std::uint8_t> bytes) {
  RequestDecode out;
  out.status = validate_request_header(bytes.subspan(0, std::min(bytes.size(),
                                                                 kRequestHeaderSize)));
  if (out.status != Status::kOk) return out;
  if (bytes.size() - kRequestHeaderSize < kPayloadSize) {
    out.status = Status::kTruncated;
    return out;
  }
  RecognitionRequest& req = out.request;
  req.width = get_u16(bytes.data() + 5);
  req.height = get_u16(bytes.data() + 7);
  req.channels = bytes[9];
  req.pixel_format = bytes[10];
  req.payload.assign(bytes.begin() + kRequestHeaderSize,
                     bytes.begin() + kRequestHeaderSize + kPayloadSize);
  return out;
}

std::vector<std::uint8_t> encode_response(const RecognitionResponse& resp) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kResponseMagic, kResponseMagic + 4);
  out.push_back(static_cast<std::uint8_t>(resp.status));
  if (resp.status == Status::kOk) {
    out.push_back(static_cast<std::uint8_t>(resp.entries.size()));
    for (const ResponseEntry& e : resp.entries) {
      put_u16(out, e.class_id);
      put_u32(out, std::bit_cast<std::uint32_t>(e.probability));
    }
  } else {
    out.push_back(0);  // count
    put_u16(out, static_cast<std::uint16_t>(resp.message.size()));
    out.insert(out.end(), resp.message.begin(), resp.message.end());
  }
  return out;
}

std::optional<RecognitionResponse> decode_response(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kResponseMagic, 4) != 0)
    return std::nullopt;
  RecognitionResponse resp;
  resp.status = static_cast<Status>(bytes[4]);
  const std::uint8_t count = bytes[5];
  std::size_t pos = 6;
  if (resp.status == Status::kOk) {
    if (bytes.size() < pos + static_cast<std::size_t>(count) * 6) return std::nullopt;
    for (int i = 0; i < count; ++i) {
      ResponseEntry e;
      e.class_id = get_u16(bytes.data() + pos);
      e.probability = std::bit_cast<float>(get_u32(bytes.data() + pos + 2));
      resp.entries.push_back(e);
      pos += 6;
    }
  } else {
    if (count != 0 || bytes.size() < pos + 2) return std::nullopt;
    const std::uint16_t len = get_u16(bytes.data() + pos);
    pos += 2;
    if (bytes.size() < pos + len) return std::nullopt;
    resp.message.assign(bytes.begin() + pos, bytes.begin() + pos + len);
    pos += len;
  }
  if (pos != bytes.size()) return std::nullopt;  // trailing bytes
  return resp;
}

}  // namespace sqn::wire
