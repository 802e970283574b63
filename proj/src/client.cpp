#include "sqn/client.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "sqn/forward.hpp"

namespace sqn {

namespace {

struct FdGuard {
  int fd = -1;
  ~FdGuard() {
    if (fd >= 0) close(fd);
  }
};

void set_timeouts(int fd, double seconds) {
  timeval tv;
  tv.tv_sec = static_cast<long>(seconds);
  tv.tv_usec = static_cast<long>((seconds - tv.tv_sec) * 1e6);
  setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

}  // namespace

ClassifyResult client_classify(const std::string& host, std::uint16_t port,
                               const ImageU8& image, double timeout_s) {
  if (image.width != wire::kImageWidth || image.height != wire::kImageHeight ||
      image.rgb.size() != wire::kPayloadSize)
    throw std::invalid_argument("client: image must be 227x227x3 8-bit RGB");

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int gai = getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res);
  if (gai != 0 || !res)
    throw ConnectError("client: cannot resolve " + host + ": " + gai_strerror(gai));

  wire::RecognitionRequest req;
  req.payload = image.rgb;
  const std::vector<std::uint8_t> frame = wire::encode_request(req);

  const double t0 = steady_clock_ms();
  FdGuard sock{socket(res->ai_family, res->ai_socktype, res->ai_protocol)};
  if (sock.fd < 0) {
    freeaddrinfo(res);
    throw ConnectError("client: socket() failed");
  }
  set_timeouts(sock.fd, timeout_s);
  const int rc = connect(sock.fd, res->ai_addr, res->ai_addrlen);
  freeaddrinfo(res);
  if (rc != 0)
    throw ConnectError("client: cannot connect to " + host + ":" + std::to_string(port) +
                       ": " + std::strerror(errno));

  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t n = send(sock.fd, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      throw ConnectError("client: send failed: " + std::string(std::strerror(errno)));
    }
    sent += static_cast<std::size_t>(n);
  }
  const double t_sent = steady_clock_ms();

  // The server replies once and closes, so read to EOF.
  std::vector<std::uint8_t> reply;
  double t_first = t_sent;
  bool got_first = false;
  std::uint8_t buf[4096];
  for (;;) {
    const ssize_t n = recv(sock.fd, buf, sizeof(buf), 0);
    if (n > 0) {
      if (!got_first) {
        t_first = steady_clock_ms();
        got_first = true;
      }
      reply.insert(reply.end(), buf, buf + n);
    } else if (n == 0) {
      break;
    } else if (errno == EINTR) {
      continue;
    } else if (errno == EAGAIN || errno == EWOULDBLOCK) {
      throw ConnectError("client: response timed out");
    } else {
      throw ConnectError("client: recv failed: " + std::string(std::strerror(errno)));
    }
  }
  const double t_done = steady_clock_ms();
  if (!got_first) throw ProtocolError("client: server closed without a reply");

  const auto resp = wire::decode_response(reply);
  if (!resp) throw ProtocolError("client: malformed response frame");
  if (resp->status != wire::Status::kOk)
    throw ProtocolError("client: server error " +
                        std::to_string(static_cast<int>(resp->status)) + ": " + resp->message);
  if (resp->entries.size() != 5)
    throw ProtocolError("client: expected 5 entries, got " +
                        std::to_string(resp->entries.size()));

  ClassifyResult result;
  result.entries = resp->entries;
  result.timing.net_transfer_ms = (t_sent - t0) + (t_done - t_first);
  result.timing.end_to_end_ms = t_done - t0;
  return result;
}

}  // namespace sqn
