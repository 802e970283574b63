#include "sqn/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace sqn {

std::vector<std::uint8_t> handle_request(std::span<const std::uint8_t> frame,
                                         const LoadedModel& model) {
  wire::RecognitionResponse resp;
  wire::RequestDecode dec = wire::decode_request(frame);
  if (dec.status != wire::Status::kOk) {
    resp.status = dec.status;
    resp.message = wire::status_message(dec.status);
    return wire::encode_response(resp);
  }
  try {
    ImageU8 img;
    img.width = wire::kImageWidth;
    img.height = wire::kImageHeight;
    img.rgb = std::move(dec.request.payload);
    const FmapF input = normalize_float(img, model.preprocess);
    const ForwardResult result = forward(model.net, model.store, model.plan, input);
    for (const auto& [cls, p] : top_k(result.probs, 5))
      resp.entries.push_back({static_cast<std::uint16_t>(cls), static_cast<float>(p)});
  } catch (const std::exception& e) {
    resp.status = wire::Status::kInternalError;
    resp.entries.clear();
    resp.message = e.what();
  }
  return wire::encode_response(resp);
}

namespace {

// Reads exactly `want` bytes unless EOF or the absolute deadline passes.
// Returns the byte count actually read.
std::size_t read_with_deadline(int fd, std::uint8_t* dst, std::size_t want,
                               double deadline_ms) {
  std::size_t got = 0;
  while (got < want) {
    const double remaining_ms = deadline_ms - steady_clock_ms();
    if (remaining_ms <= 0) break;
    timeval tv;
    tv.tv_sec = static_cast<long>(remaining_ms / 1000.0);
    tv.tv_usec = static_cast<long>((remaining_ms - tv.tv_sec * 1000.0) * 1000.0) + 1;
    setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    const ssize_t n = recv(fd, dst + got, want - got, 0);
    if (n > 0) {
      got += static_cast<std::size_t>(n);
    } else if (n == 0) {
      break;  // clean EOF
    } else if (errno == EINTR) {
      continue;
    } else {
      break;  // timeout or error
    }
  }
  return got;
}

bool send_all(int fd, const std::uint8_t* src, std::size_t len) {
  std::size_t sent = 0;
  while (sent < len) {
    const ssize_t n = send(fd, src + sent, len - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

InferenceService::InferenceService(std::shared_ptr<const LoadedModel> model, ServiceConfig cfg)
    : model_(std::move(model)), cfg_(cfg) {
  if (!model_) throw std::invalid_argument("service: null model");
  if (model_->net.input_w != wire::kImageWidth || model_->net.input_h != wire::kImageHeight ||
      model_->net.input_ch != wire::kImageChannels)
    throw std::invalid_argument("service: network input geometry must be 227x227x3");
  if (model_->net.classes != 1000)
    throw std::invalid_argument("service: network must have 1000 classes");
  if (cfg_.max_pending < 1) throw std::invalid_argument("service: max_pending must be >= 1");
  validate_plan_weights(model_->net, model_->store, model_->plan);
}

InferenceService::~InferenceService() { stop(); }

void InferenceService::start() {
  listen_fd_ = socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("service: socket() failed");
  const int one = 1;
  setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(cfg_.port);
  if (bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string err = std::strerror(errno);
    close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("service: cannot bind port " + std::to_string(cfg_.port) + ": " +
                             err);
  }
  if (listen(listen_fd_, 64) != 0) {
    close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("service: listen() failed");
  }
  socklen_t len = sizeof(addr);
  getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);

  running_ = true;
  accept_thread_ = std::thread(&InferenceService::accept_loop, this);
  worker_thread_ = std::thread(&InferenceService::worker_loop, this);
  if (cfg_.log) std::fprintf(stderr, "[serve] listening on port %u\n", port_);
}

void InferenceService::stop() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (!running_) return;
    running_ = false;
  }
  shutdown(listen_fd_, SHUT_RDWR);
  close(listen_fd_);
  listen_fd_ = -1;
  queue_cv_.notify_all();
  if (accept_thread_.joinable()) accept_thread_.join();
  if (worker_thread_.joinable()) worker_thread_.join();
  for (int fd : pending_) close(fd);
  pending_.clear();
}

std::uint64_t InferenceService::requests_served() const {
  std::lock_guard<std::mutex> lock(mu_);
  return served_;
}

void InferenceService::accept_loop() {
  for (;;) {
    const int fd = accept(listen_fd_, nullptr, nullptr);
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (!running_) {
        if (fd >= 0) close(fd);
        return;
      }
      if (fd < 0) {
        if (errno == EINTR || errno == ECONNABORTED) continue;
        if (errno == EMFILE || errno == ENFILE || errno == ENOBUFS || errno == ENOMEM) {
          // transient fd pressure; back off instead of dying
          std::this_thread::sleep_for(std::chrono::milliseconds(10));
          continue;
        }
        return;  // listening socket gone
      }
      if (static_cast<int>(pending_.size()) >= cfg_.max_pending) {
        // queue full: refuse by closing immediately
        close(fd);
        if (cfg_.log) std::fprintf(stderr, "[serve] refused connection, queue full\n");
        continue;
      }
      pending_.push_back(fd);
    }
    queue_cv_.notify_one();
  }
}

void InferenceService::worker_loop() {
  for (;;) {
    int fd;
    {
      std::unique_lock<std::mutex> lock(mu_);
      queue_cv_.wait(lock, [this] { return !running_ || !pending_.empty(); });
      if (!running_ && pending_.empty()) return;
      fd = pending_.front();
      pending_.pop_front();
    }
    handle_connection(fd);
    close(fd);
    std::lock_guard<std::mutex> lock(mu_);
    ++served_;
  }
}

void InferenceService::handle_connection(int fd) {
  const double deadline_ms = steady_clock_ms() + cfg_.read_deadline_s * 1000.0;

  std::vector<std::uint8_t> frame(wire::kRequestHeaderSize);
  const std::size_t header_got =
      read_with_deadline(fd, frame.data(), wire::kRequestHeaderSize, deadline_ms);
  frame.resize(header_got);

  const wire::Status header_status = wire::validate_request_header(frame);
  if (header_status == wire::Status::kOk) {
    frame.resize(wire::kRequestHeaderSize + wire::kPayloadSize);
    const std::size_t payload_got = read_with_deadline(
        fd, frame.data() + wire::kRequestHeaderSize, wire::kPayloadSize, deadline_ms);
    frame.resize(wire::kRequestHeaderSize + payload_got);
  }

  // handle_request re-derives the status from the assembled frame, so short
  // reads come out as truncated frames and valid ones run inference.
  const std::vector<std::uint8_t> reply = handle_request(frame, *model_);
  if (cfg_.log) {
    const auto decoded = wire::decode_response(reply);
    if (decoded && decoded->status == wire::Status::kOk && !decoded->entries.empty()) {
      const std::uint16_t top = decoded->entries[0].class_id;
      const char* label = top < model_->labels.size() ? model_->labels[top].c_str() : "?";
      std::fprintf(stderr, "[serve] top-1 class %u (%s) p=%.4f\n", top, label,
                   decoded->entries[0].probability);
    } else {
      std::fprintf(stderr, "[serve] rejected request (%s)\n",
                   decoded ? decoded->message.c_str() : "unparseable reply");
    }
  }
  send_all(fd, reply.data(), reply.size());
  shutdown(fd, SHUT_RDWR);
}

}  // namespace sqn
