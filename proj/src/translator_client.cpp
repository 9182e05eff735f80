#include "sonar_oi/translator_client.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>

#include "sonar_oi/byte_io.hpp"
#include "sonar_oi/error.hpp"

namespace sonar_oi {
namespace oitr {

namespace {

using Clock = std::chrono::steady_clock;

[[noreturn]] void malformed(const std::string& what) { throw TranslatorUnavailable("oitr: " + what); }

void check_dims(int rows, int cols) {
  if (rows <= 0 || cols <= 0 || rows > 0xffff || cols > 0xffff) malformed("raster dimensions out of range");
}

}  // namespace

std::vector<std::uint8_t> encode_request(std::uint32_t request_id, const TranslatorInput& input) {
  input.validate();
  check_dims(input.spec.rows, input.spec.cols);
  const auto um = std::llround(input.spec.resolution * 1e6);
  if (um <= 0 || um > 0xffffffffLL) malformed("resolution out of range");
  std::vector<std::uint8_t> out{'O', 'Q'};
  bytes::put_le<std::uint32_t>(out, request_id);
  bytes::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(input.spec.rows));
  bytes::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(input.spec.cols));
  out.push_back(2);
  out.push_back(kDtypeU8);
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(um));
  out.insert(out.end(), input.cfar_raster.data().begin(), input.cfar_raster.data().end());
  out.insert(out.end(), input.candidate_raster.data().begin(), input.candidate_raster.data().end());
  return out;
}

Request decode_request(const std::vector<std::uint8_t>& body) {
  if (body.size() < kHeaderBytes) malformed("request shorter than its header");
  if (body[0] != 'O' || body[1] != 'Q') malformed("bad request magic");
  bytes::Reader rd(body);
  rd.take(2);
  Request req;
  req.request_id = rd.le<std::uint32_t>();
  const int rows = rd.le<std::uint16_t>();
  const int cols = rd.le<std::uint16_t>();
  const int channels = rd.le<std::uint8_t>();
  const int dtype = rd.le<std::uint8_t>();
  const std::uint32_t um = rd.le<std::uint32_t>();
  check_dims(rows, cols);
  if (channels != 2 || dtype != kDtypeU8) malformed("request must carry two u8 channels");
  if (um == 0) malformed("zero resolution");
  const std::size_t plane = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (rd.remaining() != 2 * plane) malformed("request payload size mismatch");
  req.input.spec = RasterSpec{rows, cols, um * 1e-6};
  req.input.cfar_raster = BinaryRaster(rows, cols);
  req.input.candidate_raster = BinaryRaster(rows, cols);
  auto a = rd.take(plane);
  auto b = rd.take(plane);
  std::copy(a.begin(), a.end(), req.input.cfar_raster.data().begin());
  std::copy(b.begin(), b.end(), req.input.candidate_raster.data().begin());
  try {
    req.input.validate();
  } catch (const InvalidArgument& e) {
    malformed(e.what());
  }
  return req;
}

std::vector<std::uint8_t> encode_response(std::uint32_t request_id, const ProbabilityRaster& img) {
  check_dims(img.rows(), img.cols());
  std::vector<std::uint8_t> out{'O', 'R'};
  bytes::put_le<std::uint32_t>(out, request_id);
  bytes::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(img.rows()));
  bytes::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(img.cols()));
  out.push_back(1);
  out.push_back(kDtypeF32);
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(img.size() * 4));
  for (float v : img.data()) bytes::put_f32(out, v);
  return out;
}

std::vector<std::uint8_t> encode_error(std::uint32_t request_id, std::uint16_t code, const std::string& message) {
  std::vector<std::uint8_t> out{'O', 'E'};
  bytes::put_le<std::uint32_t>(out, request_id);
  bytes::put_le<std::uint16_t>(out, code);
  bytes::put_le<std::uint16_t>(out, 0);
  bytes::put_le<std::uint32_t>(out, 0);
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(message.size()));
  out.insert(out.end(), message.begin(), message.end());
  return out;
}

Reply decode_reply(const std::vector<std::uint8_t>& body) {
  if (body.size() < kHeaderBytes) malformed("reply shorter than its header");
  if (body[0] != 'O' || (body[1] != 'R' && body[1] != 'E')) malformed("bad reply magic");
  bytes::Reader rd(body);
  rd.take(2);
  const std::uint32_t id = rd.le<std::uint32_t>();
  if (body[1] == 'E') {
    ErrorReply e{id, rd.le<std::uint16_t>(), {}};
    rd.take(6);
    const std::uint32_t n = rd.le<std::uint32_t>();
    if (rd.remaining() != n) malformed("error message size mismatch");
    auto msg = rd.take(n);
    e.message.assign(msg.begin(), msg.end());
    return e;
  }
  const int rows = rd.le<std::uint16_t>();
  const int cols = rd.le<std::uint16_t>();
  const int channels = rd.le<std::uint8_t>();
  const int dtype = rd.le<std::uint8_t>();
  const std::uint32_t payload = rd.le<std::uint32_t>();
  check_dims(rows, cols);
  if (channels != 1 || dtype != kDtypeF32) malformed("reply must carry one f32 channel");
  const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (payload != n * 4 || rd.remaining() != payload) malformed("reply payload size mismatch");
  Response r{id, ProbabilityRaster(rows, cols)};
  for (auto& v : r.probability.data()) {
    v = rd.f32();
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) malformed("probability outside [0, 1]");
  }
  return r;
}

std::vector<std::uint8_t> frame(const std::vector<std::uint8_t>& body) {
  std::vector<std::uint8_t> out;
  out.reserve(body.size() + 4);
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

namespace {

int remaining_ms(Clock::time_point deadline, bool forever) {
  if (forever) return -1;
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left > 0 ? static_cast<int>(left) : 0;
}

void wait_for(int fd, short events, Clock::time_point deadline, bool forever) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline, forever));
    if (rc > 0) return;
    if (rc == 0) throw TranslatorUnavailable("oitr: timed out");
    if (errno != EINTR) throw TranslatorUnavailable(std::string("oitr: poll failed: ") + std::strerror(errno));
  }
}

void read_exact(int fd, std::uint8_t* dst, std::size_t n, Clock::time_point deadline, bool forever) {
  while (n > 0) {
    wait_for(fd, POLLIN, deadline, forever);
    const ssize_t got = ::recv(fd, dst, n, 0);
    if (got == 0) throw TranslatorUnavailable("oitr: connection closed by peer");
    if (got < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TranslatorUnavailable(std::string("oitr: recv failed: ") + std::strerror(errno));
    }
    dst += got;
    n -= static_cast<std::size_t>(got);
  }
}

}  // namespace

void send_frame(int fd, const std::vector<std::uint8_t>& body, std::chrono::milliseconds timeout) {
  const bool forever = timeout.count() < 0;
  const auto deadline = Clock::now() + timeout;
  const auto buf = frame(body);
  std::size_t sent = 0;
  while (sent < buf.size()) {
    wait_for(fd, POLLOUT, deadline, forever);
    const ssize_t n = ::send(fd, buf.data() + sent, buf.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TranslatorUnavailable(std::string("oitr: send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::vector<std::uint8_t> recv_frame(int fd, std::chrono::milliseconds timeout) {
  const bool forever = timeout.count() < 0;
  const auto deadline = Clock::now() + timeout;
  std::uint8_t len_bytes[4];
  read_exact(fd, len_bytes, 4, deadline, forever);
  const std::uint32_t len = bytes::Reader(len_bytes).le<std::uint32_t>();
  if (len > kMaxFrameBytes) throw TranslatorUnavailable("oitr: frame exceeds size limit");
  std::vector<std::uint8_t> body(len);
  if (len > 0) read_exact(fd, body.data(), len, deadline, forever);
  return body;
}

}  // namespace oitr

RemoteTranslatorConfig parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
    throw InvalidArgument("endpoint must look like host:port, got '" + endpoint + "'");
  }
  RemoteTranslatorConfig cfg;
  cfg.host = endpoint.substr(0, colon);
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(endpoint.substr(colon + 1), &used);
    if (used != endpoint.size() - colon - 1) throw InvalidArgument("");
  } catch (const std::exception&) {
    throw InvalidArgument("bad port in endpoint '" + endpoint + "'");
  }
  if (port <= 0 || port > 65535) throw InvalidArgument("port out of range in endpoint '" + endpoint + "'");
  cfg.port = static_cast<std::uint16_t>(port);
  return cfg;
}

RemoteTranslator::RemoteTranslator(RemoteTranslatorConfig cfg) : cfg_(std::move(cfg)) {}

RemoteTranslator::~RemoteTranslator() { disconnect(); }

void RemoteTranslator::disconnect() noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void RemoteTranslator::connect() {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(cfg_.port);
  if (const int rc = ::getaddrinfo(cfg_.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw TranslatorUnavailable("oitr: cannot resolve " + cfg_.host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* a = res; a != nullptr && fd < 0; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) != 0) {
      ::close(fd);
      fd = -1;
    }
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TranslatorUnavailable("oitr: cannot connect to " + cfg_.host + ":" + port);
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  fd_ = fd;
  try {
    const std::string hello = oitr::kClientHello;
    oitr::send_frame(fd_, {hello.begin(), hello.end()}, cfg_.timeout);
    const auto reply = oitr::recv_frame(fd_, cfg_.timeout);
    const std::string text(reply.begin(), reply.end());
    const std::string prefix = oitr::kServerHelloPrefix;
    if (text.rfind(prefix, 0) != 0) throw TranslatorUnavailable("oitr: handshake rejected");
    model_id_ = text.substr(prefix.size());
  } catch (...) {
    disconnect();
    throw;
  }
}

SyntheticOverheadImage RemoteTranslator::translate(const TranslatorInput& input, const Pose2&, std::uint64_t) {
  try {
    if (fd_ < 0) connect();
    const std::uint32_t id = next_id_++;
    oitr::send_frame(fd_, oitr::encode_request(id, input), cfg_.timeout);
    const auto deadline = std::chrono::steady_clock::now() + cfg_.timeout;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TranslatorUnavailable("oitr: timed out waiting for reply");
      const auto reply = oitr::decode_reply(oitr::recv_frame(fd_, left));
      if (const auto* err = std::get_if<oitr::ErrorReply>(&reply)) {
        if (err->request_id != id) continue;
        throw TranslatorUnavailable("oitr: server error " + std::to_string(err->code) + ": " + err->message);
      }
      const auto& resp = std::get<oitr::Response>(reply);
      if (resp.request_id != id) continue;  // stale reply to an abandoned request
      if (resp.probability.rows() != input.spec.rows || resp.probability.cols() != input.spec.cols) {
        throw TranslatorUnavailable("oitr: reply shape does not match request");
      }
      return {resp.probability, input.spec};
    }
  } catch (const TranslatorUnavailable&) {
    disconnect();
    throw;
  }
}

}  // namespace sonar_oi
