#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sonar_oi/oi_pipeline.hpp"

namespace sonar_oi {

// OITR v1 wire format. Every message on the socket is a frame: u32 little-endian body
// length followed by the body. After connecting the client sends the body "OITR v1"; the
// server answers "OITR v1\n" followed by a free-form model id.
//
// Request body (16-byte header + payload):
//   'O' 'Q' | u32 request_id | u16 rows | u16 cols | u8 channels=2 | u8 dtype=1 (u8)
//   | u32 resolution in micrometres | rows*cols bytes channel 0 (CFAR) | rows*cols bytes channel 1 (candidate)
// Channels are planar, row-major, values 0 or 1.
//
// Response body:
//   'O' 'R' | u32 request_id | u16 rows | u16 cols | u8 channels=1 | u8 dtype=2 (f32)
//   | u32 payload_bytes | rows*cols little-endian f32 probabilities in [0, 1]
//
// Error body:
//   'O' 'E' | u32 request_id | u16 code | u16 reserved | u32 reserved | u32 message_bytes | UTF-8 message
namespace oitr {

inline constexpr const char* kClientHello = "OITR v1";
inline constexpr const char* kServerHelloPrefix = "OITR v1\n";
inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;
inline constexpr std::uint8_t kDtypeU8 = 1;
inline constexpr std::uint8_t kDtypeF32 = 2;

struct Request {
  std::uint32_t request_id{0};
  TranslatorInput input;
};

struct Response {
  std::uint32_t request_id{0};
  ProbabilityRaster probability;
};

struct ErrorReply {
  std::uint32_t request_id{0};
  std::uint16_t code{0};
  std::string message;
};

using Reply = std::variant<Response, ErrorReply>;

[[nodiscard]] std::vector<std::uint8_t> encode_request(std::uint32_t request_id, const TranslatorInput& input);
/// Throws TranslatorUnavailable on any malformed field.
[[nodiscard]] Request decode_request(const std::vector<std::uint8_t>& body);

[[nodiscard]] std::vector<std::uint8_t> encode_response(std::uint32_t request_id, const ProbabilityRaster& img);
[[nodiscard]] std::vector<std::uint8_t> encode_error(std::uint32_t request_id, std::uint16_t code,
                                                     const std::string& message);
/// Checks magic, dtype, channel count and sizes; probabilities must be finite and in [0, 1].
[[nodiscard]] Reply decode_reply(const std::vector<std::uint8_t>& body);

/// Length prefix + body.
[[nodiscard]] std::vector<std::uint8_t> frame(const std::vector<std::uint8_t>& body);

// Blocking frame I/O on a connected socket. A negative timeout waits forever.
// Both throw TranslatorUnavailable on timeout, EOF or an oversize frame.
void send_frame(int fd, const std::vector<std::uint8_t>& body, std::chrono::milliseconds timeout);
[[nodiscard]] std::vector<std::uint8_t> recv_frame(int fd, std::chrono::milliseconds timeout);

}  // namespace oitr

struct RemoteTranslatorConfig {
  std::string host{"127.0.0.1"};
  std::uint16_t port{0};
  std::chrono::milliseconds timeout{1000};
};

/// TCP client for a translator service. Connects lazily; any failure throws
/// TranslatorUnavailable and drops the connection so the next call reconnects.
/// Replies carrying an older request id are discarded.
class RemoteTranslator final : public Translator {
 public:
  explicit RemoteTranslator(RemoteTranslatorConfig cfg);
  ~RemoteTranslator() override;
  RemoteTranslator(const RemoteTranslator&) = delete;
  RemoteTranslator& operator=(const RemoteTranslator&) = delete;

  [[nodiscard]] SyntheticOverheadImage translate(const TranslatorInput& input, const Pose2& true_pose,
                                                 std::uint64_t seed) override;
  [[nodiscard]] const std::string& model_id() const noexcept { return model_id_; }

 private:
  void connect();
  void disconnect() noexcept;

  RemoteTranslatorConfig cfg_;
  int fd_{-1};
  std::uint32_t next_id_{1};
  std::string model_id_;
};

/// Parses "host:port".
[[nodiscard]] RemoteTranslatorConfig parse_endpoint(const std::string& endpoint);

}  // namespace sonar_oi
