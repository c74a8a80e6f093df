// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kish/classifier.hpp"
#include "kish/he.hpp"

namespace kish::io {

inline constexpr std::uint8_t kProtocolVersion = 1;

/// Client to server: the server's whole view of one classification.
struct QueryMessage {
  std::uint8_t protocol_version = kProtocolVersion;
  RingParams ring;
  std::uint16_t security_bits = 80;  // carried for a real backend, unused by the mock
  std::uint64_t pk = 0;              // public key id
  std::vector<he::Cipher> enc_q;
};

/// Server to client: one encrypted class bit per repetition.
struct ResponseMessage {
  std::vector<he::Cipher> enc_class;
};

struct ErrorMessage {
  std::uint16_t code = 0;
  std::string text;
};

enum ErrorCode : std::uint16_t { kMalformed = 1, kBadQuery = 2, kInternal = 3 };

using Message = std::variant<QueryMessage, ResponseMessage, ErrorMessage>;

/// Wire format, little-endian:
///   "KISH" | u8 version | u8 kind | u32 body length | fields
/// Each field is u8 tag | u32 length | payload. A ciphertext payload is
/// u64 value | u16 depth | u64 key id.
std::vector<std::uint8_t> encode_message(const Message& msg);

/// Throws DecodeError carrying the byte offset of the first problem.
Message decode_message(std::span<const std::uint8_t> bytes);

bool operator==(const QueryMessage& a, const QueryMessage& b);
bool operator==(const ResponseMessage& a, const ResponseMessage& b);
bool operator==(const ErrorMessage& a, const ErrorMessage& b);

/// Reliable ordered message channel.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(std::span<const std::uint8_t> message) = 0;
  /// Next whole message, or nullopt once the peer has closed cleanly.
  virtual std::optional<std::vector<std::uint8_t>> receive() = 0;
  virtual void close() = 0;
};

/// Two connected in-process endpoints.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_loopback_pair();

/// Framed messages over a pair of file descriptors (pipes, stdio, sockets).
std::unique_ptr<Transport> make_fd_transport(int read_fd, int write_fd, bool owns_fds);

/// "host:port". Port 0 picks a free port; port() reports the bound one.
class TcpListener {
 public:
  explicit TcpListener(const std::string& address);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  std::unique_ptr<Transport> accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<Transport> tcp_connect(const std::string& address);

/// Serves queries on one connection until the peer closes. A malformed message
/// is answered with an error and ends the connection; a well-formed query that
/// does not fit the database is answered with an error and serving continues.
/// Returns the number of queries answered with a classification.
std::size_t run_server(Transport& transport, const LabeledDatabase& db, const ProtocolParams& pp);

struct ClientResult {
  std::uint64_t label = 0;
  std::vector<std::uint64_t> bits;  // decrypted per-repetition bits
};

/// One round trip: sends (pk, Enc(q)) and returns the majority of the
/// decrypted response bits. Throws ProtocolError if the server reports an
/// error or answers with anything but a response.
ClientResult run_client(Transport& transport, std::span<const std::uint64_t> query, const he::KeyPair& keys,
                        std::uint16_t security_bits = 80);

/// Convenience overload that derives the key pair from pp.rng_seed.
std::uint64_t run_client(Transport& transport, std::span<const std::uint64_t> query, const ProtocolParams& pp);

}  // namespace kish::io
