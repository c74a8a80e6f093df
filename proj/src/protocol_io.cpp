// SPDX-License-Identifier: Apache-2.0
#include "kish/protocol_io.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

#include "cipher_access.hpp"
#include "kish/errors.hpp"
#include "kish/seed.hpp"

namespace kish::io {

namespace {

using he::detail::CipherAccess;

constexpr std::array<std::uint8_t, 4> kMagic = {'K', 'I', 'S', 'H'};
constexpr std::size_t kHeaderSize = 10;
constexpr std::size_t kCipherSize = 18;
constexpr std::size_t kRingSize = 36;
constexpr std::uint32_t kMaxBody = 64U << 20U;

enum Kind : std::uint8_t { kQuery = 1, kResponse = 2, kError = 3 };
enum Tag : std::uint8_t { kTagRing = 1, kTagSecurity = 2, kTagPk = 3, kTagCipher = 4, kTagCode = 5, kTagText = 6 };

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& data() { return out_; }

  template <class F>
  void field(std::uint8_t tag, F&& payload) {
    u8(tag);
    const std::size_t len_at = out_.size();
    u32(0);
    const std::size_t start = out_.size();
    payload(*this);
    const auto len = static_cast<std::uint32_t>(out_.size() - start);
    for (int i = 0; i < 4; ++i) out_[len_at + i] = static_cast<std::uint8_t>(len >> (8 * i));
  }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

std::uint64_t read_le(std::span<const std::uint8_t> b, std::size_t at, int n) {
  std::uint64_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8U) | b[at + i];
  return v;
}

void put_cipher(Writer& w, const he::Cipher& c) {
  w.field(kTagCipher, [&](Writer& f) {
    f.u64(CipherAccess::value(c));
    f.u16(c.depth());
    f.u64(c.key_id());
  });
}

he::Cipher get_cipher(std::span<const std::uint8_t> p) {
  return CipherAccess::make(read_le(p, 0, 8), static_cast<std::uint16_t>(read_le(p, 8, 2)), read_le(p, 10, 8));
}

bool same_cipher(const he::Cipher& a, const he::Cipher& b) {
  return CipherAccess::value(a) == CipherAccess::value(b) && a.depth() == b.depth() && a.key_id() == b.key_id();
}

bool same_ciphers(const std::vector<he::Cipher>& a, const std::vector<he::Cipher>& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), same_cipher);
}

}  // namespace

bool operator==(const QueryMessage& a, const QueryMessage& b) {
  return a.protocol_version == b.protocol_version && a.ring == b.ring && a.security_bits == b.security_bits &&
         a.pk == b.pk && same_ciphers(a.enc_q, b.enc_q);
}

bool operator==(const ResponseMessage& a, const ResponseMessage& b) { return same_ciphers(a.enc_class, b.enc_class); }

bool operator==(const ErrorMessage& a, const ErrorMessage& b) { return a.code == b.code && a.text == b.text; }

std::vector<std::uint8_t> encode_message(const Message& msg) {
  Writer w;
  w.bytes(kMagic);
  w.u8(kProtocolVersion);
  w.u8(static_cast<std::uint8_t>(msg.index() + 1));
  w.u32(0);

  if (const auto* q = std::get_if<QueryMessage>(&msg)) {
    if (q->protocol_version != kProtocolVersion) throw ParameterError("unsupported protocol version");
    w.field(kTagRing, [&](Writer& f) {
      f.u64(q->ring.modulus);
      f.u64(q->ring.coord_bound);
      f.u32(q->ring.dim);
      f.u64(q->ring.dist_bound);
      f.u64(q->ring.n);
    });
    w.field(kTagSecurity, [&](Writer& f) { f.u16(q->security_bits); });
    w.field(kTagPk, [&](Writer& f) { f.u64(q->pk); });
    for (const auto& c : q->enc_q) put_cipher(w, c);
  } else if (const auto* r = std::get_if<ResponseMessage>(&msg)) {
    for (const auto& c : r->enc_class) put_cipher(w, c);
  } else {
    const auto& e = std::get<ErrorMessage>(msg);
    w.field(kTagCode, [&](Writer& f) { f.u16(e.code); });
    w.field(kTagText, [&](Writer& f) {
      f.bytes({reinterpret_cast<const std::uint8_t*>(e.text.data()), e.text.size()});
    });
  }

  auto& out = w.data();
  const auto body = static_cast<std::uint32_t>(out.size() - kHeaderSize);
  for (int i = 0; i < 4; ++i) out[6 + i] = static_cast<std::uint8_t>(body >> (8 * i));
  return out;
}

Message decode_message(std::span<const std::uint8_t> bytes) {
  const std::size_t size = bytes.size();
  for (std::size_t i = 0; i < kMagic.size() && i < size; ++i) {
    if (bytes[i] != kMagic[i]) throw DecodeError("bad magic", 0);
  }
  if (size < kHeaderSize) throw DecodeError("truncated header", size);
  if (bytes[4] != kProtocolVersion) throw DecodeError("unsupported version", 4);
  const std::uint8_t kind = bytes[5];
  if (kind < kQuery || kind > kError) throw DecodeError("unknown message kind", 5);
  const std::uint64_t body = read_le(bytes, 6, 4);
  if (kHeaderSize + body > size) throw DecodeError("truncated message", size);
  if (kHeaderSize + body < size) throw DecodeError("trailing bytes", kHeaderSize + body);

  QueryMessage query;
  ResponseMessage response;
  ErrorMessage error;
  bool have_ring = false;
  bool have_security = false;
  bool have_pk = false;
  bool have_code = false;
  bool have_text = false;

  auto once = [](bool& seen, std::size_t at) {
    if (seen) throw DecodeError("duplicate field", at);
    seen = true;
  };

  std::size_t at = kHeaderSize;
  while (at < size) {
    const std::size_t field_at = at;
    if (size - at < 5) throw DecodeError("truncated field header", size);
    const std::uint8_t tag = bytes[at];
    const std::uint64_t len = read_le(bytes, at + 1, 4);
    at += 5;
    if (size - at < len) throw DecodeError("truncated field", size);
    const auto payload = bytes.subspan(at, len);
    at += len;

    auto expect_len = [&](std::size_t want) {
      if (len != want) throw DecodeError("bad field length", field_at);
    };
    if (kind == kQuery && tag == kTagRing) {
      expect_len(kRingSize);
      once(have_ring, field_at);
      query.ring.modulus = read_le(payload, 0, 8);
      query.ring.coord_bound = read_le(payload, 8, 8);
      query.ring.dim = static_cast<std::uint32_t>(read_le(payload, 16, 4));
      query.ring.dist_bound = read_le(payload, 20, 8);
      query.ring.n = read_le(payload, 28, 8);
    } else if (kind == kQuery && tag == kTagSecurity) {
      expect_len(2);
      once(have_security, field_at);
      query.security_bits = static_cast<std::uint16_t>(read_le(payload, 0, 2));
    } else if (kind == kQuery && tag == kTagPk) {
      expect_len(8);
      once(have_pk, field_at);
      query.pk = read_le(payload, 0, 8);
    } else if ((kind == kQuery || kind == kResponse) && tag == kTagCipher) {
      expect_len(kCipherSize);
      (kind == kQuery ? query.enc_q : response.enc_class).push_back(get_cipher(payload));
    } else if (kind == kError && tag == kTagCode) {
      expect_len(2);
      once(have_code, field_at);
      error.code = static_cast<std::uint16_t>(read_le(payload, 0, 2));
    } else if (kind == kError && tag == kTagText) {
      once(have_text, field_at);
      error.text.assign(payload.begin(), payload.end());
    } else {
      throw DecodeError("unexpected field tag", field_at);
    }
  }

  switch (kind) {
    case kQuery:
      if (!have_ring || !have_security || !have_pk) throw DecodeError("query misses a required field", size);
      return query;
    case kResponse:
      return response;
    default:
      if (!have_code || !have_text) throw DecodeError("error message misses a required field", size);
      return error;
  }
}

namespace {

struct Channel {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<std::vector<std::uint8_t>> queue;
  bool closed = false;
};

class LoopbackTransport final : public Transport {
 public:
  LoopbackTransport(std::shared_ptr<Channel> in, std::shared_ptr<Channel> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~LoopbackTransport() override { close(); }

  void send(std::span<const std::uint8_t> message) override {
    std::lock_guard lock(out_->mutex);
    if (out_->closed) throw ConnectionError("loopback peer closed");
    out_->queue.emplace_back(message.begin(), message.end());
    out_->ready.notify_all();
  }

  std::optional<std::vector<std::uint8_t>> receive() override {
    std::unique_lock lock(in_->mutex);
    in_->ready.wait(lock, [&] { return !in_->queue.empty() || in_->closed; });
    if (in_->queue.empty()) return std::nullopt;
    auto msg = std::move(in_->queue.front());
    in_->queue.pop_front();
    return msg;
  }

  void close() override {
    for (const auto& ch : {in_, out_}) {
      std::lock_guard lock(ch->mutex);
      ch->closed = true;
      ch->ready.notify_all();
    }
  }

 private:
  std::shared_ptr<Channel> in_;
  std::shared_ptr<Channel> out_;
};

class FdTransport final : public Transport {
 public:
  FdTransport(int read_fd, int write_fd, bool owns) : read_fd_(read_fd), write_fd_(write_fd), owns_(owns) {}
  ~FdTransport() override { close(); }

  void send(std::span<const std::uint8_t> message) override {
    std::size_t done = 0;
    while (done < message.size()) {
      ssize_t n = ::send(write_fd_, message.data() + done, message.size() - done, MSG_NOSIGNAL);
      if (n < 0 && errno == ENOTSOCK) n = ::write(write_fd_, message.data() + done, message.size() - done);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw ConnectionError(std::string("write failed: ") + std::strerror(errno));
      done += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::vector<std::uint8_t>> receive() override {
    std::vector<std::uint8_t> msg(kHeaderSize);
    const std::size_t got = read_fully(msg.data(), kHeaderSize);
    if (got == 0) return std::nullopt;
    if (got < kHeaderSize) throw ConnectionError("connection closed inside a message header");
    const auto body = static_cast<std::uint32_t>(read_le(msg, 6, 4));
    if (body > kMaxBody) throw ProtocolError("message body too large");
    msg.resize(kHeaderSize + body);
    if (read_fully(msg.data() + kHeaderSize, body) < body) throw ConnectionError("connection closed inside a message");
    return msg;
  }

  void close() override {
    if (!owns_) return;
    if (read_fd_ >= 0) ::close(read_fd_);
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    read_fd_ = write_fd_ = -1;
    owns_ = false;
  }

 private:
  std::size_t read_fully(std::uint8_t* dst, std::size_t want) {
    std::size_t done = 0;
    while (done < want) {
      const ssize_t n = ::read(read_fd_, dst + done, want - done);
      if (n < 0 && errno == EINTR) continue;
      if (n < 0) throw ConnectionError(std::string("read failed: ") + std::strerror(errno));
      if (n == 0) break;
      done += static_cast<std::size_t>(n);
    }
    return done;
  }

  int read_fd_;
  int write_fd_;
  bool owns_;
};

std::pair<std::string, std::string> split_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw ParameterError("address must be host:port");
  std::string host = address.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  return {host, address.substr(colon + 1)};
}

struct AddrInfo {
  addrinfo* list = nullptr;
  ~AddrInfo() {
    if (list != nullptr) freeaddrinfo(list);
  }
};

AddrInfo resolve(const std::string& address, bool passive) {
  const auto [host, port] = split_address(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = passive ? AI_PASSIVE : 0;
  AddrInfo info;
  const int rc = getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &info.list);
  if (rc != 0) throw ConnectionError("cannot resolve " + address + ": " + gai_strerror(rc));
  return info;
}

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_loopback_pair() {
  auto a_to_b = std::make_shared<Channel>();
  auto b_to_a = std::make_shared<Channel>();
  return {std::make_unique<LoopbackTransport>(b_to_a, a_to_b), std::make_unique<LoopbackTransport>(a_to_b, b_to_a)};
}

std::unique_ptr<Transport> make_fd_transport(int read_fd, int write_fd, bool owns_fds) {
  return std::make_unique<FdTransport>(read_fd, write_fd, owns_fds);
}

TcpListener::TcpListener(const std::string& address) {
  const AddrInfo info = resolve(address, true);
  for (addrinfo* ai = info.list; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int yes = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  if (fd_ < 0) throw ConnectionError("cannot listen on " + address);
  sockaddr_storage bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port
                                            : reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Transport> TcpListener::accept() {
  int fd = -1;
  do {
    fd = ::accept(fd_, nullptr, nullptr);
  } while (fd < 0 && errno == EINTR);
  if (fd < 0) throw ConnectionError(std::string("accept failed: ") + std::strerror(errno));
  return make_fd_transport(fd, fd, true);
}

std::unique_ptr<Transport> tcp_connect(const std::string& address) {
  const AddrInfo info = resolve(address, false);
  for (addrinfo* ai = info.list; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) return make_fd_transport(fd, fd, true);
    ::close(fd);
  }
  throw ConnectionError("cannot connect to " + address);
}

namespace {

void send_error(Transport& transport, std::uint16_t code, const std::string& text) {
  transport.send(encode_message(ErrorMessage{code, text}));
}

// Empty string when the query fits; otherwise the reason it does not.
std::string check_query(const QueryMessage& q, const ProtocolParams& pp) {
  const RingParams& a = q.ring;
  const RingParams& b = pp.ring;
  if (a.modulus != b.modulus || a.coord_bound != b.coord_bound || a.dim != b.dim || a.dist_bound != b.dist_bound) {
    return "ring parameters do not match the server";
  }
  if (q.enc_q.size() != b.dim) {
    return "query has " + std::to_string(q.enc_q.size()) + " coordinates, expected " + std::to_string(b.dim);
  }
  for (const auto& c : q.enc_q) {
    if (c.key_id() != q.pk) return "ciphertext not under the announced public key";
    if (CipherAccess::value(c) >= b.modulus) return "ciphertext outside the ring";
  }
  return {};
}

}  // namespace

std::size_t run_server(Transport& transport, const LabeledDatabase& db, const ProtocolParams& pp) {
  validate(pp);
  validate(db, pp.ring);
  std::size_t served = 0;
  std::uint64_t received = 0;
  while (auto bytes = transport.receive()) {
    Message msg;
    try {
      msg = decode_message(*bytes);
      if (!std::holds_alternative<QueryMessage>(msg)) throw ProtocolError("server expects a query message");
    } catch (const Error& e) {
      send_error(transport, kMalformed, e.what());
      transport.close();
      throw ProtocolError(std::string("malformed request: ") + e.what());
    }
    const auto& query = std::get<QueryMessage>(msg);
    const std::uint64_t index = received++;
    if (const std::string problem = check_query(query, pp); !problem.empty()) {
      send_error(transport, kBadQuery, problem);
      continue;
    }

    ProtocolParams qpp = pp;
    qpp.rng_seed = derive_seed(pp.rng_seed, "query", index);
    const he::MockBackend backend(he::PublicKey{query.pk, pp.ring});
    ResponseMessage response;
    for (std::uint32_t rep = 0; rep < qpp.repetitions; ++rep) {
      response.enc_class.push_back(server_classify(backend, query.enc_q, db, repetition_params(qpp, rep)));
    }
    transport.send(encode_message(response));
    ++served;
  }
  return served;
}

ClientResult run_client(Transport& transport, std::span<const std::uint64_t> query, const he::KeyPair& keys,
                        std::uint16_t security_bits) {
  const RingParams& ring = keys.pk.ring;
  if (query.size() != ring.dim) throw ParameterError("query has wrong dimension");
  QueryMessage msg;
  msg.ring = ring;
  msg.security_bits = security_bits;
  msg.pk = keys.pk.key_id;
  for (std::uint64_t c : query) {
    if (c >= ring.coord_bound) throw RangeError("query coordinate outside the grid");
    msg.enc_q.push_back(he::encrypt(keys.pk, c));
  }
  transport.send(encode_message(msg));

  const auto bytes = transport.receive();
  if (!bytes) throw ConnectionError("server closed the connection without answering");
  const Message reply = decode_message(*bytes);
  if (const auto* err = std::get_if<ErrorMessage>(&reply)) throw ProtocolError("server error: " + err->text);
  const auto* response = std::get_if<ResponseMessage>(&reply);
  if (response == nullptr) throw ProtocolError("expected a response message");
  if (response->enc_class.size() % 2 == 0) throw ProtocolError("response must carry an odd number of bits");

  ClientResult result;
  for (const auto& c : response->enc_class) {
    if (CipherAccess::value(c) >= ring.modulus) throw ProtocolError("response ciphertext outside the ring");
    result.bits.push_back(he::decrypt(keys.sk, c));
  }
  result.label = majority(result.bits);
  return result;
}

std::uint64_t run_client(Transport& transport, std::span<const std::uint64_t> query, const ProtocolParams& pp) {
  const he::KeyPair keys = he::keygen(pp.ring, derive_seed(pp.rng_seed, "client_key", 0));
  return run_client(transport, query, keys).label;
}

}  // namespace kish::io
