#include "fedids/transport.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <thread>

#include "fedids/bytes.hpp"
#include "fedids/log.hpp"

namespace fedids {

std::string to_string(MessageKind k) {
  switch (k) {
    case MessageKind::GlobalModel: return "GlobalModel";
    case MessageKind::ClientUpdate: return "ClientUpdate";
    case MessageKind::ScalerPass: return "ScalerPass";
    case MessageKind::ScalerBroadcast: return "ScalerBroadcast";
    case MessageKind::PhaseAdvance: return "PhaseAdvance";
  }
  return "?";
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::Scaler: return "scaler";
    case Phase::Autoencoder: return "AE";
    case Phase::FeatureGeneration: return "features";
    case Phase::Classifier: return "CLF";
    case Phase::Done: return "done";
  }
  return "?";
}

bool expects_reply(MessageKind kind) {
  return kind == MessageKind::GlobalModel || kind == MessageKind::ScalerPass;
}

namespace {

void write_params(ByteWriter& w, const ParamVector& p) {
  w.u64(p.count);
  w.u64(p.values.size());
  for (double v : p.values) w.f64(v);
}

ParamVector read_params(ByteReader& r) {
  ParamVector p;
  p.count = r.u64();
  const auto n = r.u64();
  if (n > r.remaining() / 8) throw ShapeError("parameter payload shorter than its declared length");
  p.values.resize(n);
  for (auto& v : p.values) v = r.f64();
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_params(const ParamVector& p) {
  ByteWriter w;
  write_params(w, p);
  return w.take();
}

ParamVector decode_params(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto p = read_params(r);
  if (!r.done()) throw ShapeError("trailing bytes after parameter payload");
  return p;
}

std::vector<std::uint8_t> encode_phase(const PhaseNotice& n) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(n.phase));
  w.u8(static_cast<std::uint8_t>((n.individual_scalers ? 1 : 0) | (n.model ? 2 : 0)));
  if (n.model) write_params(w, *n.model);
  return w.take();
}

PhaseNotice decode_phase(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  PhaseNotice n;
  const auto phase = r.u8();
  if (phase > static_cast<std::uint8_t>(Phase::Done)) throw ShapeError("unknown phase code");
  n.phase = static_cast<Phase>(phase);
  const auto flags = r.u8();
  n.individual_scalers = flags & 1;
  if (flags & 2) n.model = read_params(r);
  if (!r.done()) throw ShapeError("trailing bytes after phase payload");
  return n;
}

FLMessage make_message(MessageKind kind, std::uint32_t round, std::string sender,
                       std::vector<std::uint8_t> payload) {
  return FLMessage{kind, round, std::move(sender), std::move(payload)};
}

std::vector<std::uint8_t> encode_frame(const FLMessage& m) {
  ByteWriter body;
  body.u8(static_cast<std::uint8_t>(m.kind));
  body.u32(m.round);
  body.str16(m.sender);
  body.bytes(m.payload);
  const auto inner = body.take();
  if (inner.size() > 0xFFFFFFFFull) throw ShapeError("frame too large");
  ByteWriter frame;
  frame.u32(static_cast<std::uint32_t>(inner.size()));
  frame.bytes(inner);
  return frame.take();
}

FLMessage decode_frame(std::span<const std::uint8_t> frame) {
  ByteReader r(frame);
  const std::size_t len = r.u32();
  if (len != r.remaining()) throw ShapeError("frame length prefix does not match frame size");
  FLMessage m;
  const auto kind = r.u8();
  if (kind < 1 || kind > 5) throw ProtocolError("unknown message kind " + std::to_string(kind));
  m.kind = static_cast<MessageKind>(kind);
  m.round = r.u32();
  m.sender = r.str16();
  auto rest = r.rest();
  m.payload.assign(rest.begin(), rest.end());
  return m;
}

namespace {

bool payload_decodes(const FLMessage& m) {
  try {
    switch (m.kind) {
      case MessageKind::GlobalModel:
      case MessageKind::ClientUpdate: decode_params(m.payload); return true;
      case MessageKind::ScalerPass:
      case MessageKind::ScalerBroadcast: decode_scaler(m.payload); return true;
      case MessageKind::PhaseAdvance: decode_phase(m.payload); return true;
    }
  } catch (const Error&) {
  }
  return false;
}

}  // namespace

void Transport::set_observer(Observer observer) {
  std::lock_guard<std::mutex> lock(mutex_);
  observer_ = std::move(observer);
}

std::vector<MessageRecord> Transport::records() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return records_;
}

std::size_t Transport::invalid_payload_count() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::size_t n = 0;
  for (const auto& r : records_) n += r.payload_valid ? 0 : 1;
  return n;
}

void Transport::record(const FLMessage& m, const std::string& recipient) {
  const bool valid = payload_decodes(m);
  std::lock_guard<std::mutex> lock(mutex_);
  records_.push_back({m.kind, m.round, m.sender, recipient, m.payload.size(), valid});
  if (observer_) observer_(m);
}

void InProcessTransport::attach(const std::string& client_id, MessageHandler& handler) {
  handlers_[client_id] = &handler;
}

MessageHandler& InProcessTransport::handler_for(const std::string& client_id) {
  auto it = handlers_.find(client_id);
  if (it == handlers_.end()) throw ProtocolError("no client '" + client_id + "' attached");
  return *it->second;
}

FLMessage InProcessTransport::request(const std::string& client_id, const FLMessage& message) {
  auto& h = handler_for(client_id);
  record(message, client_id);
  auto reply = h.handle(message);
  if (!reply) {
    throw ProtocolError("client '" + client_id + "' sent no reply to " + to_string(message.kind));
  }
  record(*reply, "server");
  return *reply;
}

void InProcessTransport::deliver(const std::string& client_id, const FLMessage& message) {
  auto& h = handler_for(client_id);
  record(message, client_id);
  h.handle(message);
}

// ---------------------------------------------------------------------------
// Socket transport

namespace {

bool write_all(int fd, const std::vector<std::uint8_t>& bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

bool read_exact(int fd, std::uint8_t* out, std::size_t len) {
  std::size_t off = 0;
  while (off < len) {
    const auto n = ::recv(fd, out + off, len - off, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<FLMessage> read_frame(int fd) {
  std::vector<std::uint8_t> frame(4);
  if (!read_exact(fd, frame.data(), 4)) return std::nullopt;
  const std::uint32_t len = (std::uint32_t(frame[0]) << 24) | (std::uint32_t(frame[1]) << 16) |
                            (std::uint32_t(frame[2]) << 8) | std::uint32_t(frame[3]);
  frame.resize(4 + static_cast<std::size_t>(len));
  if (!read_exact(fd, frame.data() + 4, len)) return std::nullopt;
  return decode_frame(frame);
}

}  // namespace

struct SocketTransport::Endpoint {
  std::string id;
  int server_fd = -1;
  int client_fd = -1;
  MessageHandler* handler = nullptr;
  std::thread worker;
  std::atomic<std::uint64_t> sent{0};

  void serve() {
    try {
      while (auto m = read_frame(client_fd)) {
        auto reply = handler->handle(*m);
        if (expects_reply(m->kind)) {
          if (!reply || !write_all(client_fd, encode_frame(*reply))) break;
        }
      }
    } catch (const std::exception& e) {
      log::warn("client '" + id + "' failed: " + e.what());
    }
    ::shutdown(client_fd, SHUT_RDWR);
  }

  ~Endpoint() {
    if (server_fd >= 0) ::shutdown(server_fd, SHUT_RDWR);
    if (worker.joinable()) worker.join();
    if (server_fd >= 0) ::close(server_fd);
    if (client_fd >= 0) ::close(client_fd);
  }
};

SocketTransport::SocketTransport() = default;
SocketTransport::~SocketTransport() = default;

void SocketTransport::attach(const std::string& client_id, MessageHandler& handler) {
  if (endpoints_.count(client_id)) throw ProtocolError("client '" + client_id + "' attached twice");
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    throw ProtocolError(std::string("socketpair failed: ") + std::strerror(errno));
  }
  auto ep = std::make_unique<Endpoint>();
  ep->id = client_id;
  ep->server_fd = fds[0];
  ep->client_fd = fds[1];
  ep->handler = &handler;
  ep->worker = std::thread([raw = ep.get()] { raw->serve(); });
  endpoints_[client_id] = std::move(ep);
}

SocketTransport::Endpoint& SocketTransport::endpoint_for(const std::string& client_id) {
  auto it = endpoints_.find(client_id);
  if (it == endpoints_.end()) throw ProtocolError("no client '" + client_id + "' attached");
  return *it->second;
}

FLMessage SocketTransport::request(const std::string& client_id, const FLMessage& message) {
  auto& ep = endpoint_for(client_id);
  record(message, client_id);
  const auto frame = encode_frame(message);
  if (!write_all(ep.server_fd, frame)) {
    throw ProtocolError("client '" + client_id + "' unreachable (send failed)");
  }
  ep.sent += frame.size();
  auto reply = read_frame(ep.server_fd);
  if (!reply) throw ProtocolError("client '" + client_id + "' closed the connection");
  record(*reply, "server");
  return *reply;
}

void SocketTransport::deliver(const std::string& client_id, const FLMessage& message) {
  auto& ep = endpoint_for(client_id);
  record(message, client_id);
  const auto frame = encode_frame(message);
  if (!write_all(ep.server_fd, frame)) {
    throw ProtocolError("client '" + client_id + "' unreachable (send failed)");
  }
  ep.sent += frame.size();
}

std::uint64_t SocketTransport::bytes_sent() const {
  std::uint64_t n = 0;
  for (const auto& [id, ep] : endpoints_) n += ep->sent;
  return n;
}

}  // namespace fedids
