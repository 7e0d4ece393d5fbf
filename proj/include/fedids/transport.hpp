#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedids/nn.hpp"
#include "fedids/scaler.hpp"

namespace fedids {

enum class MessageKind : std::uint8_t {
  GlobalModel = 1,
  ClientUpdate = 2,
  ScalerPass = 3,
  ScalerBroadcast = 4,
  PhaseAdvance = 5,
};
std::string to_string(MessageKind k);

enum class Phase : std::uint8_t {
  Scaler = 0,
  Autoencoder = 1,
  FeatureGeneration = 2,
  Classifier = 3,
  Done = 4,
};
std::string to_string(Phase p);

struct FLMessage {
  MessageKind kind = MessageKind::PhaseAdvance;
  std::uint32_t round = 0;
  std::string sender;
  std::vector<std::uint8_t> payload;
};

// Payloads per kind:
//   GlobalModel, ClientUpdate  -> ParamVector: u64 count | u64 n | n x f64
//   ScalerPass, ScalerBroadcast -> encode_scaler()
//   PhaseAdvance               -> u8 phase | u8 flags | [ParamVector]
//     flags bit0: clients fit individual scalers; bit1: a model follows
//     (the final autoencoder, sent when feature generation starts)
std::vector<std::uint8_t> encode_params(const ParamVector& p);
ParamVector decode_params(std::span<const std::uint8_t> bytes);

struct PhaseNotice {
  Phase phase = Phase::Scaler;
  bool individual_scalers = false;
  std::optional<ParamVector> model;
};
std::vector<std::uint8_t> encode_phase(const PhaseNotice& n);
PhaseNotice decode_phase(std::span<const std::uint8_t> bytes);

FLMessage make_message(MessageKind kind, std::uint32_t round, std::string sender,
                       std::vector<std::uint8_t> payload);

/// Wire frame: u32 big-endian length of everything after it | u8 kind |
/// u32 big-endian round | u16 big-endian sender length | sender bytes | payload.
/// True for the kinds that expect a reply.
bool expects_reply(MessageKind kind);

std::vector<std::uint8_t> encode_frame(const FLMessage& m);
/// Decodes one complete frame (including its length prefix).
FLMessage decode_frame(std::span<const std::uint8_t> frame);

/// Client-side message endpoint. GlobalModel and ScalerPass are requests and
/// must be answered; ScalerBroadcast and PhaseAdvance are one-way.
class MessageHandler {
 public:
  virtual ~MessageHandler() = default;
  virtual std::optional<FLMessage> handle(const FLMessage& message) = 0;
};

/// One observed message. payload_valid is false when the payload did not
/// decode as its declared kind.
struct MessageRecord {
  MessageKind kind;
  std::uint32_t round;
  std::string sender;
  std::string recipient;
  std::size_t payload_bytes;
  bool payload_valid;
};

/// Moves FLMessages between the server and registered clients. Every message
/// in both directions is decoded by kind and recorded for audit.
class Transport {
 public:
  using Observer = std::function<void(const FLMessage&)>;

  virtual ~Transport() = default;

  virtual void attach(const std::string& client_id, MessageHandler& handler) = 0;
  /// Sends a message and waits for the reply.
  virtual FLMessage request(const std::string& client_id, const FLMessage& message) = 0;
  /// One-way message; no reply expected.
  virtual void deliver(const std::string& client_id, const FLMessage& message) = 0;

  /// Called with every message that crosses the transport.
  void set_observer(Observer observer);
  std::vector<MessageRecord> records() const;
  /// Messages whose payload did not decode as a model, scaler or phase notice.
  std::size_t invalid_payload_count() const;

 protected:
  void record(const FLMessage& m, const std::string& recipient);

 private:
  mutable std::mutex mutex_;
  std::vector<MessageRecord> records_;
  Observer observer_;
};

/// Direct function-call delivery inside one process.
class InProcessTransport : public Transport {
 public:
  void attach(const std::string& client_id, MessageHandler& handler) override;
  FLMessage request(const std::string& client_id, const FLMessage& message) override;
  void deliver(const std::string& client_id, const FLMessage& message) override;

 private:
  MessageHandler& handler_for(const std::string& client_id);
  std::map<std::string, MessageHandler*> handlers_;
};

/// Frames every message over a local socket pair; each client is served by its
/// own thread. Same semantics as InProcessTransport, except that one-way
/// messages are handled asynchronously; attached handlers must outlive the
/// transport, whose destructor drains and joins the workers.
class SocketTransport : public Transport {
 public:
  SocketTransport();
  ~SocketTransport() override;
  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  void attach(const std::string& client_id, MessageHandler& handler) override;
  FLMessage request(const std::string& client_id, const FLMessage& message) override;
  void deliver(const std::string& client_id, const FLMessage& message) override;

  /// Bytes written by the server side (frames included).
  std::uint64_t bytes_sent() const;

 private:
  struct Endpoint;
  Endpoint& endpoint_for(const std::string& client_id);
  std::map<std::string, std::unique_ptr<Endpoint>> endpoints_;
};

}  // namespace fedids
