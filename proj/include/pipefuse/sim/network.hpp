#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pipefuse/core.hpp"

namespace pipefuse::sim {

enum class MessageKind { raw, aggregated, fused, alert, consensus };
std::string_view to_string(MessageKind kind);

/// node -> cluster head, cluster head -> gateway, cluster head <-> cluster head.
enum class Level { field, uplink, peer };
std::string_view to_string(Level level);

struct Message {
  std::string src;
  std::string dst;
  Tick tick = 0;
  std::uint32_t payload_bits = 1;
  MessageKind kind = MessageKind::raw;
  Level level = Level::field;

  bool operator==(const Message&) const = default;
};

struct Traffic {
  std::uint64_t messages = 0;
  std::uint64_t bits = 0;

  bool operator==(const Traffic&) const = default;
};

std::string cluster_head_id(const std::string& cluster_id);

/// Lossless delivery: every sent message lands in the sender's outbox and
/// the receiver's inbox exactly once.
class Network {
 public:
  void send(const Message& m);
  void send_all(const std::vector<Message>& ms);

  const std::vector<Message>& log() const noexcept { return log_; }
  std::vector<Message> outbox(const std::string& entity) const;
  std::vector<Message> inbox(const std::string& entity) const;
  std::vector<std::string> entities() const;

  Traffic traffic(Level level) const;
  Traffic total() const;

 private:
  std::vector<Message> log_;
  std::map<std::string, std::vector<std::size_t>> outbox_;
  std::map<std::string, std::vector<std::size_t>> inbox_;
};

}  // namespace pipefuse::sim
