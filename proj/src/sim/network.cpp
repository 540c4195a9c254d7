#include "pipefuse/sim/network.hpp"

#include <set>
#include <stdexcept>

namespace pipefuse::sim {

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::raw: return "raw";
    case MessageKind::aggregated: return "aggregated";
    case MessageKind::fused: return "fused";
    case MessageKind::alert: return "alert";
    case MessageKind::consensus: return "consensus";
  }
  return "unknown";
}

std::string_view to_string(Level level) {
  switch (level) {
    case Level::field: return "field";
    case Level::uplink: return "uplink";
    case Level::peer: return "peer";
  }
  return "unknown";
}

std::string cluster_head_id(const std::string& cluster_id) { return "ch:" + cluster_id; }

void Network::send(const Message& m) {
  if (m.payload_bits < 1) throw std::invalid_argument("message payload must be at least one bit");
  const std::size_t idx = log_.size();
  log_.push_back(m);
  outbox_[m.src].push_back(idx);
  inbox_[m.dst].push_back(idx);
}

void Network::send_all(const std::vector<Message>& ms) {
  for (const auto& m : ms) send(m);
}

std::vector<Message> Network::outbox(const std::string& entity) const {
  std::vector<Message> out;
  if (auto it = outbox_.find(entity); it != outbox_.end()) {
    for (std::size_t i : it->second) out.push_back(log_[i]);
  }
  return out;
}

std::vector<Message> Network::inbox(const std::string& entity) const {
  std::vector<Message> out;
  if (auto it = inbox_.find(entity); it != inbox_.end()) {
    for (std::size_t i : it->second) out.push_back(log_[i]);
  }
  return out;
}

std::vector<std::string> Network::entities() const {
  std::set<std::string> ids;
  for (const auto& [id, _] : outbox_) ids.insert(id);
  for (const auto& [id, _] : inbox_) ids.insert(id);
  return {ids.begin(), ids.end()};
}

Traffic Network::traffic(Level level) const {
  Traffic t;
  for (const auto& m : log_) {
    if (m.level != level) continue;
    ++t.messages;
    t.bits += m.payload_bits;
  }
  return t;
}

Traffic Network::total() const {
  Traffic t;
  for (const auto& m : log_) {
    ++t.messages;
    t.bits += m.payload_bits;
  }
  return t;
}

}  // namespace pipefuse::sim
