#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pipefuse/consensus.hpp"
#include "pipefuse/fusvaf.hpp"
#include "pipefuse/sim/config.hpp"
#include "pipefuse/sim/network.hpp"

namespace pipefuse::sim {

/// A value a node put on the air.
struct Report {
  Tick tick = 0;
  double value = 0.0;

  bool operator==(const Report&) const = default;
};

struct NodeStageResult {
  std::vector<Report> reports;
  std::vector<double> estimates;  ///< per input reading; raw value when the EKF is off
  std::vector<Message> messages;
  std::uint64_t ops = 0;
};

/// On-node processing of one sensor trace. With the EKF on (analog
/// channels): scalar random-walk EKF, then report-on-change with deadband
/// `report_delta`. Binary channels report on change. With the EKF off every
/// reading is forwarded raw.
NodeStageResult node_stage(const Trace& trace, const std::string& destination, const ScenarioConfig& cfg);

struct Aggregate {
  std::size_t count = 0;
  double avg = 0.0;
  double max = 0.0;
  double min = 0.0;

  bool operator==(const Aggregate&) const = default;
};

/// COUNT, AVG, MAX, MIN. An empty window yields count 0 and zeros.
Aggregate aggregate(std::span<const double> values);

struct MemberStream {
  std::string node_id;
  SensorKind kind = SensorKind::pressure;
  std::vector<Report> reports;
};

struct ClusterWindow {
  std::size_t index = 0;
  Tick start = 0;
  Tick end = 0;  ///< inclusive
  bool has_value = false;
  double fused = 0.0;
  double prediction = 0.0;  ///< FUSVAF prediction; equals `fused` when FUSVAF is off
  bool warmup = false;
  Aggregate agg;
  /// Per-member window value (mean of held reports) and confidence.
  std::vector<fusvaf::NodeConfidence> members;
};

struct ClusterChannel {
  SensorKind kind = SensorKind::pressure;
  std::vector<std::string> members;
  std::vector<ClusterWindow> windows;
};

struct FaultFlag {
  std::string node_id;
  SensorKind kind = SensorKind::pressure;
  std::size_t window = 0;  ///< window in which the persistence count was reached
  Tick tick = 0;
};

struct ClusterStageResult {
  std::string cluster_id;
  std::vector<ClusterChannel> channels;
  std::vector<FaultFlag> suspected_faulty;
  std::vector<Message> messages;
  std::uint64_t ops = 0;

  const ClusterChannel* channel(SensorKind kind) const;
};

/// Cluster-head processing. Member reports are held between transmissions;
/// each reporting window gives one value per member (mean of the held value
/// over the window), fused with FUSVAF (or averaged when FUSVAF is off).
/// Binary channels are aggregated only. One message per channel per window
/// goes upstream, or every member report is relayed in raw-forward mode.
ClusterStageResult cluster_stage(const std::string& cluster_id, std::span<const MemberStream> members,
                                 const ScenarioConfig& cfg);

struct ConsensusQuery {
  Tick tick = 0;
  std::size_t window = 0;
  std::string trigger;
  std::vector<std::string> clusters;
  std::vector<double> initial;
  std::vector<double> final_estimates;
  double agreed = 0.0;
  std::size_t rounds = 0;
  bool converged = false;  ///< false marks a degraded-confidence result
  std::vector<double> mse_history;
  std::vector<Message> messages;
};

/// Average consensus among cluster heads. Each round costs one message per
/// peer link per direction. Returns nothing when fewer than two heads take
/// part.
std::optional<ConsensusQuery> consensus_stage(Tick tick, std::size_t window, const std::string& trigger,
                                              std::span<const std::string> cluster_ids,
                                              std::span<const double> estimates,
                                              const consensus::CommGraph& peers, const ScenarioConfig& cfg);

/// Peer graph over the configured clusters, in configuration order.
consensus::CommGraph peer_graph(const ScenarioConfig& cfg);

struct Detection {
  EventKind kind = EventKind::leak;
  std::string cluster_id;
  Tick tick = 0;
  std::size_t window = 0;
  bool validated = false;
  std::optional<Tick> validation_tick;
};

/// Leak: fused pressure below nominal - leak_threshold for leak_persistence
/// consecutive windows. Intrusion: any pir/magnetic window MAX equal to 1.
/// One detection per episode; a UAV visit to the cluster at or after the
/// detection tick validates it.
std::vector<Detection> detect_events(std::span<const ClusterStageResult> clusters, const ScenarioConfig& cfg);

}  // namespace pipefuse::sim
