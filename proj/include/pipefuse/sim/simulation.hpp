#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pipefuse/sim/config.hpp"
#include "pipefuse/sim/network.hpp"
#include "pipefuse/sim/stages.hpp"
#include "pipefuse/sim/world.hpp"

namespace pipefuse::sim {

/// Estimation error of one cluster-level stream against the mean ground
/// truth of its members over each window.
struct StreamError {
  std::string cluster_id;
  SensorKind kind = SensorKind::pressure;
  std::size_t windows = 0;
  double rmse = 0.0;
};

struct EventOutcome {
  std::size_t event_index = 0;
  EventKind kind = EventKind::leak;
  Tick onset = 0;  ///< first tick the event is detectable by rule
  bool detected = false;
  Tick detected_tick = 0;
  std::string cluster_id;
  Tick latency = 0;
  bool validated = false;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  Tick horizon = 0;
  Traffic field;
  Traffic uplink;
  Traffic peer;
  Traffic total;
  std::uint64_t compute_ops = 0;
  double radio_energy = 0.0;  ///< total bits * ops_per_bit * energy_per_op
  double compute_energy = 0.0;
  std::vector<StreamError> stream_errors;
  std::vector<EventOutcome> events;
  std::size_t detections = 0;
  std::size_t false_positives = 0;
  std::size_t suspected_faulty = 0;
  std::size_t consensus_queries = 0;
  std::size_t consensus_unconverged = 0;

  /// Pooled RMSE over every cluster stream of `kind`; nullopt if none.
  std::optional<double> rmse(SensorKind kind) const;
};

struct RunResult {
  ScenarioConfig config;
  World world;
  std::vector<NodeStageResult> node_results;  ///< parallel to world.streams
  std::vector<ClusterStageResult> clusters;
  std::vector<ConsensusQuery> consensus;
  std::vector<Detection> detections;
  Network network;
  RunMetrics metrics;
};

/// generate_world -> node_stage -> cluster_stage -> consensus_stage (per
/// policy) -> detect_events, with every message routed through one Network.
RunResult simulate(const ScenarioConfig& cfg);

inline RunMetrics run_simulation(const ScenarioConfig& cfg) { return simulate(cfg).metrics; }

}  // namespace pipefuse::sim
