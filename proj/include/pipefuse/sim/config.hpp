#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pipefuse/core.hpp"
#include "pipefuse/fusvaf.hpp"

namespace pipefuse::sim {

struct NodeSpec {
  std::string id;
  std::string cluster;
  double position = 0.0;  ///< metres along the pipeline
  std::vector<SensorKind> sensors;
};

struct ClusterSpec {
  std::string id;
  std::vector<std::string> peers;
};

/// UAV presence over the cluster for ticks [start, end].
struct PatrolLeg {
  Tick start = 0;
  Tick end = 0;
  std::string cluster;
};

struct TopologySpec {
  std::string gateway = "ncw";
  std::vector<NodeSpec> nodes;
  std::vector<ClusterSpec> clusters;
  bool has_uav = false;
  std::vector<PatrolLeg> patrol;
};

struct SignalSpec {
  double baseline = 0.0;
  double drift = 0.0;  ///< ground-truth change per tick
  double noise_std = 0.0;
};

enum class EventKind { leak, intrusion };
std::string_view to_string(EventKind kind);

struct EventSpec {
  EventKind kind = EventKind::leak;
  Tick start = 0;
  Tick end = 0;
  double location = 0.0;
  double magnitude = 0.0;
  double radius = 100.0;  ///< leak influence radius in metres
};

enum class ConsensusPolicy { never, on_suspicion, periodic };
enum class ClusterForward { aggregate, raw };
enum class PredictorKind { ekf, smoothing };

struct ChannelTuning {
  double report_delta = 0.0;
  double initial_half_width = 10.0;
  fusvaf::GateAdaptation gate{};
};

struct FusionSpec {
  bool node_ekf = true;
  bool cluster_fusvaf = true;
  ClusterForward forward = ClusterForward::aggregate;

  double ekf_q = 0.1;
  double ekf_r = 0.1;
  double ekf_p0 = 0.1;

  std::map<SensorKind, ChannelTuning> channels;

  fusvaf::FusionParams params{};
  fusvaf::AlphaRule alpha_rule = fusvaf::AlphaRule::previous_confidence;
  double alpha_floor = 0.01;
  PredictorKind predictor = PredictorKind::ekf;
  double predictor_q = 0.1;
  double predictor_r = 0.1;
  double predictor_p0 = 1.0;
  double smoothing_beta = 0.5;

  ConsensusPolicy consensus_policy = ConsensusPolicy::on_suspicion;
  SensorKind consensus_kind = SensorKind::pressure;
  std::size_t consensus_period = 0;  ///< windows between periodic queries
  std::vector<Tick> consensus_queries;
  double consensus_tol = 1e-6;
  std::size_t consensus_max_iter = 1000;

  const ChannelTuning& tuning(SensorKind kind) const;
  fusvaf::StreamConfig stream_config(SensorKind kind) const;
  std::unique_ptr<fusvaf::Predictor> make_predictor() const;
};

struct DetectionSpec {
  double leak_threshold = 20.0;
  std::size_t leak_persistence = 2;  ///< H
  std::size_t fault_persistence = 3;  ///< F
};

struct OpCosts {
  std::uint64_t ekf_step = 30;
  std::uint64_t fusion_per_reading = 40;
  std::uint64_t aggregate_per_value = 4;
  std::uint64_t consensus_per_edge = 4;
};

struct EnergySpec {
  std::uint64_t ops_per_bit = 1000;
  double energy_per_op = 1.0;
  OpCosts ops{};
};

struct ScenarioConfig {
  Tick horizon = 1000;
  std::uint64_t seed = 1;
  Tick window = 10;
  std::uint32_t sample_bits = 32;

  TopologySpec topology;
  std::map<SensorKind, SignalSpec> signals;
  std::vector<EventSpec> events;
  FusionSpec fusion;
  DetectionSpec detection;
  EnergySpec energy;

  const SignalSpec& signal(SensorKind kind) const;
  std::size_t window_count() const { return static_cast<std::size_t>((horizon + window - 1) / window); }
};

/// Every key the loader understands, with its default value.
const nlohmann::json& default_config_json();

/// Recursively merges `doc` over the defaults.
nlohmann::json with_defaults(const nlohmann::json& doc);

/// Applies `dotted.key=value`; the key must already exist. Values parse as
/// JSON when possible and fall back to plain strings.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Throws Error(config) naming every offending field.
ScenarioConfig parse_config(const nlohmann::json& doc);

nlohmann::json read_config_json(const std::filesystem::path& path);
ScenarioConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace pipefuse::sim
