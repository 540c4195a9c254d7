#pragma once

#include <string>
#include <vector>

#include "pipefuse/core.hpp"
#include "pipefuse/sim/config.hpp"

namespace pipefuse::sim {

/// Ground truth and noisy observations for one sensor on one node, one
/// reading per tick over the horizon.
struct SensorStream {
  std::size_t node_index = 0;
  std::string node_id;
  std::string cluster_id;
  SensorKind kind = SensorKind::pressure;
  std::vector<double> truth;
  Trace observed;
};

struct World {
  std::vector<SensorStream> streams;

  const SensorStream* find(const std::string& node_id, SensorKind kind) const;
};

/// Pressure loss caused by a leak at `position` and tick `t`: a linear ramp
/// reaching the full magnitude at the last tick of the event, applied to
/// positions within the influence radius, zero outside the event window.
double leak_depression(const EventSpec& leak, double position, Tick t);

/// Index of the node carrying `kind` that lies nearest to `location`, or -1.
long nearest_node(const ScenarioConfig& cfg, double location, SensorKind kind);

/// Deterministic in (config, seed). Analog channels get Gaussian noise; pir
/// and magnetic channels are noiseless presence flags.
World generate_world(const ScenarioConfig& cfg);

}  // namespace pipefuse::sim
