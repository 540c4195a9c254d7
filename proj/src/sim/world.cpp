#include "pipefuse/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pipefuse::sim {

const SensorStream* World::find(const std::string& node_id, SensorKind kind) const {
  for (const auto& s : streams) {
    if (s.node_id == node_id && s.kind == kind) return &s;
  }
  return nullptr;
}

double leak_depression(const EventSpec& leak, double position, Tick t) {
  if (leak.kind != EventKind::leak || t < leak.start || t > leak.end) return 0.0;
  if (std::abs(position - leak.location) > leak.radius) return 0.0;
  const double span = static_cast<double>(leak.end - leak.start + 1);
  return leak.magnitude * static_cast<double>(t - leak.start + 1) / span;
}

long nearest_node(const ScenarioConfig& cfg, double location, SensorKind kind) {
  long best = -1;
  double best_dist = 0.0;
  const auto& nodes = cfg.topology.nodes;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (std::find(nodes[i].sensors.begin(), nodes[i].sensors.end(), kind) == nodes[i].sensors.end()) continue;
    const double d = std::abs(nodes[i].position - location);
    if (best < 0 || d < best_dist) {
      best = static_cast<long>(i);
      best_dist = d;
    }
  }
  return best;
}

World generate_world(const ScenarioConfig& cfg) {
  World world;
  const auto& nodes = cfg.topology.nodes;

  // Intrusions light up the nearest pir/magnetic node.
  std::vector<std::vector<std::pair<Tick, Tick>>> presence(nodes.size() * 2);
  auto presence_slot = [](std::size_t node, SensorKind k) { return node * 2 + (k == SensorKind::pir ? 0 : 1); };
  for (const auto& ev : cfg.events) {
    if (ev.kind != EventKind::intrusion) continue;
    for (SensorKind k : {SensorKind::pir, SensorKind::magnetic}) {
      const long n = nearest_node(cfg, ev.location, k);
      if (n >= 0) presence[presence_slot(static_cast<std::size_t>(n), k)].emplace_back(ev.start, ev.end);
    }
  }

  for (std::size_t ni = 0; ni < nodes.size(); ++ni) {
    const NodeSpec& node = nodes[ni];
    for (SensorKind kind : node.sensors) {
      // Per-stream generator keyed on (seed, node index, kind) so streams do
      // not depend on each other's draw counts.
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                        static_cast<std::uint32_t>(ni), static_cast<std::uint32_t>(kind)};
      std::mt19937_64 rng(seq);

      std::vector<double> truth(cfg.horizon);
      std::vector<Sample> observed(cfg.horizon);
      if (is_binary(kind)) {
        const auto& windows = presence[presence_slot(ni, kind)];
        for (Tick t = 0; t < cfg.horizon; ++t) {
          const bool on = std::any_of(windows.begin(), windows.end(),
                                      [t](const auto& w) { return t >= w.first && t <= w.second; });
          truth[t] = on ? 1.0 : 0.0;
          observed[t] = Sample{t, truth[t]};
        }
      } else {
        const SignalSpec& sig = cfg.signal(kind);
        std::normal_distribution<double> noise(0.0, sig.noise_std > 0.0 ? sig.noise_std : 1.0);
        for (Tick t = 0; t < cfg.horizon; ++t) {
          double v = sig.baseline + sig.drift * static_cast<double>(t);
          if (kind == SensorKind::pressure) {
            for (const auto& ev : cfg.events) v -= leak_depression(ev, node.position, t);
          }
          truth[t] = v;
          observed[t] = Sample{t, sig.noise_std > 0.0 ? v + noise(rng) : v};
        }
      }
      world.streams.push_back(SensorStream{ni, node.id, node.cluster, kind, std::move(truth),
                                           Trace(node.id, kind, std::move(observed))});
    }
  }
  return world;
}

}  // namespace pipefuse::sim
