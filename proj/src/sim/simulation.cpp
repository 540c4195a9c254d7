#include "pipefuse/sim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "pipefuse/error.hpp"

namespace pipefuse::sim {

std::optional<double> RunMetrics::rmse(SensorKind kind) const {
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& e : stream_errors) {
    if (e.kind != kind) continue;
    sq += e.rmse * e.rmse * static_cast<double>(e.windows);
    n += e.windows;
  }
  if (n == 0) return std::nullopt;
  return std::sqrt(sq / static_cast<double>(n));
}

namespace {

struct Trigger {
  std::size_t window;
  Tick tick;
  std::string reason;
};

std::vector<Trigger> consensus_triggers(const ScenarioConfig& cfg, const std::vector<ClusterStageResult>& clusters) {
  std::vector<Trigger> triggers;
  const FusionSpec& fs = cfg.fusion;
  const std::size_t n_windows = cfg.window_count();

  switch (fs.consensus_policy) {
    case ConsensusPolicy::never:
      break;
    case ConsensusPolicy::periodic:
      for (std::size_t w = 0; w < n_windows; ++w) {
        if ((w + 1) % fs.consensus_period == 0) {
          triggers.push_back(Trigger{w, std::min<Tick>((w + 1) * cfg.window, cfg.horizon) - 1, "periodic"});
        }
      }
      break;
    case ConsensusPolicy::on_suspicion: {
      const SignalSpec& p = cfg.signal(SensorKind::pressure);
      bool previous = false;
      for (std::size_t w = 0; w < n_windows; ++w) {
        bool suspicious = false;
        Tick end = 0;
        for (const auto& c : clusters) {
          const ClusterChannel* ch = c.channel(SensorKind::pressure);
          if (!ch || w >= ch->windows.size()) continue;
          const auto& win = ch->windows[w];
          end = win.end;
          const double nominal = p.baseline + p.drift * 0.5 * static_cast<double>(win.start + win.end);
          if (win.has_value && win.fused < nominal - cfg.detection.leak_threshold) suspicious = true;
        }
        if (suspicious && !previous) triggers.push_back(Trigger{w, end, "suspicion"});
        previous = suspicious;
      }
      break;
    }
  }
  for (Tick t : fs.consensus_queries) triggers.push_back(Trigger{static_cast<std::size_t>(t / cfg.window), t, "query"});
  std::stable_sort(triggers.begin(), triggers.end(),
                   [](const Trigger& a, const Trigger& b) { return a.tick < b.tick; });
  return triggers;
}

Tick leak_onset(const EventSpec& ev, double threshold) {
  for (Tick t = ev.start; t <= ev.end; ++t) {
    if (leak_depression(ev, ev.location, t) >= threshold) return t;
  }
  return ev.end;
}

std::set<std::string> affected_clusters(const ScenarioConfig& cfg, const EventSpec& ev) {
  std::set<std::string> out;
  const auto& nodes = cfg.topology.nodes;
  if (ev.kind == EventKind::leak) {
    for (const auto& n : nodes) {
      const bool has_pressure =
          std::find(n.sensors.begin(), n.sensors.end(), SensorKind::pressure) != n.sensors.end();
      if (has_pressure && std::abs(n.position - ev.location) <= ev.radius) out.insert(n.cluster);
    }
  } else {
    for (SensorKind k : {SensorKind::pir, SensorKind::magnetic}) {
      const long i = nearest_node(cfg, ev.location, k);
      if (i >= 0) out.insert(nodes[static_cast<std::size_t>(i)].cluster);
    }
  }
  return out;
}

}  // namespace

RunResult simulate(const ScenarioConfig& cfg) {
  RunResult run;
  run.config = cfg;
  run.world = generate_world(cfg);
  std::uint64_t ops = 0;

  for (const auto& stream : run.world.streams) {
    run.node_results.push_back(node_stage(stream.observed, cluster_head_id(stream.cluster_id), cfg));
    run.network.send_all(run.node_results.back().messages);
    ops += run.node_results.back().ops;
  }

  for (const auto& cluster : cfg.topology.clusters) {
    std::vector<MemberStream> members;
    for (std::size_t i = 0; i < run.world.streams.size(); ++i) {
      const auto& s = run.world.streams[i];
      if (s.cluster_id == cluster.id) members.push_back(MemberStream{s.node_id, s.kind, run.node_results[i].reports});
    }
    run.clusters.push_back(cluster_stage(cluster.id, members, cfg));
    run.network.send_all(run.clusters.back().messages);
    ops += run.clusters.back().ops;
  }

  if (cfg.topology.clusters.size() >= 2) {
    const consensus::CommGraph graph = peer_graph(cfg);
    std::vector<std::string> ids;
    for (const auto& c : cfg.topology.clusters) ids.push_back(c.id);

    for (const Trigger& trig : consensus_triggers(cfg, run.clusters)) {
      // Latest fused value of the shared quantity at or before the trigger window.
      std::vector<double> estimates;
      for (const auto& c : run.clusters) {
        const ClusterChannel* ch = c.channel(cfg.fusion.consensus_kind);
        if (!ch) break;
        std::optional<double> latest;
        for (std::size_t w = 0; w <= trig.window && w < ch->windows.size(); ++w) {
          if (ch->windows[w].has_value) latest = ch->windows[w].fused;
        }
        if (!latest) break;
        estimates.push_back(*latest);
      }
      if (estimates.size() != ids.size()) continue;

      auto q = consensus_stage(trig.tick, trig.window, trig.reason, ids, estimates, graph, cfg);
      if (!q) continue;
      run.network.send_all(q->messages);
      ops += cfg.energy.ops.consensus_per_edge * 2 * graph.edges().size() * q->rounds;
      run.consensus.push_back(std::move(*q));
    }
  }

  run.detections = detect_events(run.clusters, cfg);
  for (const auto& d : run.detections) {
    run.network.send(Message{cluster_head_id(d.cluster_id), cfg.topology.gateway, d.tick, cfg.sample_bits,
                             MessageKind::alert, Level::uplink});
  }

  RunMetrics& m = run.metrics;
  m.seed = cfg.seed;
  m.horizon = cfg.horizon;
  m.field = run.network.traffic(Level::field);
  m.uplink = run.network.traffic(Level::uplink);
  m.peer = run.network.traffic(Level::peer);
  m.total = run.network.total();
  m.compute_ops = ops;
  m.radio_energy = static_cast<double>(m.total.bits * cfg.energy.ops_per_bit) * cfg.energy.energy_per_op;
  m.compute_energy = static_cast<double>(ops) * cfg.energy.energy_per_op;

  for (const auto& c : run.clusters) {
    for (const auto& ch : c.channels) {
      if (is_binary(ch.kind)) continue;
      std::vector<const SensorStream*> truth;
      for (const auto& id : ch.members) truth.push_back(run.world.find(id, ch.kind));
      double sq = 0.0;
      std::size_t n = 0;
      for (const auto& w : ch.windows) {
        if (!w.has_value) continue;
        double ref = 0.0;
        std::size_t cnt = 0;
        for (const auto* s : truth) {
          for (Tick t = w.start; t <= w.end; ++t) {
            ref += s->truth[t];
            ++cnt;
          }
        }
        ref /= static_cast<double>(cnt);
        sq += (w.fused - ref) * (w.fused - ref);
        ++n;
      }
      m.stream_errors.push_back(StreamError{c.cluster_id, ch.kind, n, n ? std::sqrt(sq / static_cast<double>(n)) : 0.0});
    }
  }

  std::vector<bool> matched(run.detections.size(), false);
  const Tick grace = (cfg.detection.leak_persistence + 1) * cfg.window;
  for (std::size_t e = 0; e < cfg.events.size(); ++e) {
    const EventSpec& ev = cfg.events[e];
    EventOutcome o;
    o.event_index = e;
    o.kind = ev.kind;
    o.onset = ev.kind == EventKind::leak ? leak_onset(ev, cfg.detection.leak_threshold) : ev.start;
    const auto clusters = affected_clusters(cfg, ev);
    for (std::size_t d = 0; d < run.detections.size(); ++d) {
      const Detection& det = run.detections[d];
      if (det.kind != ev.kind || !clusters.count(det.cluster_id)) continue;
      if (det.tick < ev.start || det.tick > ev.end + grace) continue;
      matched[d] = true;
      // One UAV confirmation of any detection validates the event.
      o.validated = o.validated || det.validated;
      if (!o.detected || det.tick < o.detected_tick) {
        o.detected = true;
        o.detected_tick = det.tick;
        o.cluster_id = det.cluster_id;
      }
    }
    if (o.detected) o.latency = o.detected_tick >= o.onset ? o.detected_tick - o.onset : 0;
    m.events.push_back(std::move(o));
  }
  m.detections = run.detections.size();
  m.false_positives = static_cast<std::size_t>(std::count(matched.begin(), matched.end(), false));
  for (const auto& c : run.clusters) m.suspected_faulty += c.suspected_faulty.size();
  m.consensus_queries = run.consensus.size();
  m.consensus_unconverged =
      static_cast<std::size_t>(std::count_if(run.consensus.begin(), run.consensus.end(),
                                             [](const ConsensusQuery& q) { return !q.converged; }));
  return run;
}

}  // namespace pipefuse::sim
