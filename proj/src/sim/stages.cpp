#include "pipefuse/sim/stages.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pipefuse/ekf.hpp"
#include "pipefuse/error.hpp"

namespace pipefuse::sim {

namespace {

Message make_message(std::string src, std::string dst, Tick tick, std::uint32_t bits, MessageKind kind,
                     Level level) {
  return Message{std::move(src), std::move(dst), tick, bits, kind, level};
}

}  // namespace

NodeStageResult node_stage(const Trace& trace, const std::string& destination, const ScenarioConfig& cfg) {
  NodeStageResult out;
  const auto samples = trace.samples();
  out.estimates.reserve(samples.size());
  const bool filter = cfg.fusion.node_ekf;

  auto send = [&](Tick tick, double value, MessageKind kind) {
    out.reports.push_back(Report{tick, value});
    out.messages.push_back(make_message(trace.node_id(), destination, tick, cfg.sample_bits, kind, Level::field));
  };

  if (!filter) {
    for (const Sample& s : samples) {
      out.estimates.push_back(s.value);
      send(s.tick, s.value, MessageKind::raw);
    }
    return out;
  }

  if (is_binary(trace.kind())) {
    for (const Sample& s : samples) {
      out.estimates.push_back(s.value);
      if (out.reports.empty() || s.value != out.reports.back().value) send(s.tick, s.value, MessageKind::raw);
    }
    return out;
  }

  const double delta = cfg.fusion.tuning(trace.kind()).report_delta;
  const auto model = ekf::ProcessModel::random_walk(cfg.fusion.ekf_q, cfg.fusion.ekf_r);
  const ekf::FilterState init{ekf::Vector::Constant(1, samples.front().value),
                              ekf::Matrix::Constant(1, 1, cfg.fusion.ekf_p0), 0};
  std::vector<ekf::FilterStep> steps;
  try {
    steps = ekf::run_filter(model, init, trace);
  } catch (const Error& e) {
    throw e.with_context("node " + trace.node_id() + " " + std::string(to_string(trace.kind())));
  }
  out.ops = cfg.energy.ops.ekf_step * steps.size();
  double last_sent = 0.0;
  for (const auto& step : steps) {
    const double estimate = step.posterior.x_hat(0);
    out.estimates.push_back(estimate);
    if (out.reports.empty() || std::abs(estimate - last_sent) > delta) {
      send(step.tick, estimate, MessageKind::fused);
      last_sent = estimate;
    }
  }
  return out;
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  if (values.empty()) return a;
  a.count = values.size();
  a.max = *std::max_element(values.begin(), values.end());
  a.min = *std::min_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  a.avg = sum / static_cast<double>(values.size());
  return a;
}

const ClusterChannel* ClusterStageResult::channel(SensorKind kind) const {
  for (const auto& c : channels) {
    if (c.kind == kind) return &c;
  }
  return nullptr;
}

ClusterStageResult cluster_stage(const std::string& cluster_id, std::span<const MemberStream> members,
                                 const ScenarioConfig& cfg) {
  if (members.empty()) throw Error(ErrorKind::empty_input, "cluster " + cluster_id + " has no member streams");
  ClusterStageResult out;
  out.cluster_id = cluster_id;
  const std::string head = cluster_head_id(cluster_id);
  const std::string& gateway = cfg.topology.gateway;
  const bool relay_raw = cfg.fusion.forward == ClusterForward::raw;
  const std::size_t n_windows = cfg.window_count();

  if (relay_raw) {
    for (const auto& m : members) {
      for (const auto& r : m.reports) {
        out.messages.push_back(make_message(head, gateway, r.tick, cfg.sample_bits, MessageKind::raw, Level::uplink));
      }
    }
  }

  for (SensorKind kind : kAllSensorKinds) {
    std::vector<const MemberStream*> group;
    for (const auto& m : members) {
      if (m.kind == kind) group.push_back(&m);
    }
    if (group.empty()) continue;

    ClusterChannel channel;
    channel.kind = kind;
    for (const auto* m : group) channel.members.push_back(m->node_id);

    const bool use_fusvaf = cfg.fusion.cluster_fusvaf && !is_binary(kind);
    std::optional<fusvaf::StreamFuser> fuser;
    if (use_fusvaf) fuser.emplace(group.size(), cfg.fusion.stream_config(kind), cfg.fusion.make_predictor());

    std::vector<std::size_t> cursor(group.size(), 0);
    std::vector<std::optional<double>> held(group.size());
    std::vector<std::size_t> rejected_run(group.size(), 0);

    for (std::size_t w = 0; w < n_windows; ++w) {
      ClusterWindow win;
      win.index = w;
      win.start = static_cast<Tick>(w) * cfg.window;
      win.end = std::min<Tick>(win.start + cfg.window, cfg.horizon) - 1;
      win.members.resize(group.size());

      std::vector<double> pool;
      std::vector<std::optional<double>> values(group.size());
      for (std::size_t i = 0; i < group.size(); ++i) {
        const auto& reports = group[i]->reports;
        double sum = 0.0;
        std::size_t n = 0;
        for (Tick t = win.start; t <= win.end; ++t) {
          while (cursor[i] < reports.size() && reports[cursor[i]].tick <= t) held[i] = reports[cursor[i]++].value;
          if (held[i]) {
            pool.push_back(*held[i]);
            sum += *held[i];
            ++n;
          }
        }
        if (n > 0) values[i] = sum / static_cast<double>(n);
      }
      win.agg = aggregate(pool);
      out.ops += cfg.energy.ops.aggregate_per_value * pool.size();

      const bool any = std::any_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
      if (any) {
        win.has_value = true;
        if (use_fusvaf) {
          try {
            const fusvaf::FusedTick ft = fuser->step(win.end, values);
            win.fused = ft.fused;
            win.prediction = ft.prediction;
            win.warmup = ft.warmup;
            win.members = ft.nodes;
          } catch (const Error& e) {
            throw e.with_context("cluster " + cluster_id + " " + std::string(to_string(kind)) + " window " +
                                 std::to_string(w));
          }
          for (const auto& v : values) {
            if (v) out.ops += cfg.energy.ops.fusion_per_reading;
          }
        } else {
          win.fused = is_binary(kind) ? win.agg.max : win.agg.avg;
          win.prediction = win.fused;
          for (std::size_t i = 0; i < group.size(); ++i) {
            if (values[i]) win.members[i] = fusvaf::NodeConfidence{true, *values[i], 1.0};
          }
        }

        // A window in which every present member is rejected says the
        // prediction is off, not that any one member is; it neither counts
        // towards nor resets the persistence run.
        const bool any_accepted = std::any_of(win.members.begin(), win.members.end(),
                                              [](const auto& m) { return m.present && m.sigma > 0.0; });
        if (use_fusvaf && any_accepted) {
          for (std::size_t i = 0; i < group.size(); ++i) {
            const auto& m = win.members[i];
            if (m.present && m.sigma == 0.0) {
              if (++rejected_run[i] == cfg.detection.fault_persistence) {
                out.suspected_faulty.push_back(FaultFlag{group[i]->node_id, kind, w, win.end});
              }
            } else if (m.present) {
              rejected_run[i] = 0;
            }
          }
        }

        if (!relay_raw) {
          const MessageKind mk = use_fusvaf ? MessageKind::fused : MessageKind::aggregated;
          out.messages.push_back(make_message(head, gateway, win.end, cfg.sample_bits, mk, Level::uplink));
        }
      }
      channel.windows.push_back(std::move(win));
    }
    out.channels.push_back(std::move(channel));
  }
  std::stable_sort(out.messages.begin(), out.messages.end(),
                   [](const Message& a, const Message& b) { return a.tick < b.tick; });
  return out;
}

consensus::CommGraph peer_graph(const ScenarioConfig& cfg) {
  const auto& clusters = cfg.topology.clusters;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < clusters.size(); ++i) index[clusters[i].id] = i;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    for (const auto& p : clusters[i].peers) edges.emplace_back(i, index.at(p));
  }
  return consensus::CommGraph(std::max<std::size_t>(clusters.size(), 1), std::move(edges));
}

std::optional<ConsensusQuery> consensus_stage(Tick tick, std::size_t window, const std::string& trigger,
                                              std::span<const std::string> cluster_ids,
                                              std::span<const double> estimates,
                                              const consensus::CommGraph& peers, const ScenarioConfig& cfg) {
  if (cluster_ids.size() < 2) return std::nullopt;
  if (estimates.size() != cluster_ids.size() || peers.size() != cluster_ids.size()) {
    throw std::invalid_argument("consensus_stage: estimates, cluster ids and graph disagree in size");
  }
  ConsensusQuery q;
  q.tick = tick;
  q.window = window;
  q.trigger = trigger;
  q.clusters.assign(cluster_ids.begin(), cluster_ids.end());
  q.initial.assign(estimates.begin(), estimates.end());

  consensus::ConsensusState init{Eigen::Map<const Eigen::VectorXd>(estimates.data(),
                                                                    static_cast<Eigen::Index>(estimates.size())),
                                 0};
  const auto result =
      consensus::run_consensus(init, peers, cfg.fusion.consensus_tol, cfg.fusion.consensus_max_iter);
  q.final_estimates.assign(result.estimates.data(), result.estimates.data() + result.estimates.size());
  q.agreed = result.estimates.mean();
  q.rounds = result.iterations;
  q.converged = result.converged;
  q.mse_history = result.mse_history;

  for (std::size_t round = 0; round < q.rounds; ++round) {
    for (auto [i, j] : peers.edges()) {
      const std::string a = cluster_head_id(cluster_ids[i]);
      const std::string b = cluster_head_id(cluster_ids[j]);
      q.messages.push_back(make_message(a, b, tick, cfg.sample_bits, MessageKind::consensus, Level::peer));
      q.messages.push_back(make_message(b, a, tick, cfg.sample_bits, MessageKind::consensus, Level::peer));
    }
  }
  return q;
}

std::vector<Detection> detect_events(std::span<const ClusterStageResult> clusters, const ScenarioConfig& cfg) {
  std::vector<Detection> out;
  const SignalSpec& pressure = cfg.signal(SensorKind::pressure);

  for (const auto& cluster : clusters) {
    if (const ClusterChannel* ch = cluster.channel(SensorKind::pressure)) {
      std::size_t run = 0;
      for (const auto& w : ch->windows) {
        const double mid = 0.5 * static_cast<double>(w.start + w.end);
        const double nominal = pressure.baseline + pressure.drift * mid;
        if (w.has_value && w.fused < nominal - cfg.detection.leak_threshold) {
          if (++run == cfg.detection.leak_persistence) {
            out.push_back(Detection{EventKind::leak, cluster.cluster_id, w.end, w.index, false, std::nullopt});
          }
        } else {
          run = 0;
        }
      }
    }

    const ClusterChannel* pir = cluster.channel(SensorKind::pir);
    const ClusterChannel* mag = cluster.channel(SensorKind::magnetic);
    const std::size_t n_windows = std::max(pir ? pir->windows.size() : 0, mag ? mag->windows.size() : 0);
    bool active = false;
    for (std::size_t i = 0; i < n_windows; ++i) {
      bool present = false;
      const ClusterWindow* ref = nullptr;
      for (const ClusterChannel* ch : {pir, mag}) {
        if (!ch || i >= ch->windows.size()) continue;
        ref = &ch->windows[i];
        if (ch->windows[i].has_value && ch->windows[i].agg.max == 1.0) present = true;
      }
      if (present && !active) {
        out.push_back(Detection{EventKind::intrusion, cluster.cluster_id, ref->end, ref->index, false, std::nullopt});
      }
      active = present;
    }
  }

  for (auto& d : out) {
    for (const auto& leg : cfg.topology.patrol) {
      if (leg.cluster != d.cluster_id || leg.end < d.tick) continue;
      const Tick visit = std::max(leg.start, d.tick);
      if (!d.validation_tick || visit < *d.validation_tick) d.validation_tick = visit;
    }
    d.validated = d.validation_tick.has_value();
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.tick < b.tick; });
  return out;
}

}  // namespace pipefuse::sim
