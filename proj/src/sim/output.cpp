#include "pipefuse/sim/output.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "pipefuse/error.hpp"

namespace pipefuse::sim {

namespace {

void write_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
  out << '\n';
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<std::string> metrics_columns() {
  return {"seed",           "horizon",         "nodes",           "clusters",          "field_messages",
          "field_bits",     "uplink_messages", "uplink_bits",     "peer_messages",     "peer_bits",
          "total_messages", "total_bits",      "compute_ops",     "ops_per_bit",       "radio_energy",
          "compute_energy", "rmse_pressure",   "rmse_temperature", "rmse_humidity",    "events",
          "detected_events", "mean_latency",   "max_latency",     "detections",        "false_positives",
          "validated_detections", "suspected_faulty", "consensus_queries", "consensus_unconverged"};
}

std::vector<std::string> metrics_values(const RunMetrics& m, const ScenarioConfig& cfg) {
  auto opt = [](std::optional<double> v) { return v ? format_number(*v) : std::string(); };
  std::size_t detected = 0;
  std::size_t validated = 0;
  Tick latency_sum = 0;
  Tick latency_max = 0;
  for (const auto& e : m.events) {
    if (!e.detected) continue;
    ++detected;
    if (e.validated) ++validated;
    latency_sum += e.latency;
    latency_max = std::max(latency_max, e.latency);
  }
  const std::string mean_latency =
      detected ? format_number(static_cast<double>(latency_sum) / static_cast<double>(detected)) : std::string();
  return {std::to_string(m.seed),
          std::to_string(m.horizon),
          std::to_string(cfg.topology.nodes.size()),
          std::to_string(cfg.topology.clusters.size()),
          std::to_string(m.field.messages),
          std::to_string(m.field.bits),
          std::to_string(m.uplink.messages),
          std::to_string(m.uplink.bits),
          std::to_string(m.peer.messages),
          std::to_string(m.peer.bits),
          std::to_string(m.total.messages),
          std::to_string(m.total.bits),
          std::to_string(m.compute_ops),
          std::to_string(cfg.energy.ops_per_bit),
          format_number(m.radio_energy),
          format_number(m.compute_energy),
          opt(m.rmse(SensorKind::pressure)),
          opt(m.rmse(SensorKind::temperature)),
          opt(m.rmse(SensorKind::humidity)),
          std::to_string(m.events.size()),
          std::to_string(detected),
          mean_latency,
          detected ? std::to_string(latency_max) : std::string(),
          std::to_string(m.detections),
          std::to_string(m.false_positives),
          std::to_string(validated),
          std::to_string(m.suspected_faulty),
          std::to_string(m.consensus_queries),
          std::to_string(m.consensus_unconverged)};
}

void write_metrics_csv(std::ostream& out, const RunMetrics& m, const ScenarioConfig& cfg) {
  write_row(out, metrics_columns());
  write_row(out, metrics_values(m, cfg));
}

void write_stream_csv(std::ostream& out, const RunResult& run, const ClusterChannel& channel) {
  out << "window,start,end,estimate,truth,count,avg,max,min,warmup\n";
  std::vector<const SensorStream*> truth;
  for (const auto& id : channel.members) truth.push_back(run.world.find(id, channel.kind));
  for (const auto& w : channel.windows) {
    double ref = 0.0;
    std::size_t n = 0;
    for (const auto* s : truth) {
      for (Tick t = w.start; t <= w.end; ++t, ++n) ref += s->truth[t];
    }
    out << w.index << ',' << w.start << ',' << w.end << ',' << (w.has_value ? format_number(w.fused) : "") << ','
        << format_number(n ? ref / static_cast<double>(n) : 0.0) << ',' << w.agg.count << ','
        << format_number(w.agg.avg) << ',' << format_number(w.agg.max) << ',' << format_number(w.agg.min) << ','
        << (w.warmup ? 1 : 0) << '\n';
  }
}

void write_consensus_csv(std::ostream& out, const std::vector<ConsensusQuery>& queries) {
  out << "query,tick,trigger,iteration,mse\n";
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t k = 0; k < queries[q].mse_history.size(); ++k) {
      out << q << ',' << queries[q].tick << ',' << queries[q].trigger << ',' << k << ','
          << format_number(queries[q].mse_history[k]) << '\n';
    }
  }
}

void write_detections_csv(std::ostream& out, const std::vector<Detection>& detections) {
  out << "kind,cluster,tick,window,validated,validation_tick\n";
  for (const auto& d : detections) {
    out << to_string(d.kind) << ',' << d.cluster_id << ',' << d.tick << ',' << d.window << ','
        << (d.validated ? 1 : 0) << ',' << (d.validation_tick ? std::to_string(*d.validation_tick) : "") << '\n';
  }
}

void write_summary(std::ostream& out, const RunResult& run, const std::vector<std::filesystem::path>& files) {
  const RunMetrics& m = run.metrics;
  const ScenarioConfig& cfg = run.config;
  out << "pipefuse run summary\n";
  out << "  seed " << m.seed << ", horizon " << m.horizon << " ticks, " << cfg.topology.nodes.size() << " nodes in "
      << cfg.topology.clusters.size() << " clusters\n";
  out << "  placement: node EKF " << (cfg.fusion.node_ekf ? "on" : "off") << ", cluster FUSVAF "
      << (cfg.fusion.cluster_fusvaf ? "on" : "off") << ", cluster forwarding "
      << (cfg.fusion.forward == ClusterForward::raw ? "raw" : "aggregate") << '\n';
  out << "traffic\n";
  out << "  field  " << m.field.messages << " messages, " << m.field.bits << " bits\n";
  out << "  uplink " << m.uplink.messages << " messages, " << m.uplink.bits << " bits\n";
  out << "  peer   " << m.peer.messages << " messages, " << m.peer.bits << " bits\n";
  out << "  total  " << m.total.messages << " messages, " << m.total.bits << " bits\n";
  out << "energy (ops_per_bit " << cfg.energy.ops_per_bit << ")\n";
  out << "  radio   " << format_number(m.radio_energy) << '\n';
  out << "  compute " << format_number(m.compute_energy) << " (" << m.compute_ops << " ops)\n";
  out << "estimation RMSE\n";
  for (const auto& e : m.stream_errors) {
    out << "  " << e.cluster_id << '/' << to_string(e.kind) << ": " << format_number(e.rmse) << " over " << e.windows
        << " windows\n";
  }
  out << "events\n";
  for (const auto& e : m.events) {
    out << "  #" << e.event_index << ' ' << to_string(e.kind) << ": ";
    if (e.detected) {
      out << "detected at tick " << e.detected_tick << " in " << e.cluster_id << ", latency " << e.latency
          << " ticks" << (e.validated ? ", UAV-validated" : "") << '\n';
    } else {
      out << "missed\n";
    }
  }
  out << "  " << m.detections << " detections, " << m.false_positives << " false positives, " << m.suspected_faulty
      << " suspected-faulty flags\n";
  out << "consensus: " << m.consensus_queries << " queries, " << m.consensus_unconverged << " unconverged\n";
  out << "files\n";
  for (const auto& f : files) out << "  " << f.filename().string() << '\n';
}

std::vector<std::filesystem::path> write_run_outputs(const std::filesystem::path& dir, const RunResult& run) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output directory " + dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> files;
  {
    const auto p = dir / "metrics.csv";
    auto out = open_for_write(p);
    write_metrics_csv(out, run.metrics, run.config);
    files.push_back(p);
  }
  for (const auto& c : run.clusters) {
    for (const auto& ch : c.channels) {
      if (is_binary(ch.kind)) continue;
      const auto p = dir / ("estimates_" + c.cluster_id + "_" + std::string(to_string(ch.kind)) + ".csv");
      auto out = open_for_write(p);
      write_stream_csv(out, run, ch);
      files.push_back(p);
    }
  }
  {
    const auto p = dir / "consensus_mse.csv";
    auto out = open_for_write(p);
    write_consensus_csv(out, run.consensus);
    files.push_back(p);
  }
  {
    const auto p = dir / "detections.csv";
    auto out = open_for_write(p);
    write_detections_csv(out, run.detections);
    files.push_back(p);
  }
  const auto summary = dir / "summary.txt";
  files.push_back(summary);
  auto out = open_for_write(summary);
  write_summary(out, run, files);
  return files;
}

}  // namespace pipefuse::sim
