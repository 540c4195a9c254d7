#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "pipefuse/error.hpp"
#include "pipefuse/sim/config.hpp"
#include "pipefuse/sim/output.hpp"
#include "pipefuse/sim/simulation.hpp"
#include "pipefuse/sim/stages.hpp"
#include "pipefuse/sim/world.hpp"

using namespace pipefuse;
using namespace pipefuse::sim;
using nlohmann::json;

namespace {

// Two clusters of two nodes; every node carries pressure and temperature, the
// first node of each cluster also carries pir and magnetic.
json small_scenario() {
  return json::parse(R"({
    "simulation": {"horizon": 200, "seed": 3, "window": 10},
    "topology": {
      "clusters": [{"id": "a", "peers": ["b"]}, {"id": "b"}],
      "nodes": [
        {"id": "a1", "cluster": "a", "position": 0,   "sensors": ["pressure", "temperature", "pir", "magnetic"]},
        {"id": "a2", "cluster": "a", "position": 100, "sensors": ["pressure", "temperature"]},
        {"id": "b1", "cluster": "b", "position": 500, "sensors": ["pressure", "temperature", "pir", "magnetic"]},
        {"id": "b2", "cluster": "b", "position": 600, "sensors": ["pressure", "temperature"]}
      ],
      "uav": {"patrol": [{"start": 100, "end": 149, "cluster": "b"}]}
    }
  })");
}

json quiet(json doc) {
  for (const char* k : {"pressure", "temperature", "humidity"}) doc["signals"][k]["noise_std"] = 0.0;
  return doc;
}

ScenarioConfig config(const json& doc) { return parse_config(doc); }

std::string config_error(const json& doc) {
  try {
    parse_config(doc);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    return e.what();
  }
  ADD_FAILURE() << "expected a config error";
  return {};
}

Trace constant_trace(double v, Tick n, SensorKind kind = SensorKind::pressure) {
  std::vector<Sample> s;
  for (Tick t = 0; t < n; ++t) s.push_back({t, v});
  return Trace("n", kind, s);
}

Trace noisy_trace(double level, double sd, Tick n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  std::vector<Sample> s;
  for (Tick t = 0; t < n; ++t) s.push_back({t, level + g(rng)});
  return Trace("n", SensorKind::pressure, s);
}

std::vector<Report> every_tick(double v, Tick n) {
  std::vector<Report> r;
  for (Tick t = 0; t < n; ++t) r.push_back({t, v});
  return r;
}

}  // namespace

TEST(Config, ParsesSmallScenarioWithDefaults) {
  const ScenarioConfig cfg = config(small_scenario());
  EXPECT_EQ(cfg.horizon, 200u);
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.window_count(), 20u);
  ASSERT_EQ(cfg.topology.nodes.size(), 4u);
  EXPECT_TRUE(cfg.topology.has_uav);
  EXPECT_EQ(cfg.detection.leak_persistence, 2u);
  EXPECT_EQ(cfg.detection.fault_persistence, 3u);
  EXPECT_EQ(cfg.energy.ops_per_bit, 1000u);
  EXPECT_DOUBLE_EQ(cfg.signal(SensorKind::pressure).baseline, 500.0);
  EXPECT_EQ(cfg.fusion.consensus_policy, ConsensusPolicy::on_suspicion);
}

TEST(Config, ReportsEveryOffendingField) {
  json doc = small_scenario();
  doc["events"] = json::parse(R"([{"kind": "leak", "start": 10, "end": 500, "location": 0, "magnitude": 40}])");
  doc["fusion"]["omega"] = -1.0;
  const std::string msg = config_error(doc);
  EXPECT_NE(msg.find("events[0].end"), std::string::npos) << msg;
  EXPECT_NE(msg.find("fusion.omega"), std::string::npos) << msg;
}

TEST(Config, OpsPerBitMustLieInBand) {
  json doc = small_scenario();
  doc["energy"]["ops_per_bit"] = 999;
  EXPECT_NE(config_error(doc).find("energy.ops_per_bit"), std::string::npos);
  doc["energy"]["ops_per_bit"] = 3000;
  EXPECT_NO_THROW(config(doc));
}

TEST(Config, DisconnectedPeersAndUnknownClustersAreRejected) {
  json doc = small_scenario();
  doc["topology"]["clusters"][0]["peers"] = json::array();
  EXPECT_NE(config_error(doc).find("not connected"), std::string::npos);
  doc = small_scenario();
  doc["topology"]["nodes"][0]["cluster"] = "zz";
  EXPECT_NE(config_error(doc).find("topology.nodes[0].cluster"), std::string::npos);
}

TEST(Config, OverridesMustNameExistingKeys) {
  json doc = with_defaults(small_scenario());
  apply_override(doc, "energy.ops_per_bit=2500");
  apply_override(doc, "fusion.alpha.rule=constant");
  const ScenarioConfig cfg = config(doc);
  EXPECT_EQ(cfg.energy.ops_per_bit, 2500u);
  EXPECT_EQ(cfg.fusion.alpha_rule, fusvaf::AlphaRule::constant);
  try {
    apply_override(doc, "energy.no_such_key=1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("energy.no_such_key"), std::string::npos);
  }
  EXPECT_THROW(apply_override(doc, "novalue"), Error);
}

TEST(World, CleanWorldIsFlatAndDeterministic) {
  const ScenarioConfig cfg = config(quiet(small_scenario()));
  const World w = generate_world(cfg);
  ASSERT_EQ(w.streams.size(), 12u);
  for (const auto& s : w.streams) {
    ASSERT_EQ(s.observed.size(), 200u);
    for (std::size_t i = 0; i < s.observed.size(); ++i) {
      EXPECT_EQ(s.observed.samples()[i].value, s.truth[i]);
      if (s.kind == SensorKind::pressure) EXPECT_EQ(s.truth[i], 500.0);
      if (is_binary(s.kind)) EXPECT_EQ(s.truth[i], 0.0);
    }
  }
  const ScenarioConfig noisy = config(small_scenario());
  const World a = generate_world(noisy);
  const World b = generate_world(noisy);
  for (std::size_t i = 0; i < a.streams.size(); ++i) EXPECT_EQ(a.streams[i].observed, b.streams[i].observed);
}

TEST(World, LeakRampReachesFullMagnitude) {
  json doc = quiet(small_scenario());
  doc["events"] = json::parse(R"([{"kind": "leak", "start": 50, "end": 149, "location": 50, "magnitude": 50,
                                    "radius": 100}])");
  const ScenarioConfig cfg = config(doc);
  const World w = generate_world(cfg);
  const SensorStream* a1 = w.find("a1", SensorKind::pressure);
  const SensorStream* b1 = w.find("b1", SensorKind::pressure);
  ASSERT_TRUE(a1 && b1);
  EXPECT_EQ(a1->truth[49], 500.0);
  EXPECT_DOUBLE_EQ(a1->truth[149], 450.0);
  EXPECT_DOUBLE_EQ(a1->truth[99], 500.0 - 50.0 * 50.0 / 100.0);
  EXPECT_EQ(a1->truth[150], 500.0);
  for (double v : b1->truth) EXPECT_EQ(v, 500.0);
  EXPECT_EQ(leak_depression(cfg.events[0], 151.0, 100), 0.0);
}

TEST(World, IntrusionLightsTheNearestBinaryNode) {
  json doc = quiet(small_scenario());
  doc["events"] = json::parse(R"([{"kind": "intrusion", "start": 20, "end": 29, "location": 520}])");
  const World w = generate_world(config(doc));
  const SensorStream* mag = w.find("b1", SensorKind::magnetic);
  const SensorStream* pir = w.find("a1", SensorKind::pir);
  ASSERT_TRUE(mag && pir);
  EXPECT_EQ(mag->truth[19], 0.0);
  EXPECT_EQ(mag->truth[20], 1.0);
  EXPECT_EQ(mag->truth[29], 1.0);
  EXPECT_EQ(mag->truth[30], 0.0);
  EXPECT_EQ(pir->truth[25], 0.0);
  EXPECT_EQ(w.find("b1", SensorKind::pir)->truth[25], 1.0);
}

TEST(NodeStage, ConstantTraceSendsOnce) {
  const ScenarioConfig cfg = config(small_scenario());
  const NodeStageResult r = node_stage(constant_trace(500.0, 300), "ch_a", cfg);
  ASSERT_EQ(r.messages.size(), 1u);
  EXPECT_EQ(r.messages[0].tick, 0u);
  EXPECT_EQ(r.messages[0].payload_bits, cfg.sample_bits);
  EXPECT_EQ(r.messages[0].level, Level::field);
  EXPECT_EQ(r.estimates.size(), 300u);
  EXPECT_EQ(r.ops, 300u * cfg.energy.ops.ekf_step);
}

TEST(NodeStage, FilterOffForwardsEveryReading) {
  json doc = small_scenario();
  doc["fusion"]["node_ekf"] = false;
  const NodeStageResult r = node_stage(noisy_trace(500.0, 1.0, 100, 1), "ch_a", config(doc));
  EXPECT_EQ(r.messages.size(), 100u);
  EXPECT_EQ(r.ops, 0u);
  for (const auto& m : r.messages) EXPECT_EQ(m.kind, MessageKind::raw);
}

TEST(NodeStage, FilteringSuppressesThresholdCrossings) {
  const double sd = 1.0;
  json doc = small_scenario();
  doc["fusion"]["ekf"] = {{"q", 0.1}, {"r", 0.1}, {"p0", 0.1}};
  doc["fusion"]["channels"]["pressure"]["report_delta"] = 3.0 * sd;
  const ScenarioConfig on = config(doc);
  doc["fusion"]["node_ekf"] = false;
  const ScenarioConfig off = config(doc);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Trace t = noisy_trace(500.0, sd, 1000, seed);
    EXPECT_LT(node_stage(t, "h", on).messages.size(), node_stage(t, "h", off).messages.size());
  }
}

TEST(NodeStage, LargerDeadbandNeverSendsMore) {
  const Trace t = noisy_trace(100.0, 2.0, 500, 17);
  json doc = small_scenario();
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (double delta : {0.0, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0, 5.0, 50.0}) {
    doc["fusion"]["channels"]["pressure"]["report_delta"] = delta;
    const std::size_t n = node_stage(t, "h", config(doc)).messages.size();
    EXPECT_LE(n, prev) << "delta " << delta;
    prev = n;
  }
}

TEST(NodeStage, BinaryChannelsReportOnChange) {
  const Trace t("n", SensorKind::pir, {{0, 0}, {1, 0}, {2, 1}, {3, 1}, {4, 0}, {5, 0}});
  const NodeStageResult r = node_stage(t, "h", config(small_scenario()));
  ASSERT_EQ(r.reports.size(), 3u);
  EXPECT_EQ(r.reports[0], (Report{0, 0.0}));
  EXPECT_EQ(r.reports[1], (Report{2, 1.0}));
  EXPECT_EQ(r.reports[2], (Report{4, 0.0}));
}

TEST(Aggregate, FourOperators) {
  const std::vector<double> v{1, 2, 3, 4};
  const Aggregate a = aggregate(v);
  EXPECT_EQ(a.count, 4u);
  EXPECT_EQ(a.avg, 2.5);
  EXPECT_EQ(a.max, 4.0);
  EXPECT_EQ(a.min, 1.0);
  EXPECT_EQ(aggregate(std::span<const double>{}), Aggregate{});
}

TEST(ClusterStage, SingleMemberTracksItsReports) {
  const ScenarioConfig cfg = config(small_scenario());
  const std::vector<MemberStream> members{{"a1", SensorKind::pressure, every_tick(500.0, cfg.horizon)}};
  const ClusterStageResult r = cluster_stage("a", members, cfg);
  const ClusterChannel* ch = r.channel(SensorKind::pressure);
  ASSERT_NE(ch, nullptr);
  ASSERT_EQ(ch->windows.size(), cfg.window_count());
  for (const auto& w : ch->windows) {
    EXPECT_TRUE(w.has_value);
    EXPECT_EQ(w.fused, 500.0);
    EXPECT_EQ(w.agg.count, 10u);
  }
  EXPECT_EQ(r.messages.size(), cfg.window_count());
  EXPECT_TRUE(r.suspected_faulty.empty());
}

TEST(ClusterStage, EmptyMemberListIsAnError) {
  EXPECT_THROW(cluster_stage("a", std::vector<MemberStream>{}, config(small_scenario())), Error);
}

TEST(ClusterStage, StuckMemberIsFlaggedAfterPersistenceWindows) {
  const ScenarioConfig cfg = config(small_scenario());
  std::vector<Report> stuck = every_tick(500.0, 100);
  for (Tick t = 100; t < cfg.horizon; ++t) stuck.push_back({t, 900.0});
  const std::vector<MemberStream> members{{"a1", SensorKind::pressure, every_tick(500.0, cfg.horizon)},
                                          {"a2", SensorKind::pressure, every_tick(500.0, cfg.horizon)},
                                          {"a3", SensorKind::pressure, stuck}};
  const ClusterStageResult r = cluster_stage("a", members, cfg);
  ASSERT_EQ(r.suspected_faulty.size(), 1u);
  EXPECT_EQ(r.suspected_faulty[0].node_id, "a3");
  EXPECT_EQ(r.suspected_faulty[0].window, 10u + cfg.detection.fault_persistence - 1);
  const ClusterChannel* ch = r.channel(SensorKind::pressure);
  for (std::size_t w = 10; w < ch->windows.size(); ++w) {
    EXPECT_EQ(ch->windows[w].members[2].sigma, 0.0);
    EXPECT_EQ(ch->windows[w].fused, 500.0);
  }
}

TEST(ClusterStage, FusedWindowsObeyTheConvexBound) {
  const ScenarioConfig cfg = config(small_scenario());
  const World world = generate_world(cfg);
  std::vector<MemberStream> members;
  for (const auto& s : world.streams) {
    if (s.cluster_id != "a") continue;
    members.push_back({s.node_id, s.kind, node_stage(s.observed, "h", cfg).reports});
  }
  const ClusterStageResult r = cluster_stage("a", members, cfg);
  std::size_t checked = 0;
  for (const auto& ch : r.channels) {
    if (is_binary(ch.kind)) continue;
    for (const auto& w : ch.windows) {
      if (!w.has_value) continue;
      double lo = w.prediction, hi = w.prediction;
      for (const auto& m : w.members) {
        if (!m.present) continue;
        lo = std::min(lo, m.z);
        hi = std::max(hi, m.z);
      }
      EXPECT_GE(w.fused, lo - 1e-9 * std::abs(lo));
      EXPECT_LE(w.fused, hi + 1e-9 * std::abs(hi));
      ++checked;
    }
  }
  EXPECT_EQ(checked, 2 * cfg.window_count());
}

TEST(ClusterStage, RawForwardRelaysEveryReport) {
  json doc = small_scenario();
  doc["fusion"]["cluster_forward"] = "raw";
  const ScenarioConfig cfg = config(doc);
  const std::vector<MemberStream> members{{"a1", SensorKind::pressure, every_tick(1.0, 37)},
                                          {"a2", SensorKind::pressure, every_tick(2.0, 12)}};
  EXPECT_EQ(cluster_stage("a", members, cfg).messages.size(), 49u);
}

TEST(ConsensusStage, CompleteThreeAgreesInOneRound) {
  const ScenarioConfig cfg = config(small_scenario());
  const std::vector<std::string> ids{"x", "y", "z"};
  const std::vector<double> est{1.0, 2.0, 3.0};
  const auto q = consensus_stage(50, 5, "query", ids, est, consensus::CommGraph::complete(3), cfg);
  ASSERT_TRUE(q.has_value());
  EXPECT_NEAR(q->agreed, 2.0, 1e-15);
  EXPECT_EQ(q->rounds, 1u);
  EXPECT_EQ(q->messages.size(), 6u);
  EXPECT_TRUE(q->converged);
}

TEST(ConsensusStage, SkippedForASingleCluster) {
  const std::vector<std::string> ids{"x"};
  const std::vector<double> est{1.0};
  EXPECT_FALSE(consensus_stage(0, 0, "query", ids, est, consensus::CommGraph(1, {}), config(small_scenario())));
}

TEST(ConsensusStage, IdenticalEstimatesNeedNoRounds) {
  const std::vector<std::string> ids{"x", "y"};
  const std::vector<double> est{4.0, 4.0};
  const auto q = consensus_stage(0, 0, "query", ids, est, consensus::CommGraph::path(2), config(small_scenario()));
  ASSERT_TRUE(q.has_value());
  EXPECT_EQ(q->rounds, 0u);
  EXPECT_TRUE(q->messages.empty());
  EXPECT_EQ(q->agreed, 4.0);
}

TEST(DetectEvents, CleanWorldHasNoDetections) {
  const RunResult run = simulate(config(quiet(small_scenario())));
  EXPECT_TRUE(run.detections.empty());
}

TEST(DetectEvents, LeakAtTwiceThresholdIsDetectedPromptly) {
  json doc = quiet(small_scenario());
  doc["events"] = json::parse(R"([{"kind": "leak", "start": 40, "end": 139, "location": 50, "magnitude": 40,
                                    "radius": 100}])");
  doc["fusion"]["cluster_fusvaf"] = false;
  const ScenarioConfig cfg = config(doc);
  const RunResult run = simulate(cfg);
  // Onset computed from the ramp definition: depression reaches the threshold.
  const double threshold = cfg.detection.leak_threshold;
  Tick onset = 40;
  while (40.0 * static_cast<double>(onset - 40 + 1) / 100.0 < threshold) ++onset;
  ASSERT_EQ(run.metrics.events.size(), 1u);
  const EventOutcome& e = run.metrics.events[0];
  EXPECT_EQ(e.onset, onset);
  ASSERT_TRUE(e.detected);
  EXPECT_EQ(e.cluster_id, "a");
  EXPECT_LE(e.detected_tick - onset, (cfg.detection.leak_persistence + 1) * cfg.window);
  EXPECT_EQ(run.metrics.false_positives, 0u);
}

TEST(DetectEvents, IntrusionValidatedOnlyWhenPatrolCovers) {
  json doc = quiet(small_scenario());
  doc["events"] = json::parse(R"([{"kind": "intrusion", "start": 120, "end": 125, "location": 520},
                                   {"kind": "intrusion", "start": 30, "end": 35, "location": 0}])");
  const RunResult run = simulate(config(doc));
  ASSERT_EQ(run.metrics.events.size(), 2u);
  EXPECT_TRUE(run.metrics.events[0].detected);
  EXPECT_EQ(run.metrics.events[0].cluster_id, "b");
  EXPECT_TRUE(run.metrics.events[0].validated);
  EXPECT_TRUE(run.metrics.events[1].detected);
  EXPECT_EQ(run.metrics.events[1].cluster_id, "a");
  EXPECT_FALSE(run.metrics.events[1].validated);
}

TEST(RunSimulation, QuietWorldIsExactAndMinimal) {
  const ScenarioConfig cfg = config(quiet(small_scenario()));
  const RunResult run = simulate(cfg);
  for (const auto& e : run.metrics.stream_errors) EXPECT_EQ(e.rmse, 0.0) << e.cluster_id;
  EXPECT_EQ(run.metrics.detections, 0u);
  EXPECT_EQ(run.metrics.consensus_queries, 0u);
  EXPECT_EQ(run.metrics.field.messages, run.world.streams.size());
  EXPECT_EQ(run.metrics.peer.messages, 0u);
}

TEST(RunSimulation, RadioEnergyScalesWithOpsPerBit) {
  json doc = with_defaults(small_scenario());
  doc["energy"]["ops_per_bit"] = 1000;
  const RunMetrics a = run_simulation(config(doc));
  doc["energy"]["ops_per_bit"] = 3000;
  const RunMetrics b = run_simulation(config(doc));
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(b.radio_energy / a.radio_energy, 3.0);
  EXPECT_EQ(a.compute_energy, b.compute_energy);
}

TEST(RunSimulation, IsDeterministic) {
  json doc = small_scenario();
  doc["events"] = json::parse(R"([{"kind": "leak", "start": 40, "end": 139, "location": 50, "magnitude": 40}])");
  const ScenarioConfig cfg = config(doc);
  std::ostringstream a, b;
  write_metrics_csv(a, run_simulation(cfg), cfg);
  write_metrics_csv(b, run_simulation(cfg), cfg);
  EXPECT_EQ(a.str(), b.str());
}

TEST(RunSimulation, EveryMessageIsDeliveredExactlyOnce) {
  json doc = small_scenario();
  doc["events"] = json::parse(R"([{"kind": "leak", "start": 40, "end": 139, "location": 50, "magnitude": 40}])");
  doc["fusion"]["consensus"]["queries"] = {60, 150};
  const RunResult run = simulate(config(doc));
  ASSERT_GT(run.metrics.peer.messages, 0u);
  std::size_t in = 0, out = 0;
  for (const auto& e : run.network.entities()) {
    for (const auto& m : run.network.outbox(e)) {
      EXPECT_EQ(m.src, e);
      const auto inbox = run.network.inbox(m.dst);
      EXPECT_EQ(std::count(run.network.log().begin(), run.network.log().end(), m),
                std::count(inbox.begin(), inbox.end(), m));
    }
    out += run.network.outbox(e).size();
    in += run.network.inbox(e).size();
  }
  EXPECT_EQ(in, run.network.log().size());
  EXPECT_EQ(out, run.network.log().size());
  EXPECT_EQ(run.metrics.total.messages, run.network.log().size());
}

TEST(RunSimulation, ConsensusQueriesAgreeOnTheMean) {
  json doc = small_scenario();
  doc["fusion"]["consensus"]["queries"] = {99};
  const RunResult run = simulate(config(doc));
  ASSERT_EQ(run.consensus.size(), 1u);
  const auto& q = run.consensus[0];
  EXPECT_NEAR(q.agreed, (q.initial[0] + q.initial[1]) / 2.0, 1e-9);
  EXPECT_EQ(q.messages.size(), 2 * q.rounds);
}

TEST(Output, MetricsCsvHasOneRowMatchingTheHeader) {
  const ScenarioConfig cfg = config(small_scenario());
  std::ostringstream out;
  write_metrics_csv(out, run_simulation(cfg), cfg);
  std::istringstream in(out.str());
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_FALSE(std::getline(in, extra));
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_EQ(header.substr(0, 13), "seed,horizon,");
}
