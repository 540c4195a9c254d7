#include "pipefuse/sim/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pipefuse/error.hpp"

namespace pipefuse::sim {

using nlohmann::json;

std::string_view to_string(EventKind kind) { return kind == EventKind::leak ? "leak" : "intrusion"; }

const ChannelTuning& FusionSpec::tuning(SensorKind kind) const {
  static const ChannelTuning fallback{};
  auto it = channels.find(kind);
  return it == channels.end() ? fallback : it->second;
}

fusvaf::StreamConfig FusionSpec::stream_config(SensorKind kind) const {
  const ChannelTuning& t = tuning(kind);
  fusvaf::StreamConfig c;
  c.params = params;
  c.alpha_rule = alpha_rule;
  c.alpha_floor = alpha_floor;
  c.adaptation = t.gate;
  c.initial_half_width = t.initial_half_width;
  return c;
}

std::unique_ptr<fusvaf::Predictor> FusionSpec::make_predictor() const {
  if (predictor == PredictorKind::smoothing) return std::make_unique<fusvaf::SmoothingPredictor>(smoothing_beta);
  return std::make_unique<fusvaf::EkfPredictor>(predictor_q, predictor_r, predictor_p0);
}

const SignalSpec& ScenarioConfig::signal(SensorKind kind) const {
  static const SignalSpec binary{};
  auto it = signals.find(kind);
  return it == signals.end() ? binary : it->second;
}

const json& default_config_json() {
  static const json defaults = json::parse(R"({
    "simulation": {"horizon": 1000, "seed": 1, "window": 10, "sample_bits": 32},
    "topology": {"gateway": "ncw", "nodes": [], "clusters": [], "uav": null},
    "signals": {
      "pressure":    {"baseline": 500.0, "drift": 0.0, "noise_std": 1.0},
      "temperature": {"baseline": 20.0,  "drift": 0.0, "noise_std": 0.2},
      "humidity":    {"baseline": 60.0,  "drift": 0.0, "noise_std": 1.0}
    },
    "events": [],
    "fusion": {
      "node_ekf": true,
      "cluster_fusvaf": true,
      "cluster_forward": "aggregate",
      "ekf": {"q": 0.1, "r": 0.1, "p0": 0.1},
      "channels": {
        "pressure":    {"report_delta": 3.0, "initial_half_width": 10.0,
                        "k_sigma": 3.0, "w_min": 0.1, "w_max": 100.0, "window": 10},
        "temperature": {"report_delta": 0.6, "initial_half_width": 10.0,
                        "k_sigma": 3.0, "w_min": 0.1, "w_max": 100.0, "window": 10},
        "humidity":    {"report_delta": 3.0, "initial_half_width": 10.0,
                        "k_sigma": 3.0, "w_min": 0.1, "w_max": 100.0, "window": 10}
      },
      "alpha": {"rule": "previous_confidence", "value": 1.0, "floor": 0.01},
      "omega": 1.0,
      "predictor": {"kind": "ekf", "q": 0.1, "r": 0.1, "p0": 1.0, "beta": 0.5},
      "consensus": {"policy": "on_suspicion", "kind": "pressure", "period": 0, "queries": [],
                    "tol": 1e-6, "max_iter": 1000}
    },
    "detection": {"leak_threshold": 20.0, "leak_persistence": 2, "fault_persistence": 3},
    "energy": {
      "ops_per_bit": 1000,
      "energy_per_op": 1.0,
      "ops": {"ekf_step": 30, "fusion_per_reading": 40, "aggregate_per_value": 4, "consensus_per_edge": 4}
    }
  })");
  return defaults;
}

json with_defaults(const json& doc) {
  json merged = default_config_json();
  merged.merge_patch(doc);
  return merged;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::config, "override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  std::string pointer;
  std::stringstream parts(key);
  for (std::string part; std::getline(parts, part, '.');) {
    if (part.empty()) throw Error(ErrorKind::config, "override key '" + key + "' has an empty component");
    pointer += '/' + part;
  }
  const json::json_pointer ptr(pointer);
  if (!doc.contains(ptr)) throw Error(ErrorKind::config, key + ": no such configuration key");

  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  doc[ptr] = std::move(value);
}

namespace {

// Collects every validation problem before failing, so one run reports all
// bad fields.
class Reader {
 public:
  void fail(const std::string& path, const std::string& message) { errors_.push_back(path + ": " + message); }

  const json* child(const json& obj, const std::string& path, const char* key) {
    if (!obj.is_object()) {
      fail(path, "expected an object");
      return nullptr;
    }
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      fail(join(path, key), "missing");
      return nullptr;
    }
    return &*it;
  }

  double number(const json& obj, const std::string& path, const char* key, double fallback) {
    const json* v = child(obj, path, key);
    if (!v) return fallback;
    if (!v->is_number()) {
      fail(join(path, key), "expected a number");
      return fallback;
    }
    const double d = v->get<double>();
    if (!std::isfinite(d)) fail(join(path, key), "must be finite");
    return d;
  }

  std::uint64_t count(const json& obj, const std::string& path, const char* key, std::uint64_t fallback) {
    const json* v = child(obj, path, key);
    if (!v) return fallback;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return v->get<std::uint64_t>();
    if (v->is_number_integer() || v->is_number_float()) {
      fail(join(path, key), "expected a non-negative integer");
    } else {
      fail(join(path, key), "expected an integer");
    }
    return fallback;
  }

  bool boolean(const json& obj, const std::string& path, const char* key, bool fallback) {
    const json* v = child(obj, path, key);
    if (!v) return fallback;
    if (!v->is_boolean()) {
      fail(join(path, key), "expected true or false");
      return fallback;
    }
    return v->get<bool>();
  }

  std::string string(const json& obj, const std::string& path, const char* key, const std::string& fallback) {
    const json* v = child(obj, path, key);
    if (!v) return fallback;
    if (!v->is_string()) {
      fail(join(path, key), "expected a string");
      return fallback;
    }
    return v->get<std::string>();
  }

  template <typename Enum>
  Enum choice(const json& obj, const std::string& path, const char* key,
              std::initializer_list<std::pair<const char*, Enum>> options, Enum fallback) {
    const json* v = child(obj, path, key);
    if (!v) return fallback;
    if (!v->is_string()) {
      fail(join(path, key), "expected a string");
      return fallback;
    }
    const std::string s = v->get<std::string>();
    std::string allowed;
    for (const auto& [name, value] : options) {
      if (s == name) return value;
      allowed += allowed.empty() ? name : std::string(", ") + name;
    }
    fail(join(path, key), "'" + s + "' is not one of: " + allowed);
    return fallback;
  }

  std::optional<SensorKind> kind(const std::string& name, const std::string& path) {
    for (SensorKind k : kAllSensorKinds) {
      if (to_string(k) == name) return k;
    }
    fail(path, "unknown sensor kind '" + name + "'");
    return std::nullopt;
  }

  static std::string join(const std::string& path, const char* key) {
    return path.empty() ? std::string(key) : path + "." + key;
  }
  static std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

void parse_topology(Reader& r, const json& doc, ScenarioConfig& cfg) {
  const json* topo = r.child(doc, "", "topology");
  if (!topo) return;
  TopologySpec& t = cfg.topology;
  t.gateway = r.string(*topo, "topology", "gateway", "ncw");

  if (const json* clusters = r.child(*topo, "topology", "clusters")) {
    if (!clusters->is_array()) r.fail("topology.clusters", "expected a list");
    else {
      for (std::size_t i = 0; i < clusters->size(); ++i) {
        const std::string p = Reader::index("topology.clusters", i);
        ClusterSpec c;
        c.id = r.string((*clusters)[i], p, "id", "");
        if (const auto it = (*clusters)[i].find("peers"); it != (*clusters)[i].end() && it->is_array()) {
          for (const auto& peer : *it) {
            if (peer.is_string()) c.peers.push_back(peer.get<std::string>());
            else r.fail(p + ".peers", "peer ids must be strings");
          }
        }
        t.clusters.push_back(std::move(c));
      }
    }
  }

  if (const json* nodes = r.child(*topo, "topology", "nodes")) {
    if (!nodes->is_array()) r.fail("topology.nodes", "expected a list");
    else {
      for (std::size_t i = 0; i < nodes->size(); ++i) {
        const std::string p = Reader::index("topology.nodes", i);
        const json& n = (*nodes)[i];
        NodeSpec node;
        node.id = r.string(n, p, "id", "");
        node.cluster = r.string(n, p, "cluster", "");
        node.position = r.number(n, p, "position", 0.0);
        if (const json* sensors = r.child(n, p, "sensors")) {
          if (!sensors->is_array() || sensors->empty()) r.fail(p + ".sensors", "expected a non-empty list");
          else {
            for (const auto& s : *sensors) {
              if (!s.is_string()) {
                r.fail(p + ".sensors", "sensor kinds must be strings");
              } else if (auto k = r.kind(s.get<std::string>(), p + ".sensors")) {
                if (std::find(node.sensors.begin(), node.sensors.end(), *k) != node.sensors.end()) {
                  r.fail(p + ".sensors", "duplicate sensor '" + s.get<std::string>() + "'");
                } else {
                  node.sensors.push_back(*k);
                }
              }
            }
          }
        }
        t.nodes.push_back(std::move(node));
      }
    }
  }

  const auto uav = topo->find("uav");
  if (uav != topo->end() && !uav->is_null()) {
    t.has_uav = true;
    if (const json* patrol = r.child(*uav, "topology.uav", "patrol")) {
      if (!patrol->is_array()) r.fail("topology.uav.patrol", "expected a list");
      else {
        for (std::size_t i = 0; i < patrol->size(); ++i) {
          const std::string p = Reader::index("topology.uav.patrol", i);
          PatrolLeg leg;
          leg.start = r.count((*patrol)[i], p, "start", 0);
          leg.end = r.count((*patrol)[i], p, "end", 0);
          leg.cluster = r.string((*patrol)[i], p, "cluster", "");
          t.patrol.push_back(std::move(leg));
        }
      }
    }
  }
}

void validate_topology(Reader& r, const ScenarioConfig& cfg) {
  const TopologySpec& t = cfg.topology;
  if (t.nodes.empty()) r.fail("topology.nodes", "at least one node is required");
  if (t.clusters.empty()) r.fail("topology.clusters", "at least one cluster is required");

  std::set<std::string> ids;
  std::set<std::string> cluster_ids;
  for (std::size_t i = 0; i < t.clusters.size(); ++i) {
    const auto& c = t.clusters[i];
    const std::string p = Reader::index("topology.clusters", i);
    if (c.id.empty()) r.fail(p + ".id", "must not be empty");
    else if (!cluster_ids.insert(c.id).second) r.fail(p + ".id", "duplicate cluster id '" + c.id + "'");
  }
  for (std::size_t i = 0; i < t.clusters.size(); ++i) {
    for (const auto& peer : t.clusters[i].peers) {
      if (!cluster_ids.count(peer)) {
        r.fail(Reader::index("topology.clusters", i) + ".peers", "unknown cluster '" + peer + "'");
      } else if (peer == t.clusters[i].id) {
        r.fail(Reader::index("topology.clusters", i) + ".peers", "a cluster cannot peer with itself");
      }
    }
  }

  std::map<std::string, std::size_t> members;
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    const std::string p = Reader::index("topology.nodes", i);
    if (n.id.empty()) r.fail(p + ".id", "must not be empty");
    else if (!ids.insert(n.id).second) r.fail(p + ".id", "duplicate node id '" + n.id + "'");
    if (!cluster_ids.count(n.cluster)) r.fail(p + ".cluster", "unknown cluster '" + n.cluster + "'");
    else ++members[n.cluster];
    if (n.position < 0.0) r.fail(p + ".position", "must be non-negative");
  }
  for (std::size_t i = 0; i < t.clusters.size(); ++i) {
    if (!members.count(t.clusters[i].id)) {
      r.fail(Reader::index("topology.clusters", i), "cluster '" + t.clusters[i].id + "' has no member nodes");
    }
  }

  // Peer graph must be connected for consensus to reach a common value.
  if (t.clusters.size() > 1 && cluster_ids.size() == t.clusters.size()) {
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& c : t.clusters) {
      for (const auto& p : c.peers) {
        adj[c.id].push_back(p);
        adj[p].push_back(c.id);
      }
    }
    std::set<std::string> seen{t.clusters.front().id};
    std::vector<std::string> stack{t.clusters.front().id};
    while (!stack.empty()) {
      const std::string u = stack.back();
      stack.pop_back();
      for (const auto& v : adj[u]) {
        if (seen.insert(v).second) stack.push_back(v);
      }
    }
    if (seen.size() != t.clusters.size()) r.fail("topology.clusters", "cluster-head peer graph is not connected");
  }

  for (std::size_t i = 0; i < t.patrol.size(); ++i) {
    const auto& leg = t.patrol[i];
    const std::string p = Reader::index("topology.uav.patrol", i);
    if (leg.end < leg.start) r.fail(p + ".end", "must not precede start");
    if (leg.end >= cfg.horizon) r.fail(p + ".end", "beyond simulation horizon (" + std::to_string(cfg.horizon) + ")");
    if (!cluster_ids.count(leg.cluster)) r.fail(p + ".cluster", "unknown cluster '" + leg.cluster + "'");
  }
}

}  // namespace

ScenarioConfig parse_config(const json& doc_in) {
  Reader r;
  ScenarioConfig cfg;
  if (!doc_in.is_object()) throw Error(ErrorKind::config, "configuration must be a JSON object");
  const json doc = with_defaults(doc_in);

  if (const json* s = r.child(doc, "", "simulation")) {
    cfg.horizon = r.count(*s, "simulation", "horizon", cfg.horizon);
    cfg.seed = r.count(*s, "simulation", "seed", cfg.seed);
    cfg.window = r.count(*s, "simulation", "window", cfg.window);
    cfg.sample_bits = static_cast<std::uint32_t>(r.count(*s, "simulation", "sample_bits", cfg.sample_bits));
    if (cfg.horizon == 0) r.fail("simulation.horizon", "must be positive");
    if (cfg.window == 0) r.fail("simulation.window", "must be positive");
    if (cfg.sample_bits == 0) r.fail("simulation.sample_bits", "must be at least 1");
  }

  parse_topology(r, doc, cfg);
  validate_topology(r, cfg);

  if (const json* sig = r.child(doc, "", "signals")) {
    for (SensorKind k : kAllSensorKinds) {
      if (is_binary(k)) continue;
      const std::string name(to_string(k));
      const std::string p = "signals." + name;
      if (const json* s = r.child(*sig, "signals", name.c_str())) {
        SignalSpec spec;
        spec.baseline = r.number(*s, p, "baseline", 0.0);
        spec.drift = r.number(*s, p, "drift", 0.0);
        spec.noise_std = r.number(*s, p, "noise_std", 0.0);
        if (spec.noise_std < 0.0) r.fail(p + ".noise_std", "must be non-negative");
        cfg.signals[k] = spec;
      }
    }
  }

  if (const json* events = r.child(doc, "", "events")) {
    if (!events->is_array()) r.fail("events", "expected a list");
    else {
      for (std::size_t i = 0; i < events->size(); ++i) {
        const std::string p = Reader::index("events", i);
        const json& e = (*events)[i];
        EventSpec ev;
        ev.kind = r.choice(e, p, "kind", {{"leak", EventKind::leak}, {"intrusion", EventKind::intrusion}},
                           EventKind::leak);
        ev.start = r.count(e, p, "start", 0);
        ev.end = r.count(e, p, "end", 0);
        ev.location = r.number(e, p, "location", 0.0);
        ev.magnitude = e.contains("magnitude") ? r.number(e, p, "magnitude", 0.0) : 0.0;
        ev.radius = e.contains("radius") ? r.number(e, p, "radius", 100.0) : 100.0;
        if (ev.end < ev.start) r.fail(p + ".end", "must not precede start");
        if (ev.start >= cfg.horizon) {
          r.fail(p + ".start", "event tick range exceeds simulation horizon (" + std::to_string(cfg.horizon) + ")");
        }
        if (ev.end >= cfg.horizon) {
          r.fail(p + ".end", "event tick range exceeds simulation horizon (" + std::to_string(cfg.horizon) + ")");
        }
        if (ev.location < 0.0) r.fail(p + ".location", "must be non-negative");
        if (ev.radius < 0.0) r.fail(p + ".radius", "must be non-negative");
        if (ev.kind == EventKind::leak && ev.magnitude < 0.0) r.fail(p + ".magnitude", "must be non-negative");
        cfg.events.push_back(ev);
      }
    }
  }

  if (const json* f = r.child(doc, "", "fusion")) {
    FusionSpec& fs = cfg.fusion;
    fs.node_ekf = r.boolean(*f, "fusion", "node_ekf", fs.node_ekf);
    fs.cluster_fusvaf = r.boolean(*f, "fusion", "cluster_fusvaf", fs.cluster_fusvaf);
    fs.forward = r.choice(*f, "fusion", "cluster_forward",
                          {{"aggregate", ClusterForward::aggregate}, {"raw", ClusterForward::raw}},
                          ClusterForward::aggregate);
    if (const json* e = r.child(*f, "fusion", "ekf")) {
      fs.ekf_q = r.number(*e, "fusion.ekf", "q", fs.ekf_q);
      fs.ekf_r = r.number(*e, "fusion.ekf", "r", fs.ekf_r);
      fs.ekf_p0 = r.number(*e, "fusion.ekf", "p0", fs.ekf_p0);
      if (fs.ekf_q < 0.0) r.fail("fusion.ekf.q", "must be non-negative");
      if (fs.ekf_r <= 0.0) r.fail("fusion.ekf.r", "must be positive");
      if (fs.ekf_p0 < 0.0) r.fail("fusion.ekf.p0", "must be non-negative");
    }
    if (const json* ch = r.child(*f, "fusion", "channels")) {
      for (SensorKind k : kAllSensorKinds) {
        if (is_binary(k)) continue;
        const std::string name(to_string(k));
        const std::string p = "fusion.channels." + name;
        if (const json* c = r.child(*ch, "fusion.channels", name.c_str())) {
          ChannelTuning t;
          t.report_delta = r.number(*c, p, "report_delta", 0.0);
          t.initial_half_width = r.number(*c, p, "initial_half_width", 10.0);
          t.gate.k_sigma = r.number(*c, p, "k_sigma", 3.0);
          t.gate.w_min = r.number(*c, p, "w_min", 0.1);
          t.gate.w_max = r.number(*c, p, "w_max", 100.0);
          t.gate.window = r.count(*c, p, "window", 10);
          if (t.report_delta < 0.0) r.fail(p + ".report_delta", "must be non-negative");
          if (t.initial_half_width <= 0.0) r.fail(p + ".initial_half_width", "must be positive");
          if (t.gate.k_sigma <= 0.0) r.fail(p + ".k_sigma", "must be positive");
          if (t.gate.w_min <= 0.0) r.fail(p + ".w_min", "must be positive");
          if (t.gate.w_max < t.gate.w_min) r.fail(p + ".w_max", "must be at least w_min");
          if (t.gate.window == 0) r.fail(p + ".window", "must be at least 1");
          fs.channels[k] = t;
        }
      }
    }
    if (const json* a = r.child(*f, "fusion", "alpha")) {
      fs.alpha_rule = r.choice(*a, "fusion.alpha", "rule",
                               {{"previous_confidence", fusvaf::AlphaRule::previous_confidence},
                                {"constant", fusvaf::AlphaRule::constant}},
                               fusvaf::AlphaRule::previous_confidence);
      fs.params.alpha = r.number(*a, "fusion.alpha", "value", 1.0);
      fs.alpha_floor = r.number(*a, "fusion.alpha", "floor", 0.01);
      if (fs.params.alpha < 0.0) r.fail("fusion.alpha.value", "must be non-negative");
      if (fs.alpha_floor < 0.0) r.fail("fusion.alpha.floor", "must be non-negative");
    }
    fs.params.omega = r.number(*f, "fusion", "omega", 1.0);
    if (fs.params.omega <= 0.0) r.fail("fusion.omega", "must be positive");
    if (const json* pr = r.child(*f, "fusion", "predictor")) {
      fs.predictor = r.choice(*pr, "fusion.predictor", "kind",
                              {{"ekf", PredictorKind::ekf}, {"smoothing", PredictorKind::smoothing}},
                              PredictorKind::ekf);
      fs.predictor_q = r.number(*pr, "fusion.predictor", "q", 0.1);
      fs.predictor_r = r.number(*pr, "fusion.predictor", "r", 0.1);
      fs.predictor_p0 = r.number(*pr, "fusion.predictor", "p0", 1.0);
      fs.smoothing_beta = r.number(*pr, "fusion.predictor", "beta", 0.5);
      if (fs.predictor_q < 0.0) r.fail("fusion.predictor.q", "must be non-negative");
      if (fs.predictor_r <= 0.0) r.fail("fusion.predictor.r", "must be positive");
      if (fs.predictor_p0 < 0.0) r.fail("fusion.predictor.p0", "must be non-negative");
      if (!(fs.smoothing_beta > 0.0 && fs.smoothing_beta <= 1.0)) r.fail("fusion.predictor.beta", "must be in (0, 1]");
    }
    if (const json* c = r.child(*f, "fusion", "consensus")) {
      fs.consensus_policy = r.choice(*c, "fusion.consensus", "policy",
                                     {{"never", ConsensusPolicy::never},
                                      {"on_suspicion", ConsensusPolicy::on_suspicion},
                                      {"periodic", ConsensusPolicy::periodic}},
                                     ConsensusPolicy::on_suspicion);
      const std::string kind = r.string(*c, "fusion.consensus", "kind", "pressure");
      if (auto k = r.kind(kind, "fusion.consensus.kind")) {
        if (is_binary(*k)) r.fail("fusion.consensus.kind", "consensus needs an analog channel");
        else fs.consensus_kind = *k;
      }
      fs.consensus_period = r.count(*c, "fusion.consensus", "period", 0);
      fs.consensus_tol = r.number(*c, "fusion.consensus", "tol", 1e-6);
      fs.consensus_max_iter = r.count(*c, "fusion.consensus", "max_iter", 1000);
      if (const json* q = r.child(*c, "fusion.consensus", "queries")) {
        if (!q->is_array()) r.fail("fusion.consensus.queries", "expected a list of ticks");
        else {
          for (std::size_t i = 0; i < q->size(); ++i) {
            if (!(*q)[i].is_number_integer() || (*q)[i].get<std::int64_t>() < 0) {
              r.fail(Reader::index("fusion.consensus.queries", i), "expected a tick");
            } else if ((*q)[i].get<Tick>() >= cfg.horizon) {
              r.fail(Reader::index("fusion.consensus.queries", i), "beyond simulation horizon");
            } else {
              fs.consensus_queries.push_back((*q)[i].get<Tick>());
            }
          }
        }
      }
      if (fs.consensus_tol <= 0.0) r.fail("fusion.consensus.tol", "must be positive");
      if (fs.consensus_max_iter == 0) r.fail("fusion.consensus.max_iter", "must be at least 1");
      if (fs.consensus_policy == ConsensusPolicy::periodic && fs.consensus_period == 0) {
        r.fail("fusion.consensus.period", "periodic policy needs a positive period");
      }
    }
  }

  if (const json* d = r.child(doc, "", "detection")) {
    cfg.detection.leak_threshold = r.number(*d, "detection", "leak_threshold", 20.0);
    cfg.detection.leak_persistence = r.count(*d, "detection", "leak_persistence", 2);
    cfg.detection.fault_persistence = r.count(*d, "detection", "fault_persistence", 3);
    if (cfg.detection.leak_threshold <= 0.0) r.fail("detection.leak_threshold", "must be positive");
    if (cfg.detection.leak_persistence == 0) r.fail("detection.leak_persistence", "must be at least 1");
    if (cfg.detection.fault_persistence == 0) r.fail("detection.fault_persistence", "must be at least 1");
  }

  if (const json* e = r.child(doc, "", "energy")) {
    cfg.energy.ops_per_bit = r.count(*e, "energy", "ops_per_bit", 1000);
    cfg.energy.energy_per_op = r.number(*e, "energy", "energy_per_op", 1.0);
    if (cfg.energy.ops_per_bit < 1000 || cfg.energy.ops_per_bit > 3000) {
      r.fail("energy.ops_per_bit", "must lie in [1000, 3000]");
    }
    if (cfg.energy.energy_per_op < 0.0) r.fail("energy.energy_per_op", "must be non-negative");
    if (const json* o = r.child(*e, "energy", "ops")) {
      cfg.energy.ops.ekf_step = r.count(*o, "energy.ops", "ekf_step", 30);
      cfg.energy.ops.fusion_per_reading = r.count(*o, "energy.ops", "fusion_per_reading", 40);
      cfg.energy.ops.aggregate_per_value = r.count(*o, "energy.ops", "aggregate_per_value", 4);
      cfg.energy.ops.consensus_per_edge = r.count(*o, "energy.ops", "consensus_per_edge", 4);
    }
  }

  if (!r.errors().empty()) {
    std::string msg = "invalid configuration";
    for (const auto& e : r.errors()) msg += "\n  " + e;
    throw Error(ErrorKind::config, msg);
  }
  return cfg;
}

json read_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open configuration file " + path.string());
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw Error(ErrorKind::config, path.string() + ": not valid JSON");
  return doc;
}

ScenarioConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json doc = with_defaults(read_config_json(path));
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_config(doc);
}

}  // namespace pipefuse::sim
