#include "pipefuse/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pipefuse/consensus.hpp"
#include "pipefuse/core.hpp"
#include "pipefuse/ekf.hpp"
#include "pipefuse/error.hpp"
#include "pipefuse/fusvaf.hpp"
#include "pipefuse/sim/config.hpp"
#include "pipefuse/sim/output.hpp"
#include "pipefuse/sim/simulation.hpp"

namespace pipefuse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SimOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::vector<std::string> overrides;
  std::vector<std::string> params;
  bool quiet = false;
};

struct EkfOptions {
  std::string input;
  std::string kind = "pressure";
  double q = 0.1;
  double r = 0.1;
  std::optional<double> p0;
  std::optional<double> x0;
  std::string out = "out";
};

struct FusvafOptions {
  std::vector<std::string> inputs;
  std::string kind = "temperature";
  std::string alpha_rule = "previous_confidence";
  double alpha = 1.0;
  double alpha_floor = 0.01;
  double omega = 1.0;
  std::string predictor = "ekf";
  double predictor_q = 0.1;
  double predictor_r = 0.1;
  double predictor_p0 = 1.0;
  double beta = 0.5;
  double k_sigma = 3.0;
  double w_min = 0.1;
  double w_max = 100.0;
  std::size_t window = 10;
  double initial_half_width = 10.0;
  std::string out = "out";
};

struct ConsensusOptions {
  std::string graph;
  std::string values;
  double tol = 1e-12;
  std::size_t max_iter = 10000;
  std::string out = "out";
};

json load_effective_config(const SimOptions& o) {
  json doc = sim::with_defaults(sim::read_config_json(o.config));
  for (const auto& ov : o.overrides) sim::apply_override(doc, ov);
  if (o.seed) doc["simulation"]["seed"] = *o.seed;
  return doc;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + p.string());
  return out;
}

int cmd_validate(const SimOptions& o, std::ostream& out) {
  const sim::ScenarioConfig cfg = sim::parse_config(load_effective_config(o));
  if (!o.quiet) {
    out << "ok: " << cfg.topology.nodes.size() << " nodes, " << cfg.topology.clusters.size() << " clusters, "
        << cfg.events.size() << " events, horizon " << cfg.horizon << '\n';
  }
  return kExitOk;
}

int cmd_run(const SimOptions& o, std::ostream& out) {
  const sim::ScenarioConfig cfg = sim::parse_config(load_effective_config(o));
  const sim::RunResult run = sim::simulate(cfg);
  const auto files = sim::write_run_outputs(o.out, run);
  if (!o.quiet) {
    sim::write_summary(out, run, files);
  }
  return kExitOk;
}

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

SweepAxis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw Error(ErrorKind::config, "--param '" + spec + "' is not of the form key=v1,v2,...");
  }
  SweepAxis axis{spec.substr(0, eq), {}};
  std::stringstream ss(spec.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');) {
    if (v.empty()) throw Error(ErrorKind::config, "--param '" + spec + "' has an empty value");
    axis.values.push_back(v);
  }
  return axis;
}

int cmd_sweep(const SimOptions& o, std::ostream& out) {
  if (o.params.empty()) throw Error(ErrorKind::config, "sweep needs at least one --param key=v1,v2,...");
  std::vector<SweepAxis> axes;
  for (const auto& p : o.params) axes.push_back(parse_axis(p));
  const json base = load_effective_config(o);

  // Validate every combination before running any of them.
  std::vector<std::vector<std::string>> combos{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& c : combos) {
      for (const auto& v : axis.values) {
        auto e = c;
        e.push_back(v);
        next.push_back(std::move(e));
      }
    }
    combos = std::move(next);
  }
  std::vector<sim::ScenarioConfig> configs;
  std::vector<std::string> names;
  for (const auto& combo : combos) {
    json doc = base;
    std::string name;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      sim::apply_override(doc, axes[i].key + "=" + combo[i]);
      name += (i ? "__" : "") + axes[i].key + "=" + combo[i];
    }
    configs.push_back(sim::parse_config(doc));
    names.push_back(name);
  }

  ensure_dir(o.out);
  auto table = open_out(fs::path(o.out) / "sweep.csv");
  table << "run";
  for (const auto& a : axes) table << ',' << a.key;
  for (const auto& c : sim::metrics_columns()) table << ',' << c;
  table << '\n';
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const sim::RunResult run = sim::simulate(configs[i]);
    sim::write_run_outputs(fs::path(o.out) / names[i], run);
    table << names[i];
    for (const auto& v : combos[i]) table << ',' << v;
    for (const auto& v : sim::metrics_values(run.metrics, configs[i])) table << ',' << v;
    table << '\n';
    if (!o.quiet) out << names[i] << ": " << run.metrics.total.bits << " bits\n";
  }
  if (!o.quiet) out << combos.size() << " runs written to " << o.out << '\n';
  return kExitOk;
}

int cmd_ekf(const EkfOptions& o, std::ostream& out) {
  const SensorKind kind = parse_sensor_kind(o.kind);
  const Trace trace = load_trace(o.input, fs::path(o.input).stem().string(), kind);
  const auto model = ekf::ProcessModel::random_walk(o.q, o.r);
  const ekf::FilterState init{ekf::Vector::Constant(1, o.x0.value_or(trace.samples().front().value)),
                              ekf::Matrix::Constant(1, 1, o.p0.value_or(o.r)), 0};
  const auto steps = ekf::run_filter(model, init, trace);
  ensure_dir(o.out);
  const fs::path path = fs::path(o.out) / "ekf.csv";
  auto file = open_out(path);
  ekf::write_filter_csv(file, steps);
  out << "wrote " << steps.size() << " estimates to " << path.string() << '\n';
  return kExitOk;
}

int cmd_fusvaf(const FusvafOptions& o, std::ostream& out) {
  const SensorKind kind = parse_sensor_kind(o.kind);
  std::vector<Trace> traces;
  for (const auto& in : o.inputs) traces.push_back(load_trace(in, fs::path(in).stem().string(), kind));

  fusvaf::StreamConfig cfg;
  cfg.params = fusvaf::FusionParams{o.alpha, o.omega};
  if (o.alpha_rule == "constant") cfg.alpha_rule = fusvaf::AlphaRule::constant;
  else if (o.alpha_rule == "previous_confidence") cfg.alpha_rule = fusvaf::AlphaRule::previous_confidence;
  else throw Error(ErrorKind::config, "--alpha-rule must be 'constant' or 'previous_confidence'");
  cfg.alpha_floor = o.alpha_floor;
  cfg.adaptation = fusvaf::GateAdaptation{o.k_sigma, o.w_min, o.w_max, o.window};
  cfg.initial_half_width = o.initial_half_width;

  std::unique_ptr<fusvaf::Predictor> predictor;
  if (o.predictor == "ekf") predictor = std::make_unique<fusvaf::EkfPredictor>(o.predictor_q, o.predictor_r, o.predictor_p0);
  else if (o.predictor == "smoothing") predictor = std::make_unique<fusvaf::SmoothingPredictor>(o.beta);
  else throw Error(ErrorKind::config, "--predictor must be 'ekf' or 'smoothing'");

  const auto fused = fusvaf::fusvaf_stream(traces, cfg, *predictor);
  ensure_dir(o.out);
  const fs::path path = fs::path(o.out) / "fusvaf.csv";
  auto file = open_out(path);
  fusvaf::write_fusvaf_csv(file, fused, traces.size());
  out << "wrote " << fused.size() << " fused ticks to " << path.string() << '\n';
  return kExitOk;
}

int cmd_consensus(const ConsensusOptions& o, std::ostream& out) {
  std::ifstream in(o.graph);
  if (!in) throw Error(ErrorKind::io, "cannot open graph file " + o.graph);
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("n") || !doc.contains("edges")) {
    throw Error(ErrorKind::parse, o.graph + ": expected {\"n\": ..., \"edges\": [[i, j], ...]}");
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<double> values;
  std::size_t n = 0;
  try {
    n = doc.at("n").get<std::size_t>();
    for (const auto& e : doc.at("edges")) edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    if (doc.contains("values")) values = doc.at("values").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, o.graph + ": " + e.what());
  }
  if (!o.values.empty()) {
    values.clear();
    std::stringstream ss(o.values);
    for (std::string v; std::getline(ss, v, ',');) {
      try {
        values.push_back(std::stod(v));
      } catch (const std::exception&) {
        throw Error(ErrorKind::parse, "--values entry '" + v + "' is not a number");
      }
    }
  }
  const consensus::CommGraph graph(n, std::move(edges));
  if (values.size() != n) {
    throw Error(ErrorKind::parse, "expected " + std::to_string(n) + " initial values, got " + std::to_string(values.size()));
  }
  const consensus::ConsensusState init{Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(n)), 0};
  const auto result = consensus::run_consensus(init, graph, o.tol, o.max_iter);

  ensure_dir(o.out);
  const fs::path path = fs::path(o.out) / "consensus_mse.csv";
  {
    auto file = open_out(path);
    consensus::write_mse_csv(file, result);
  }
  auto final_file = open_out(fs::path(o.out) / "consensus_final.csv");
  final_file << "agent,estimate\n";
  for (Eigen::Index i = 0; i < result.estimates.size(); ++i) {
    final_file << i << ',' << format_number(result.estimates(i)) << '\n';
  }
  out << (result.converged ? "converged" : "did not converge") << " after " << result.iterations
      << " iterations; wrote " << path.string() << '\n';
  return kExitOk;
}

void add_sim_options(CLI::App* cmd, SimOptions& o, bool with_out) {
  cmd->add_option("--config", o.config, "Scenario configuration (JSON)")->required();
  cmd->add_option("--seed", o.seed, "Override simulation.seed");
  cmd->add_option("--override", o.overrides, "Set a configuration key: dotted.key=value (repeatable)");
  cmd->add_flag("--quiet", o.quiet, "Suppress the summary on stdout");
  if (with_out) cmd->add_option("--out", o.out, "Output directory");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sensor fusion toolkit and three-level pipeline-monitoring simulator", "pipefuse"};
  app.require_subcommand(1);

  SimOptions run_o, sweep_o, validate_o;
  EkfOptions ekf_o;
  FusvafOptions fus_o;
  ConsensusOptions con_o;

  auto* run_cmd = app.add_subcommand("run", "Run one scenario and write metrics and plot CSVs");
  add_sim_options(run_cmd, run_o, true);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a scenario over a parameter grid");
  add_sim_options(sweep_cmd, sweep_o, true);
  sweep_cmd->add_option("--param", sweep_o.params, "dotted.key=v1,v2,... (repeatable; cartesian product)")->required();

  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario configuration without running it");
  add_sim_options(validate_cmd, validate_o, false);

  auto* ekf_cmd = app.add_subcommand("ekf", "Filter one timestamp,value trace with a scalar random-walk EKF");
  ekf_cmd->add_option("--input", ekf_o.input, "Trace CSV")->required();
  ekf_cmd->add_option("--kind", ekf_o.kind, "Sensor kind of the trace");
  ekf_cmd->add_option("--q", ekf_o.q, "Process noise variance");
  ekf_cmd->add_option("--r", ekf_o.r, "Measurement noise variance");
  ekf_cmd->add_option("--p0", ekf_o.p0, "Initial variance (default r)");
  ekf_cmd->add_option("--x0", ekf_o.x0, "Initial estimate (default first reading)");
  ekf_cmd->add_option("--out", ekf_o.out, "Output directory");

  auto* fus_cmd = app.add_subcommand("fusvaf", "Fuse same-kind traces through the validation gate");
  fus_cmd->add_option("--input", fus_o.inputs, "Trace CSV, one per node (repeatable)")->required();
  fus_cmd->add_option("--kind", fus_o.kind, "Sensor kind of the traces");
  fus_cmd->add_option("--alpha-rule", fus_o.alpha_rule, "previous_confidence or constant");
  fus_cmd->add_option("--alpha", fus_o.alpha, "Prediction weight (initial value for the adaptive rule)");
  fus_cmd->add_option("--alpha-floor", fus_o.alpha_floor, "Lower bound of the adaptive alpha");
  fus_cmd->add_option("--omega", fus_o.omega, "Scaling of alpha");
  fus_cmd->add_option("--predictor", fus_o.predictor, "ekf or smoothing");
  fus_cmd->add_option("--predictor-q", fus_o.predictor_q, "EKF predictor process noise");
  fus_cmd->add_option("--predictor-r", fus_o.predictor_r, "EKF predictor measurement noise");
  fus_cmd->add_option("--predictor-p0", fus_o.predictor_p0, "EKF predictor initial variance");
  fus_cmd->add_option("--beta", fus_o.beta, "Smoothing predictor weight");
  fus_cmd->add_option("--k-sigma", fus_o.k_sigma, "Gate half-width per median residual");
  fus_cmd->add_option("--w-min", fus_o.w_min, "Minimum gate half-width");
  fus_cmd->add_option("--w-max", fus_o.w_max, "Maximum gate half-width");
  fus_cmd->add_option("--window", fus_o.window, "Residual window and warm-up length in ticks");
  fus_cmd->add_option("--initial-half-width", fus_o.initial_half_width, "Gate half-width during warm-up");
  fus_cmd->add_option("--out", fus_o.out, "Output directory");

  auto* con_cmd = app.add_subcommand("consensus", "Run average consensus on a graph file");
  con_cmd->add_option("--graph", con_o.graph, "Graph JSON {n, edges, values}")->required();
  con_cmd->add_option("--values", con_o.values, "Comma-separated initial values (overrides the file)");
  con_cmd->add_option("--tol", con_o.tol, "Stop once the MSE dispersion is below this");
  con_cmd->add_option("--max-iter", con_o.max_iter, "Iteration cap");
  con_cmd->add_option("--out", con_o.out, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run_o, out);
    if (*sweep_cmd) return cmd_sweep(sweep_o, out);
    if (*validate_cmd) return cmd_validate(validate_o, out);
    if (*ekf_cmd) return cmd_ekf(ekf_o, out);
    if (*fus_cmd) return cmd_fusvaf(fus_o, out);
    if (*con_cmd) return cmd_consensus(con_o, out);
  } catch (const Error& e) {
    err << "error[" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return e.kind() == ErrorKind::config ? kExitConfig : kExitRuntime;
  } catch (const std::invalid_argument& e) {
    err << "error[invalid-argument]: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error[runtime]: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace pipefuse::cli
