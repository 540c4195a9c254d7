#include "pipefuse/fusvaf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "pipefuse/error.hpp"

namespace pipefuse::fusvaf {

namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Normalised bell on one side of the gate. The numerator is factored as
// e^{-d^2} (1 - e^{-(D^2 - d^2)}) with D^2 - d^2 = (D - d)(D + d), which keeps
// full relative precision both for narrow gates and near the gate edges.
double bell(double x_hat, double z, double boundary, double a) {
  const double d = (x_hat - z) / a;
  const double D = (x_hat - boundary) / a;
  const double denom = -std::expm1(-D * D);
  if (denom <= 0.0) {
    const double ratio = (x_hat - z) / (x_hat - boundary);
    return 1.0 - ratio * ratio;
  }
  const double gap = ((z - boundary) / a) * ((2.0 * x_hat - z - boundary) / a);
  return std::exp(-d * d) * -std::expm1(-gap) / denom;
}

}  // namespace

ValidationGate::ValidationGate(double x_hat, double v_l, double v_r, double a_l, double a_r)
    : x_hat_(x_hat), v_l_(v_l), v_r_(v_r), a_l_(a_l), a_r_(a_r) {
  if (!std::isfinite(x_hat) || !std::isfinite(v_l) || !std::isfinite(v_r) || !std::isfinite(a_l) ||
      !std::isfinite(a_r)) {
    throw std::invalid_argument("validation gate parameters must be finite");
  }
  if (!(v_l < x_hat && x_hat < v_r)) throw std::invalid_argument("validation gate requires v_l < x_hat < v_r");
  if (!(a_l > 0.0 && a_r > 0.0)) throw std::invalid_argument("validation gate shape parameters must be positive");
}

ValidationGate ValidationGate::centered(double x_hat, double half_width) {
  return ValidationGate(x_hat, x_hat - half_width, x_hat + half_width, 0.5 * half_width, 0.5 * half_width);
}

void FusionParams::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be finite and >= 0");
  if (!(omega > 0.0) || !std::isfinite(omega)) throw std::invalid_argument("omega must be finite and > 0");
}

void GateAdaptation::validate() const {
  if (!(k_sigma > 0.0)) throw std::invalid_argument("k_sigma must be positive");
  if (!(w_min > 0.0) || !(w_max >= w_min) || !std::isfinite(w_max)) {
    throw std::invalid_argument("gate widths need 0 < w_min <= w_max < inf");
  }
  if (window == 0) throw std::invalid_argument("adaptation window must be at least one tick");
}

double confidence(const ValidationGate& gate, double z) {
  if (!(z > gate.v_l()) || !(z < gate.v_r())) return 0.0;  // also rejects NaN
  const double s = z <= gate.x_hat() ? bell(gate.x_hat(), z, gate.v_l(), gate.a_l())
                                     : bell(gate.x_hat(), z, gate.v_r(), gate.a_r());
  return std::clamp(s, 0.0, 1.0);
}

double fuse(const ValidationGate& gate, const FusionParams& params, std::span<const double> measurements) {
  params.validate();
  // Summation in sorted order makes the result independent of input order.
  std::vector<double> z(measurements.begin(), measurements.end());
  std::sort(z.begin(), z.end());

  const double prior_weight = params.alpha / params.omega;
  double num = prior_weight * gate.x_hat();
  double den = prior_weight;
  double lo = prior_weight > 0.0 ? gate.x_hat() : std::numeric_limits<double>::infinity();
  double hi = prior_weight > 0.0 ? gate.x_hat() : -std::numeric_limits<double>::infinity();
  for (double zi : z) {
    const double s = confidence(gate, zi);
    if (s <= 0.0) continue;
    num += s * zi;
    den += s;
    lo = std::min(lo, zi);
    hi = std::max(hi, zi);
  }
  if (!(den > 0.0)) {
    throw Error(ErrorKind::degenerate, "no valid measurement and alpha = 0: nothing to fuse");
  }
  return std::clamp(num / den, lo, hi);
}

ValidationGate adapt_gate(const ValidationGate& /*gate*/, std::span<const double> recent_residuals,
                          double new_prediction, const GateAdaptation& rule) {
  rule.validate();
  if (recent_residuals.empty()) throw std::invalid_argument("adapt_gate needs at least one residual");
  if (!std::isfinite(new_prediction)) throw std::invalid_argument("adapt_gate needs a finite prediction");
  std::vector<double> abs_res(recent_residuals.size());
  std::transform(recent_residuals.begin(), recent_residuals.end(), abs_res.begin(),
                 [](double r) { return std::abs(r); });
  const double w = std::clamp(rule.k_sigma * median_of(std::move(abs_res)), rule.w_min, rule.w_max);
  return ValidationGate::centered(new_prediction, w);
}

EkfPredictor::EkfPredictor(double q, double r, double p0)
    : model_(ekf::ProcessModel::random_walk(q, r)), p0_(p0) {
  if (!(p0 >= 0.0)) throw std::invalid_argument("EKF predictor p0 must be >= 0");
}

void EkfPredictor::reset(double initial_value) {
  state_ = ekf::FilterState{ekf::Vector::Constant(1, initial_value), ekf::Matrix::Constant(1, 1, p0_), 0};
  have_prior_ = false;
}

double EkfPredictor::predict() {
  prior_ = ekf::predict(state_, model_);
  have_prior_ = true;
  return prior_.x_hat(0);
}

void EkfPredictor::observe(double fused) {
  if (!have_prior_) predict();
  state_ = ekf::update(prior_, ekf::Vector::Constant(1, fused), model_);
  have_prior_ = false;
}

std::unique_ptr<Predictor> EkfPredictor::clone() const { return std::make_unique<EkfPredictor>(*this); }

SmoothingPredictor::SmoothingPredictor(double beta) : beta_(beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("smoothing beta must be in (0, 1]");
}

void SmoothingPredictor::reset(double initial_value) { level_ = initial_value; }

void SmoothingPredictor::observe(double fused) { level_ = beta_ * fused + (1.0 - beta_) * level_; }

std::unique_ptr<Predictor> SmoothingPredictor::clone() const {
  return std::make_unique<SmoothingPredictor>(*this);
}

StreamFuser::StreamFuser(std::size_t n_sources, StreamConfig config, std::unique_ptr<Predictor> predictor)
    : n_sources_(n_sources), config_(std::move(config)), predictor_(std::move(predictor)) {
  config_.params.validate();
  config_.adaptation.validate();
  if (!(config_.initial_half_width > 0.0)) throw std::invalid_argument("initial gate half-width must be positive");
  if (!(config_.alpha_floor >= 0.0)) throw std::invalid_argument("alpha floor must be >= 0");
  if (!predictor_) throw std::invalid_argument("stream fuser needs a predictor");
}

FusedTick StreamFuser::step(Tick tick, std::span<const std::optional<double>> values) {
  if (values.size() != n_sources_) throw std::invalid_argument("source count changed mid-stream");

  std::vector<double> present;
  for (const auto& v : values) {
    if (v) present.push_back(*v);
  }

  if (steps_ == 0) {
    if (present.empty()) throw Error(ErrorKind::empty_input, "first fusion step has no readings");
    predictor_->reset(median_of(present));
    last_confidence_sum_ = 0.0;
  }

  const double prediction = predictor_->predict();
  const bool warmup = steps_ < config_.adaptation.window;
  if (warmup || residuals_.empty()) {
    gate_ = ValidationGate::centered(prediction, config_.initial_half_width);
  } else {
    std::vector<double> window;
    for (const auto& r : residuals_) window.insert(window.end(), r.begin(), r.end());
    gate_ = adapt_gate(*gate_, window, prediction, config_.adaptation);
  }

  FusionParams params = config_.params;
  if (config_.alpha_rule == AlphaRule::previous_confidence && steps_ > 0) {
    params.alpha = std::max(last_confidence_sum_, config_.alpha_floor);
  }

  FusedTick out;
  out.tick = tick;
  out.prediction = prediction;
  out.alpha = params.alpha;
  out.half_width = gate_->right_width();
  out.warmup = warmup;
  out.nodes.resize(n_sources_);
  double sigma_sum = 0.0;
  for (std::size_t i = 0; i < n_sources_; ++i) {
    if (!values[i]) continue;
    const double s = confidence(*gate_, *values[i]);
    out.nodes[i] = NodeConfidence{true, *values[i], s};
    sigma_sum += s;
  }
  out.fused = fuse(*gate_, params, present);

  // Every source's residual over the last `window` ticks enters the median,
  // so a minority of faulty readings cannot widen the gate on its own.
  if (!present.empty()) {
    std::vector<double> res;
    res.reserve(present.size());
    for (double z : present) res.push_back(std::abs(z - out.fused));
    residuals_.push_back(std::move(res));
    while (residuals_.size() > config_.adaptation.window) residuals_.pop_front();
  }

  predictor_->observe(out.fused);
  last_confidence_sum_ = sigma_sum;
  ++steps_;
  return out;
}

std::vector<FusedTick> fusvaf_stream(std::span<const Trace> traces, const StreamConfig& config,
                                     const Predictor& predictor) {
  if (traces.empty()) throw Error(ErrorKind::empty_input, "fusvaf_stream needs at least one trace");
  const std::vector<TickSet> merged = merge_traces(traces);

  StreamFuser fuser(traces.size(), config, predictor.clone());
  std::vector<FusedTick> out;
  out.reserve(merged.size());
  // Readings in a TickSet follow trace order, so match them by cursor.
  std::vector<std::size_t> cursor(traces.size(), 0);
  std::vector<std::optional<double>> values(traces.size());
  for (const TickSet& ts : merged) {
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const auto samples = traces[i].samples();
      if (cursor[i] < samples.size() && samples[cursor[i]].tick == ts.tick) {
        values[i] = samples[cursor[i]++].value;
      } else {
        values[i].reset();
      }
    }
    try {
      out.push_back(fuser.step(ts.tick, values));
    } catch (const Error& e) {
      throw e.with_context("tick " + std::to_string(ts.tick));
    }
  }
  return out;
}

void write_fusvaf_csv(std::ostream& out, const std::vector<FusedTick>& ticks, std::size_t n_sources) {
  out << "tick,fused,pred";
  for (std::size_t i = 1; i <= n_sources; ++i) out << ",z_" << i << ",sigma_" << i;
  out << '\n';
  for (const FusedTick& t : ticks) {
    out << t.tick << ',' << format_number(t.fused) << ',' << format_number(t.prediction);
    for (std::size_t i = 0; i < n_sources; ++i) {
      if (i < t.nodes.size() && t.nodes[i].present) {
        out << ',' << format_number(t.nodes[i].z) << ',' << format_number(t.nodes[i].sigma);
      } else {
        out << ",,";
      }
    }
    out << '\n';
  }
}

}  // namespace pipefuse::fusvaf
