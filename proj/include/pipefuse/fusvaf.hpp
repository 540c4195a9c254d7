#pragma once

#include <deque>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pipefuse/core.hpp"
#include "pipefuse/ekf.hpp"

namespace pipefuse::fusvaf {

/// Piece-wise bell validation gate centred on the prediction.
/// Invariants: v_l < x_hat < v_r, a_l > 0, a_r > 0, all finite.
class ValidationGate {
 public:
  ValidationGate(double x_hat, double v_l, double v_r, double a_l, double a_r);

  /// Symmetric gate of half-width `w` with shape parameters w/2.
  static ValidationGate centered(double x_hat, double half_width);

  double x_hat() const noexcept { return x_hat_; }
  double v_l() const noexcept { return v_l_; }
  double v_r() const noexcept { return v_r_; }
  double a_l() const noexcept { return a_l_; }
  double a_r() const noexcept { return a_r_; }
  double left_width() const noexcept { return x_hat_ - v_l_; }
  double right_width() const noexcept { return v_r_ - x_hat_; }

 private:
  double x_hat_, v_l_, v_r_, a_l_, a_r_;
};

struct FusionParams {
  double alpha = 1.0;  ///< weight of the prediction, >= 0
  double omega = 1.0;  ///< constant scaling of alpha, > 0

  void validate() const;
};

/// Confidence in [0, 1]: zero outside (v_l, v_r), one at x_hat, normalised
/// Gaussian bell on each side in between.
double confidence(const ValidationGate& gate, double z);

/// Confidence-weighted mean of the measurements with the prediction mixed in
/// at weight alpha / omega. Throws Error(degenerate) when no measurement is
/// valid and alpha is zero.
double fuse(const ValidationGate& gate, const FusionParams& params, std::span<const double> measurements);

struct GateAdaptation {
  double k_sigma = 3.0;
  double w_min = 0.1;
  double w_max = 100.0;
  std::size_t window = 10;

  void validate() const;
};

/// Re-centres the gate on `new_prediction` with half-width
/// clamp(k_sigma * median|residual|, w_min, w_max) and shape parameters w/2.
ValidationGate adapt_gate(const ValidationGate& gate, std::span<const double> recent_residuals,
                          double new_prediction, const GateAdaptation& rule = {});

/// Source of the prediction x_hat for the next fusion step.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual void reset(double initial_value) = 0;
  virtual double predict() = 0;
  virtual void observe(double fused) = 0;
  virtual std::unique_ptr<Predictor> clone() const = 0;
};

/// Scalar random-walk EKF run over the fused stream; the prior mean is the
/// prediction.
class EkfPredictor final : public Predictor {
 public:
  EkfPredictor(double q = 0.1, double r = 0.1, double p0 = 1.0);
  void reset(double initial_value) override;
  double predict() override;
  void observe(double fused) override;
  std::unique_ptr<Predictor> clone() const override;

 private:
  ekf::ProcessModel model_;
  double p0_;
  ekf::FilterState state_;
  ekf::FilterState prior_;
  bool have_prior_ = false;
};

/// s <- beta * fused + (1 - beta) * s.
class SmoothingPredictor final : public Predictor {
 public:
  explicit SmoothingPredictor(double beta = 0.5);
  void reset(double initial_value) override;
  double predict() override { return level_; }
  void observe(double fused) override;
  std::unique_ptr<Predictor> clone() const override;

 private:
  double beta_;
  double level_ = 0.0;
};

enum class AlphaRule {
  constant,              ///< alpha fixed at StreamConfig::params.alpha
  previous_confidence,   ///< alpha = sum of confidences at the previous tick
};

struct StreamConfig {
  FusionParams params{};
  AlphaRule alpha_rule = AlphaRule::previous_confidence;
  /// Lower bound on the adaptive alpha; keeps a fully rejected tick from
  /// zeroing the prediction weight for the next one.
  double alpha_floor = 0.01;
  GateAdaptation adaptation{};
  double initial_half_width = 10.0;
};

struct NodeConfidence {
  bool present = false;
  double z = 0.0;
  double sigma = 0.0;
};

struct FusedTick {
  Tick tick = 0;
  double fused = 0.0;
  double prediction = 0.0;
  double alpha = 0.0;
  double half_width = 0.0;
  bool warmup = false;
  std::vector<NodeConfidence> nodes;  ///< one per input trace
};

/// Stateful fuser for one stream. Each step: predict, gate, fuse, then adapt
/// the gate for the next step.
class StreamFuser {
 public:
  StreamFuser(std::size_t n_sources, StreamConfig config, std::unique_ptr<Predictor> predictor);

  /// `values[i]` is empty when source i has no reading at `tick`.
  FusedTick step(Tick tick, std::span<const std::optional<double>> values);

 private:
  std::size_t n_sources_;
  StreamConfig config_;
  std::unique_ptr<Predictor> predictor_;
  std::deque<std::vector<double>> residuals_;  ///< per tick, one entry per present source
  std::size_t steps_ = 0;
  double last_confidence_sum_ = 0.0;
  std::optional<ValidationGate> gate_;
};

std::vector<FusedTick> fusvaf_stream(std::span<const Trace> traces, const StreamConfig& config,
                                     const Predictor& predictor);

/// `tick,fused,pred,z_1,sigma_1,...,z_n,sigma_n`; missing readings are blank.
void write_fusvaf_csv(std::ostream& out, const std::vector<FusedTick>& ticks, std::size_t n_sources);

}  // namespace pipefuse::fusvaf
