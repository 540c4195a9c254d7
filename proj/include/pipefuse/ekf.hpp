#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "pipefuse/core.hpp"

namespace pipefuse::ekf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorFn = std::function<Vector(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;

/// Nonlinear discrete system x' = f(x) + w, y = h(x) + v with w ~ N(0, Q) and
/// v ~ N(0, R). Jacobians fall back to central differences when absent.
class ProcessModel {
 public:
  /// Throws Error(numeric) unless Q is symmetric PSD and R symmetric PD.
  ProcessModel(int state_dim, VectorFn f, VectorFn h, Matrix Q, Matrix R,
               std::optional<JacobianFn> f_jacobian = std::nullopt,
               std::optional<JacobianFn> h_jacobian = std::nullopt);

  /// x' = A x, y = H x with analytic Jacobians A and H.
  static ProcessModel linear(const Matrix& A, const Matrix& H, const Matrix& Q, const Matrix& R);

  /// Scalar random walk x' = x, y = x with variances q and r.
  static ProcessModel random_walk(double q, double r);

  int state_dim() const noexcept { return state_dim_; }
  int measurement_dim() const noexcept { return static_cast<int>(R_.rows()); }
  const Matrix& Q() const noexcept { return Q_; }
  const Matrix& R() const noexcept { return R_; }
  bool has_analytic_jacobians() const noexcept { return f_jac_.has_value() && h_jac_.has_value(); }

  Vector f(const Vector& x) const { return f_(x); }
  Vector h(const Vector& x) const { return h_(x); }
  Matrix F(const Vector& x) const;
  Matrix H(const Vector& x) const;

 private:
  int state_dim_;
  VectorFn f_;
  VectorFn h_;
  Matrix Q_;
  Matrix R_;
  std::optional<JacobianFn> f_jac_;
  std::optional<JacobianFn> h_jac_;
};

struct FilterState {
  Vector x_hat;
  Matrix P;
  Tick tick = 0;
};

/// Symmetry and eigenvalue floor applied to every covariance the filter emits.
inline constexpr double kSymmetryTolerance = 1e-9;

/// Central differences with a uniform step; column j is
/// (fn(x + eps e_j) - fn(x - eps e_j)) / (2 eps).
Matrix numeric_jacobian(const VectorFn& fn, const Vector& x, double eps);

/// Central differences with per-coordinate step 1e-6 * max(1, |x_j|).
Matrix numeric_jacobian(const VectorFn& fn, const Vector& x);

FilterState predict(const FilterState& state, const ProcessModel& model);

/// Posterior plus the quantities the gain was built from.
struct Correction {
  FilterState posterior;
  Vector innovation;
  Matrix innovation_covariance;
  Matrix gain;
};

Correction correct(const FilterState& prior, const Vector& y, const ProcessModel& model);

inline FilterState update(const FilterState& prior, const Vector& y, const ProcessModel& model) {
  return correct(prior, y, model).posterior;
}

struct FilterStep {
  Tick tick = 0;  ///< tick of the measurement in the input trace
  double measurement = 0.0;
  FilterState posterior;
  double innovation = 0.0;
};

/// Predict-then-update once per reading of a scalar trace.
std::vector<FilterStep> run_filter(const ProcessModel& model, const FilterState& init, const Trace& measurements);

/// `tick,measurement,estimate,variance` using the first state component.
void write_filter_csv(std::ostream& out, const std::vector<FilterStep>& steps);

}  // namespace pipefuse::ekf
