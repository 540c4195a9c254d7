#include "pipefuse/ekf.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "pipefuse/error.hpp"

namespace pipefuse::ekf {

namespace {

double scale_of(const Matrix& m) { return std::max(1.0, m.cwiseAbs().maxCoeff()); }

bool is_symmetric(const Matrix& m) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTolerance * scale_of(m);
}

double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::numeric, std::string(what) + " is not finite");
}

// P <- (P + P^T) / 2, then reject anything meaningfully indefinite.
Matrix symmetrized_covariance(const Matrix& P, const char* stage) {
  require_finite(P, stage);
  Matrix S = 0.5 * (P + P.transpose());
  if (S.size() > 0 && min_eigenvalue(S) < -kSymmetryTolerance * scale_of(S)) {
    throw Error(ErrorKind::numeric, std::string(stage) + " covariance lost positive semi-definiteness");
  }
  return S;
}

}  // namespace

ProcessModel::ProcessModel(int state_dim, VectorFn f, VectorFn h, Matrix Q, Matrix R,
                           std::optional<JacobianFn> f_jacobian, std::optional<JacobianFn> h_jacobian)
    : state_dim_(state_dim),
      f_(std::move(f)),
      h_(std::move(h)),
      Q_(std::move(Q)),
      R_(std::move(R)),
      f_jac_(std::move(f_jacobian)),
      h_jac_(std::move(h_jacobian)) {
  if (state_dim_ <= 0) throw Error(ErrorKind::numeric, "state dimension must be positive");
  if (!f_ || !h_) throw Error(ErrorKind::numeric, "process model needs both f and h");
  if (Q_.rows() != state_dim_ || Q_.cols() != state_dim_) {
    throw Error(ErrorKind::numeric, "Q must be state_dim x state_dim");
  }
  if (R_.rows() == 0 || R_.rows() != R_.cols()) throw Error(ErrorKind::numeric, "R must be square and non-empty");
  require_finite(Q_, "Q");
  require_finite(R_, "R");
  if (!is_symmetric(Q_) || min_eigenvalue(Q_) < -kSymmetryTolerance * scale_of(Q_)) {
    throw Error(ErrorKind::numeric, "Q must be symmetric positive semi-definite");
  }
  if (!is_symmetric(R_) || Eigen::LLT<Matrix>(R_).info() != Eigen::Success) {
    throw Error(ErrorKind::numeric, "R must be symmetric positive definite");
  }
}

ProcessModel ProcessModel::linear(const Matrix& A, const Matrix& H, const Matrix& Q, const Matrix& R) {
  if (A.rows() != A.cols() || H.cols() != A.rows() || H.rows() != R.rows()) {
    throw Error(ErrorKind::numeric, "linear model dimensions disagree");
  }
  return ProcessModel(
      static_cast<int>(A.rows()), [A](const Vector& x) -> Vector { return A * x; },
      [H](const Vector& x) -> Vector { return H * x; }, Q, R, [A](const Vector&) -> Matrix { return A; },
      [H](const Vector&) -> Matrix { return H; });
}

ProcessModel ProcessModel::random_walk(double q, double r) {
  return linear(Matrix::Identity(1, 1), Matrix::Identity(1, 1), Matrix::Constant(1, 1, q),
                Matrix::Constant(1, 1, r));
}

Matrix ProcessModel::F(const Vector& x) const {
  Matrix J = f_jac_ ? (*f_jac_)(x) : numeric_jacobian(f_, x);
  if (J.rows() != state_dim_ || J.cols() != state_dim_) throw Error(ErrorKind::numeric, "F has wrong shape");
  return J;
}

Matrix ProcessModel::H(const Vector& x) const {
  Matrix J = h_jac_ ? (*h_jac_)(x) : numeric_jacobian(h_, x);
  if (J.rows() != measurement_dim() || J.cols() != state_dim_) {
    throw Error(ErrorKind::numeric, "H has wrong shape");
  }
  return J;
}

namespace {

template <typename StepFn>
Matrix central_differences(const VectorFn& fn, const Vector& x, StepFn step_for) {
  Matrix J;
  Vector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double eps = step_for(j);
    probe(j) = x(j) + eps;
    const Vector hi = fn(probe);
    probe(j) = x(j) - eps;
    const Vector lo = fn(probe);
    probe(j) = x(j);
    if (hi.size() != lo.size()) throw Error(ErrorKind::numeric, "function output size changed between probes");
    if (j == 0) J.resize(hi.size(), x.size());
    J.col(j) = (hi - lo) / (2.0 * eps);
  }
  require_finite(J, "numeric Jacobian");
  return J;
}

}  // namespace

Matrix numeric_jacobian(const VectorFn& fn, const Vector& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("numeric_jacobian: eps must be positive");
  return central_differences(fn, x, [eps](Eigen::Index) { return eps; });
}

Matrix numeric_jacobian(const VectorFn& fn, const Vector& x) {
  return central_differences(fn, x, [&x](Eigen::Index j) { return 1e-6 * std::max(1.0, std::abs(x(j))); });
}

FilterState predict(const FilterState& state, const ProcessModel& model) {
  const Matrix F = model.F(state.x_hat);
  Vector x = model.f(state.x_hat);
  require_finite(x, "predicted state");
  Matrix P = F * state.P * F.transpose() + model.Q();
  return FilterState{std::move(x), symmetrized_covariance(P, "predicted"), state.tick + 1};
}

Correction correct(const FilterState& prior, const Vector& y, const ProcessModel& model) {
  if (y.size() != model.measurement_dim()) {
    throw std::invalid_argument("measurement has dimension " + std::to_string(y.size()) + ", model expects " +
                                std::to_string(model.measurement_dim()));
  }
  const Matrix H = model.H(prior.x_hat);
  Vector innovation = y - model.h(prior.x_hat);
  require_finite(innovation, "innovation");

  Matrix S = H * prior.P * H.transpose() + model.R();
  Eigen::FullPivLU<Matrix> lu(S);
  if (!lu.isInvertible()) {
    throw Error(ErrorKind::singular, "H P H^T + R is singular; check the measurement noise covariance");
  }
  Matrix PHt = prior.P * H.transpose();
  Matrix K = PHt * lu.inverse();

  Vector x = prior.x_hat + K * innovation;
  const Matrix I = Matrix::Identity(prior.P.rows(), prior.P.cols());
  Matrix P = (I - K * H) * prior.P;
  require_finite(x, "updated state");

  return Correction{FilterState{std::move(x), symmetrized_covariance(P, "updated"), prior.tick},
                    std::move(innovation), std::move(S), std::move(K)};
}

std::vector<FilterStep> run_filter(const ProcessModel& model, const FilterState& init, const Trace& measurements) {
  std::vector<FilterStep> steps;
  steps.reserve(measurements.size());
  FilterState state = init;
  for (const Sample& s : measurements.samples()) {
    try {
      const FilterState prior = predict(state, model);
      Correction c = correct(prior, Vector::Constant(1, s.value), model);
      state = std::move(c.posterior);
      steps.push_back(FilterStep{s.tick, s.value, state, c.innovation(0)});
    } catch (const Error& e) {
      throw e.with_context("tick " + std::to_string(s.tick));
    }
  }
  return steps;
}

void write_filter_csv(std::ostream& out, const std::vector<FilterStep>& steps) {
  out << "tick,measurement,estimate,variance\n";
  for (const FilterStep& s : steps) {
    out << s.tick << ',' << format_number(s.measurement) << ',' << format_number(s.posterior.x_hat(0)) << ','
        << format_number(s.posterior.P(0, 0)) << '\n';
  }
}

}  // namespace pipefuse::ekf
