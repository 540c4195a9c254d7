#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pipefuse/ekf.hpp"
#include "pipefuse/error.hpp"

using namespace pipefuse;
using namespace pipefuse::ekf;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

FilterState state(double x, double p) { return FilterState{vec({x}), scalar(p), 0}; }

ProcessModel scalar_linear(double a, double q, double r) {
  return ProcessModel::linear(scalar(a), scalar(1.0), scalar(q), scalar(r));
}

Matrix random_spd(std::mt19937_64& rng, int n, double floor) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = g(rng);
  return B * B.transpose() / n + floor * Matrix::Identity(n, n);
}

// Two-state model with analytic Jacobians:
//   f(x) = [x0 + 0.1 sin(x1), 0.9 x1 + 0.05 x0^2]
//   h(x) = [sqrt(x0^2 + x1^2 + 1), x0 x1]
ProcessModel nonlinear_model() {
  auto f = [](const Vector& x) -> Vector { return vec({x(0) + 0.1 * std::sin(x(1)), 0.9 * x(1) + 0.05 * x(0) * x(0)}); };
  auto h = [](const Vector& x) -> Vector { return vec({std::sqrt(x(0) * x(0) + x(1) * x(1) + 1.0), x(0) * x(1)}); };
  auto fj = [](const Vector& x) -> Matrix {
    Matrix J(2, 2);
    J << 1.0, 0.1 * std::cos(x(1)), 0.1 * x(0), 0.9;
    return J;
  };
  auto hj = [](const Vector& x) -> Matrix {
    const double r = std::sqrt(x(0) * x(0) + x(1) * x(1) + 1.0);
    Matrix J(2, 2);
    J << x(0) / r, x(1) / r, x(1), x(0);
    return J;
  };
  return ProcessModel(2, f, h, 0.01 * Matrix::Identity(2, 2), 0.1 * Matrix::Identity(2, 2), fj, hj);
}

}  // namespace

TEST(NumericJacobian, IdentityGivesIdentity) {
  const Vector x = vec({1.5, -2.0, 1e3});
  const Matrix J = numeric_jacobian([](const Vector& v) { return v; }, x, 1e-5);
  // Cancellation at |x| = 1e3 costs about ulp(1e3) / eps = 1e-8.
  EXPECT_LE((J - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 5e-8);
}

TEST(NumericJacobian, SquareAtThree) {
  const Matrix J = numeric_jacobian([](const Vector& v) -> Vector { return v.array().square(); }, vec({3.0}), 1e-5);
  EXPECT_NEAR(J(0, 0), 6.0, 1e-6);
}

TEST(NumericJacobian, ConstantGivesZero) {
  const Matrix J = numeric_jacobian([](const Vector&) -> Vector { return vec({4.0, -1.0}); }, vec({0.3, 7.0}), 1e-4);
  EXPECT_EQ(J.rows(), 2);
  EXPECT_EQ(J.cols(), 2);
  EXPECT_TRUE(J.isZero(0.0));
}

TEST(NumericJacobian, RejectsNonPositiveStep) {
  auto id = [](const Vector& v) { return v; };
  EXPECT_THROW(numeric_jacobian(id, vec({1.0}), 0.0), std::invalid_argument);
  EXPECT_THROW(numeric_jacobian(id, vec({1.0}), -1e-3), std::invalid_argument);
}

TEST(NumericJacobian, DivergenceIsNumericFailure) {
  auto blowup = [](const Vector& v) -> Vector { return vec({1.0 / (v(0) - 1e-7)}); };
  try {
    numeric_jacobian(blowup, vec({0.0}), 1e-7);
    FAIL() << "expected numeric failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
}

TEST(NumericJacobian, AgreesWithAnalyticAtRandomStates) {
  const ProcessModel m = nonlinear_model();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const Vector x = vec({u(rng), u(rng)});
    const Matrix Fa = m.F(x);
    const Matrix Ha = m.H(x);
    const Matrix Fn = numeric_jacobian([&](const Vector& v) { return m.f(v); }, x);
    const Matrix Hn = numeric_jacobian([&](const Vector& v) { return m.h(v); }, x);
    EXPECT_LE((Fn - Fa).norm() / std::max(1.0, Fa.norm()), 1e-4);
    EXPECT_LE((Hn - Ha).norm() / std::max(1.0, Ha.norm()), 1e-4);
  }
}

TEST(ProcessModel, ValidatesCovariances) {
  auto id = [](const Vector& v) { return v; };
  EXPECT_THROW(ProcessModel(1, id, id, scalar(-1.0), scalar(1.0)), Error);
  EXPECT_THROW(ProcessModel(1, id, id, scalar(0.1), scalar(0.0)), Error);
  Matrix asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(ProcessModel(2, id, id, asym, Matrix::Identity(2, 2)), Error);
  EXPECT_NO_THROW(ProcessModel(1, id, id, scalar(0.0), scalar(1e-3)));
}

TEST(ProcessModel, FallsBackToNumericJacobians) {
  auto f = [](const Vector& x) -> Vector { return vec({std::sin(x(0))}); };
  const ProcessModel m(1, f, f, scalar(0.1), scalar(0.1));
  EXPECT_FALSE(m.has_analytic_jacobians());
  EXPECT_NEAR(m.F(vec({0.4}))(0, 0), std::cos(0.4), 1e-8);
}

TEST(Predict, IdentityDynamicsWithoutNoise) {
  const FilterState p = predict(state(5.0, 1.0), scalar_linear(1.0, 0.0, 1.0));
  EXPECT_EQ(p.x_hat(0), 5.0);
  EXPECT_EQ(p.P(0, 0), 1.0);
  EXPECT_EQ(p.tick, 1u);
}

TEST(Predict, AddsProcessNoise) {
  const FilterState p = predict(state(0.0, 1.0), scalar_linear(1.0, 0.1, 1.0));
  EXPECT_EQ(p.x_hat(0), 0.0);
  EXPECT_NEAR(p.P(0, 0), 1.1, 1e-15);
}

TEST(Predict, ScalesCovarianceByJacobianSquared) {
  const FilterState p = predict(state(1.0, 1.0), scalar_linear(2.0, 0.0, 1.0));
  EXPECT_EQ(p.x_hat(0), 2.0);
  EXPECT_EQ(p.P(0, 0), 4.0);
}

TEST(Predict, NonFiniteDynamicsFail) {
  auto bad = [](const Vector& x) -> Vector { return vec({std::log(x(0))}); };
  const ProcessModel m(1, bad, [](const Vector& x) { return x; }, scalar(0.1), scalar(0.1),
                       [](const Vector&) -> Matrix { return scalar(1.0); }, [](const Vector&) -> Matrix { return scalar(1.0); });
  try {
    predict(state(-1.0, 1.0), m);
    FAIL() << "expected numeric failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
}

TEST(Update, HandEvaluatedGain) {
  const Correction c = correct(state(0.0, 1.0), vec({2.0}), scalar_linear(1.0, 0.0, 1.0));
  EXPECT_DOUBLE_EQ(c.gain(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(c.posterior.x_hat(0), 1.0);
  EXPECT_DOUBLE_EQ(c.posterior.P(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(c.innovation(0), 2.0);
  EXPECT_DOUBLE_EQ(c.innovation_covariance(0, 0), 2.0);
}

TEST(Update, HugeMeasurementNoiseLeavesPriorAlone) {
  for (double y : {-50.0, 3.0, 1e4}) {
    const FilterState post = update(state(1.0, 2.0), vec({y}), scalar_linear(1.0, 0.0, 1e12));
    EXPECT_LT(std::abs(post.x_hat(0) - 1.0), 1e-9 * std::abs(y));
  }
}

TEST(Update, PerfectPriorIgnoresMeasurement) {
  const FilterState post = update(state(4.25, 0.0), vec({100.0}), scalar_linear(1.0, 0.0, 0.3));
  EXPECT_EQ(post.x_hat(0), 4.25);
  EXPECT_EQ(post.P(0, 0), 0.0);
}

TEST(Update, SingularBracketIsReported) {
  Matrix H(2, 1);
  H << 1.0, 1.0;
  const ProcessModel m =
      ProcessModel::linear(scalar(1.0), H, scalar(0.0), 1e-20 * Matrix::Identity(2, 2));
  try {
    update(state(0.0, 1e6), vec({1.0, 1.0}), m);
    FAIL() << "expected singular-bracket error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singular);
  }
}

TEST(Update, WrongMeasurementDimensionIsAPreconditionError) {
  EXPECT_THROW(update(state(0.0, 1.0), vec({1.0, 2.0}), scalar_linear(1.0, 0.1, 0.1)), std::invalid_argument);
}

TEST(Update, UsesNonlinearObservationForInnovation) {
  const ProcessModel m = nonlinear_model();
  const FilterState prior{vec({1.0, 2.0}), Matrix::Identity(2, 2), 0};
  const Vector y = vec({3.0, 1.5});
  const Correction c = correct(prior, y, m);
  EXPECT_TRUE(c.innovation.isApprox(y - vec({std::sqrt(6.0), 2.0}), 1e-14));
}

TEST(Update, PosteriorTraceNeverExceedsPrior) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 4;
    const int m = 1 + (trial / 4) % n;
    Matrix H(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) H(i, j) = g(rng);
    const ProcessModel model =
        ProcessModel::linear(Matrix::Identity(n, n), H, Matrix::Zero(n, n), random_spd(rng, m, 0.05));
    Vector x(n), y(m);
    for (int i = 0; i < n; ++i) x(i) = g(rng);
    for (int i = 0; i < m; ++i) y(i) = g(rng);
    const FilterState prior{x, random_spd(rng, n, 0.01), 0};
    const FilterState post = update(prior, y, model);
    EXPECT_LE(post.P.trace(), prior.P.trace() + 1e-12) << "trial " << trial;
    EXPECT_TRUE(post.P.isApprox(post.P.transpose(), 0.0));
    EXPECT_GE(post.P.diagonal().minCoeff(), 0.0);
  }
}

TEST(RunFilter, MatchesLinearKalmanOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 4;
    Matrix A(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = 0.5 * g(rng) / std::sqrt(n);
    Matrix H = Matrix::Identity(1, n);
    const Matrix Q = random_spd(rng, n, 0.01);
    const Matrix R = scalar(0.5);
    const ProcessModel model = ProcessModel::linear(A, H, Q, R);

    oracle::LinearKalman kf{A, H, Q, R, Vector::Zero(n), Matrix::Identity(n, n)};
    FilterState s{Vector::Zero(n), Matrix::Identity(n, n), 0};
    for (int k = 0; k < 50; ++k) {
      const Vector y = vec({g(rng)});
      kf.step(y);
      s = update(predict(s, model), y, model);
      EXPECT_LE((s.x_hat - kf.x).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LE((s.P - kf.P).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(RunFilter, SmoothsTwentySampleFixture) {
  const Trace trace = load_trace(PIPEFUSE_DATA_DIR "/fixtures/ekf_20.csv", "fixture", SensorKind::pressure);
  ASSERT_EQ(trace.size(), 20u);
  const auto steps = run_filter(ProcessModel::random_walk(0.1, 0.1), state(trace.samples()[0].value, 0.1), trace);
  ASSERT_EQ(steps.size(), 20u);
  std::vector<double> z, est;
  for (const auto& s : steps) {
    z.push_back(s.measurement);
    est.push_back(s.posterior.x_hat(0));
    EXPECT_TRUE(std::isfinite(s.posterior.x_hat(0)));
  }
  EXPECT_LE(oracle::sample_variance(est), oracle::sample_variance(z));
}

TEST(RunFilter, ConstantTraceConvergesMonotonically) {
  const double c = 7.5;
  std::vector<Sample> samples;
  for (Tick t = 0; t < 60; ++t) samples.push_back({t, c});
  const Trace trace("n", SensorKind::pressure, samples);
  const auto steps = run_filter(ProcessModel::random_walk(0.0, 0.2), state(0.0, 4.0), trace);

  // Scalar recursion with q = 0: P' = P r / (P + r), x' = x + P/(P + r) (c - x).
  double x = 0.0, p = 4.0, prev_err = std::abs(c);
  for (const auto& s : steps) {
    const double k = p / (p + 0.2);
    x += k * (c - x);
    p = (1.0 - k) * p;
    EXPECT_NEAR(s.posterior.x_hat(0), x, 1e-12);
    const double err = std::abs(s.posterior.x_hat(0) - c);
    EXPECT_LE(err, prev_err);
    prev_err = err;
  }
  EXPECT_LT(prev_err, 0.01);
}

TEST(RunFilter, SingleMeasurementIsOnePredictUpdate) {
  const Trace trace("n", SensorKind::pressure, {{3, 2.5}});
  const ProcessModel model = ProcessModel::random_walk(0.1, 0.1);
  const FilterState init = state(1.0, 1.0);
  const auto steps = run_filter(model, init, trace);
  ASSERT_EQ(steps.size(), 1u);
  const FilterState direct = update(predict(init, model), vec({2.5}), model);
  EXPECT_EQ(steps[0].posterior.x_hat, direct.x_hat);
  EXPECT_EQ(steps[0].posterior.P, direct.P);
  EXPECT_EQ(steps[0].tick, 3u);
}

TEST(RunFilter, ErrorsCarryTheFailingTick) {
  auto f = [](const Vector& x) -> Vector { return vec({x(0) * 1e200}); };
  const ProcessModel m(1, f, [](const Vector& x) { return x; }, scalar(0.1), scalar(0.1),
                       [](const Vector&) -> Matrix { return scalar(1e200); },
                       [](const Vector&) -> Matrix { return scalar(1.0); });
  const Trace trace("n", SensorKind::pressure, {{0, 1.0}, {1, 1.0}, {2, 1.0}});
  try {
    run_filter(m, state(1.0, 1.0), trace);
    FAIL() << "expected failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_NE(std::string(e.what()).find("tick "), std::string::npos);
  }
}

TEST(RunFilter, NonlinearOutputsStayFinite) {
  const ProcessModel m = nonlinear_model();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 0.3);
  FilterState s{vec({0.5, 0.5}), Matrix::Identity(2, 2), 0};
  for (int k = 0; k < 200; ++k) {
    s = update(predict(s, m), vec({1.3 + g(rng), 0.2 + g(rng)}), m);
    ASSERT_TRUE(s.x_hat.allFinite());
    ASSERT_TRUE(s.P.allFinite());
  }
}

TEST(RunFilter, CsvHasOneRowPerReading) {
  const Trace trace("n", SensorKind::pressure, {{0, 1.0}, {1, 2.0}});
  std::ostringstream out;
  write_filter_csv(out, run_filter(ProcessModel::random_walk(0.1, 0.1), state(1.0, 0.1), trace));
  const std::string csv = out.str();
  EXPECT_EQ(csv.substr(0, 35), "tick,measurement,estimate,variance\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
