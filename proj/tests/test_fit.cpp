#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "fdsqz/fit.hpp"
#include "fdsqz/least_squares.hpp"
#include "fdsqz/noise_model.hpp"
#include "test_support.hpp"

using namespace fdsqz;
using fdsqz::test::table1;
constexpr double kPi = std::numbers::pi;

namespace {

std::vector<double> quadratures(std::initializer_list<double> degrees) {
  std::vector<double> out;
  for (double d : degrees) out.push_back(deg_to_rad(d));
  return out;
}

FitProblem noiseless_problem() {
  FitProblem p;
  p.base = table1();
  const auto q = quadratures({0, 30, 54, 70, 90});
  const std::vector<double> dg = {hz_to_rad_s(4), hz_to_rad_s(-6), 0.0, hz_to_rad_s(2), hz_to_rad_s(-3)};
  p.datasets = synthesize(p.base, q, dg, log_grid(100.0, 1e5, 40), 0.0, 1);
  return p;
}

// Small, fast problem with the two cavity-noise parameters free.
FitProblem cavity_noise_problem(double noise_db, std::uint64_t seed) {
  FitProblem p;
  p.base = table1();
  p.datasets = synthesize(p.base, quadratures({20, 80}), {}, log_grid(300.0, 1e4, 40), noise_db, seed);
  for (auto& d : p.datasets) d.sigma_db = noise_db;
  p.shared_free = {{SharedParameter::round_trip_loss, default_bounds(SharedParameter::round_trip_loss)},
                   {SharedParameter::length_noise_rms_m, default_bounds(SharedParameter::length_noise_rms_m)}};
  p.fit_quadrature = false;
  p.fit_detuning = false;
  p.base.cavity.round_trip_loss = 12e-6;
  p.base.budget.length_noise_rms_m = 5e-13;
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

// ---------------------------------------------------------------------------
// Bounded Levenberg-Marquardt

TEST(LevenbergMarquardt, SolvesRosenbrock) {
  const ResidualFunction f = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(2);
    r << 10 * (x(1) - x(0) * x(0)), 1 - x(0);
    return r;
  };
  const auto res = bounded_levenberg_marquardt(f, Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(-5, -5),
                                               Eigen::Vector2d(5, 5));
  EXPECT_TRUE(converged(res.termination)) << to_string(res.termination);
  EXPECT_NEAR(res.x(0), 1.0, 1e-4);
  EXPECT_NEAR(res.x(1), 1.0, 1e-4);
}

TEST(LevenbergMarquardt, StopsAtActiveBound) {
  const ResidualFunction f = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(2);
    r << x(0) - 3.0, x(1) + 1.0;
    return r;
  };
  const auto res = bounded_levenberg_marquardt(f, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0, 0),
                                               Eigen::Vector2d(2, 1));
  EXPECT_TRUE(converged(res.termination));
  EXPECT_DOUBLE_EQ(res.x(0), 2.0);
  EXPECT_DOUBLE_EQ(res.x(1), 0.0);
}

TEST(LevenbergMarquardt, NeverEvaluatesOutsideBox) {
  const Eigen::Vector2d lo(0, 0), hi(1, 1);
  const ResidualFunction f = [&](const Eigen::VectorXd& x) {
    if ((x.array() < lo.array()).any() || (x.array() > hi.array()).any()) throw std::logic_error("outside");
    Eigen::VectorXd r(3);
    r << x(0) - 2.0, x(1) - 0.3, x(0) * x(1);
    return r;
  };
  EXPECT_NO_THROW(bounded_levenberg_marquardt(f, Eigen::Vector2d(0.9, 0.9), lo, hi));
  EXPECT_NO_THROW(bounded_levenberg_marquardt(f, Eigen::Vector2d(7, -3), lo, hi));
}

TEST(LevenbergMarquardt, LinearRegressionCovariance) {
  // y = a + b t with known noise; covariance must equal s^2 (X^T X)^-1.
  std::mt19937_64 rng(41);
  std::normal_distribution<double> noise(0.0, 0.1);
  const int m = 50;
  Eigen::VectorXd t(m), y(m);
  for (int i = 0; i < m; ++i) {
    t(i) = i / 10.0;
    y(i) = 1.5 - 0.7 * t(i) + noise(rng);
  }
  const ResidualFunction f = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return (x(0) + x(1) * t.array() - y.array()).matrix();
  };
  const auto res = bounded_levenberg_marquardt(f, Eigen::Vector2d(0, 0), Eigen::Vector2d(-10, -10),
                                               Eigen::Vector2d(10, 10));
  Eigen::MatrixXd x(m, 2);
  x.col(0).setOnes();
  x.col(1) = t;
  const Eigen::Vector2d exact = x.colPivHouseholderQr().solve(y);
  EXPECT_NEAR(res.x(0), exact(0), 1e-8);
  EXPECT_NEAR(res.x(1), exact(1), 1e-8);
  const double s2 = (x * exact - y).squaredNorm() / (m - 2);
  const Eigen::Matrix2d expected = s2 * (x.transpose() * x).inverse();
  const Eigen::MatrixXd cov = parameter_covariance(res.jacobian, res.cost);
  EXPECT_NEAR(cov(0, 0), expected(0, 0), 1e-6 * expected(0, 0));
  EXPECT_NEAR(cov(1, 1), expected(1, 1), 1e-6 * expected(1, 1));
  EXPECT_NEAR(cov(0, 1), expected(0, 1), 1e-6 * std::abs(expected(0, 1)));
}

TEST(LevenbergMarquardt, DegenerateDirectionsHaveInfiniteVariance) {
  Eigen::MatrixXd j(4, 3);
  j << 1, 2, 5, 2, 4, 1, 3, 6, 2, 4, 8, 7;  // columns 0 and 1 are parallel
  const auto cov = parameter_covariance(j, 1.0);
  EXPECT_TRUE(std::isinf(cov(0, 0)));
  EXPECT_TRUE(std::isinf(cov(1, 1)));
  EXPECT_TRUE(std::isfinite(cov(2, 2)));
}

TEST(LevenbergMarquardt, ReportsIterationLimit) {
  const ResidualFunction f = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(2);
    r << 10 * (x(1) - x(0) * x(0)), 1 - x(0);
    return r;
  };
  LeastSquaresOptions o;
  o.max_iterations = 2;
  const auto res = bounded_levenberg_marquardt(f, Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(-5, -5),
                                               Eigen::Vector2d(5, 5), o);
  EXPECT_EQ(res.termination, Termination::max_iterations);
  EXPECT_FALSE(converged(res.termination));
}

TEST(FiniteDifference, BackwardStepAtUpperBound) {
  const ResidualFunction f = [](const Eigen::VectorXd& x) {
    if (x(0) > 1.0) throw std::logic_error("outside");
    return Eigen::VectorXd::Constant(1, x(0) * x(0));
  };
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0);
  const auto j = finite_difference_jacobian(f, x, f(x), Eigen::VectorXd::Zero(1), x, 1e-6);
  EXPECT_NEAR(j(0, 0), 2.0, 1e-5);
}

// ---------------------------------------------------------------------------
// Objective

TEST(Objective, VanishesAtGeneratingParameters) {
  const FitProblem p = noiseless_problem();
  EXPECT_LT(objective(p, p.initial_vector()), 1e-12);
}

TEST(Objective, IncreasesWhenSharedParameterPerturbed) {
  const FitProblem p = noiseless_problem();
  const double at_truth = objective(p, p.initial_vector());
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(p.shared_free.size()); ++i) {
    Eigen::VectorXd x = p.initial_vector();
    x(i) *= 1.1;
    EXPECT_GT(objective(p, x), at_truth) << p.parameter_names()[static_cast<std::size_t>(i)];
  }
}

TEST(Objective, IgnoresExcludedBand) {
  FitProblem p = noiseless_problem();
  Eigen::VectorXd x = p.initial_vector();
  x(0) *= 1.05;
  const double before = objective(p, x);
  for (auto& d : p.datasets) {
    for (std::size_t i = 0; i < d.frequencies_hz.size(); ++i) {
      if (d.frequencies_hz[i] < 300.0) d.relative_noise_db[i] += 40.0;
    }
  }
  EXPECT_EQ(objective(p, x), before);
  EXPECT_EQ(residuals(p, x).residuals.size(), static_cast<Eigen::Index>(p.fitted_points()));
}

TEST(Objective, InvariantUnderDatasetReordering) {
  const FitProblem p = noiseless_problem();
  Eigen::VectorXd x = p.initial_vector();
  x(1) += 0.02;
  x(3) += 0.01;
  FitProblem q = p;
  std::reverse(q.datasets.begin(), q.datasets.end());
  // Per-dataset parameters follow their dataset.
  const auto shared = static_cast<Eigen::Index>(p.shared_free.size());
  const auto nd = static_cast<Eigen::Index>(p.datasets.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index k = 0; k < nd; ++k) {
    y(shared + 2 * k) = x(shared + 2 * (nd - 1 - k));
    y(shared + 2 * k + 1) = x(shared + 2 * (nd - 1 - k) + 1);
  }
  const double a = objective(p, x);
  EXPECT_NEAR(objective(q, y), a, 1e-12 * a);
}

TEST(Objective, InvariantUnderHalfTurnOfQuadrature) {
  const FitProblem p = noiseless_problem();
  Eigen::VectorXd x = p.initial_vector();
  x(0) *= 0.97;
  FitProblem q = p;
  q.datasets[2].quadrature_rad += kPi;
  Eigen::VectorXd y = x;
  y(static_cast<Eigen::Index>(p.shared_free.size()) + 4) += kPi;
  const double a = objective(p, x);
  EXPECT_NEAR(objective(q, y), a, 1e-9 * a);
}

TEST(Objective, WeightsBySigma) {
  FitProblem p = noiseless_problem();
  Eigen::VectorXd x = p.initial_vector();
  x(0) *= 1.05;
  const double unit = objective(p, x);
  for (auto& d : p.datasets) d.sigma_db = 0.5;
  EXPECT_NEAR(objective(p, x), unit / 0.25, 1e-9 * unit);
}

TEST(Objective, ModelFailureIsPenalized) {
  const FitProblem p = noiseless_problem();
  Eigen::VectorXd x = p.initial_vector();
  x(0) = 0.5;  // gain below one is unphysical
  const auto ev = residuals(p, x);
  EXPECT_TRUE(ev.penalized);
  EXPECT_TRUE(ev.residuals.allFinite());
  EXPECT_GT(objective(p, x), 1e6);
}

// ---------------------------------------------------------------------------
// Problem layout and validation

TEST(FitProblem, LayoutAndBounds) {
  const FitProblem p = noiseless_problem();
  EXPECT_EQ(p.dimension(), 5 + 2 * 5);
  const auto names = p.parameter_names();
  EXPECT_EQ(names.front(), "nonlinear_gain");
  EXPECT_TRUE((p.lower_bounds().array() < p.upper_bounds().array()).all());
  const auto x = p.initial_vector();
  EXPECT_TRUE((x.array() >= p.lower_bounds().array()).all());
  EXPECT_TRUE((x.array() <= p.upper_bounds().array()).all());
}

TEST(FitProblem, Validation) {
  FitProblem p = noiseless_problem();
  EXPECT_NO_THROW(p.validate());
  FitProblem empty = p;
  empty.datasets.clear();
  EXPECT_THROW(empty.validate(), std::invalid_argument);
  FitProblem unsorted = p;
  std::swap(unsorted.datasets[0].frequencies_hz[3], unsorted.datasets[0].frequencies_hz[4]);
  EXPECT_THROW(unsorted.validate(), std::invalid_argument);
  FitProblem bounds = p;
  bounds.shared_free[1].bounds = {0.4, 0.1};
  EXPECT_THROW(bounds.validate(), std::invalid_argument);
  FitProblem negative = p;
  negative.min_fit_frequency_hz = -1.0;
  EXPECT_THROW(negative.validate(), std::invalid_argument);
}

TEST(SharedParameters, NamesRoundTrip) {
  for (auto sp : all_shared_parameters()) EXPECT_EQ(shared_parameter_from_string(to_string(sp)), sp);
  EXPECT_THROW(shared_parameter_from_string("mirror_curvature"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Synthesis

TEST(Synthesize, NoiselessIsModel) {
  const SystemParams truth = table1();
  const auto grid = log_grid(300.0, 1e5, 30);
  const std::vector<double> offsets = {hz_to_rad_s(7.0)};
  const auto d = synthesize(truth, quadratures({33}), offsets, grid, 0.0, 5);
  ASSERT_EQ(d.size(), 1u);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_EQ(d[0].relative_noise_db[i], to_db(measured_noise(grid[i], deg_to_rad(33), truth, offsets[0])));
  }
}

TEST(Synthesize, DeterministicPerSeed) {
  const auto grid = log_grid(300.0, 1e5, 30);
  const auto a = synthesize(table1(), quadratures({0, 45}), {}, grid, 0.2, 9);
  const auto b = synthesize(table1(), quadratures({0, 45}), {}, grid, 0.2, 9, 3);
  const auto c = synthesize(table1(), quadratures({0, 45}), {}, grid, 0.2, 10);
  EXPECT_EQ(a[1].relative_noise_db, b[1].relative_noise_db);
  EXPECT_NE(a[1].relative_noise_db, c[1].relative_noise_db);
}

TEST(Synthesize, NoiseHasRequestedSpread) {
  const auto grid = log_grid(300.0, 1e5, 5000);
  const auto qs = quadratures({10, 60});
  const auto noisy = synthesize(table1(), qs, {}, grid, 0.2, 11);
  const auto clean = synthesize(table1(), qs, {}, grid, 0.0, 11);
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < qs.size(); ++k) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double e = noisy[k].relative_noise_db[i] - clean[k].relative_noise_db[i];
      sum += e;
      sum_sq += e * e;
      ++n;
    }
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sum_sq - n * mean * mean) / (n - 1));
  EXPECT_NEAR(sd, 0.2, 0.05 * 0.2);
}

TEST(Synthesize, RejectsNegativeNoise) {
  EXPECT_THROW(synthesize(table1(), quadratures({0}), {}, log_grid(300, 1e3, 5), -0.1, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Joint fit

TEST(FitJoint, RecoversSingleQuadrature) {
  FitProblem p;
  p.base = table1();
  p.datasets = synthesize(p.base, quadratures({47}), {}, log_grid(300.0, 1e5, 80), 0.1, 3);
  p.datasets[0].quadrature_rad = deg_to_rad(65);  // deliberately wrong start
  p.shared_free.clear();
  p.fit_detuning = false;
  FitOptions o;
  o.n_starts = 1;
  const auto r = fit_joint(p, o);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(rad_to_deg(r.datasets[0].quadrature_rad), 47.0, 1.0);
  EXPECT_TRUE(r.estimates.empty());
}

TEST(FitJoint, DeterministicAndThreadIndependent) {
  FitProblem p = cavity_noise_problem(0.2, 4);
  p.fit_quadrature = true;
  FitOptions o;
  o.n_starts = 3;
  o.seed = 17;
  const auto a = fit_joint(p, o);
  const auto b = fit_joint(p, o);
  o.threads = 3;
  const auto c = fit_joint(p, o);
  for (const auto* other : {&b, &c}) {
    EXPECT_EQ(a.chi_square, other->chi_square);
    EXPECT_EQ(a.best_start, other->best_start);
    ASSERT_EQ(a.estimates.size(), other->estimates.size());
    for (std::size_t i = 0; i < a.estimates.size(); ++i) {
      EXPECT_EQ(a.estimates[i].value, other->estimates[i].value);
      EXPECT_EQ(a.estimates[i].standard_error, other->estimates[i].standard_error);
    }
    for (std::size_t k = 0; k < a.datasets.size(); ++k) {
      EXPECT_EQ(a.datasets[k].quadrature_rad, other->datasets[k].quadrature_rad);
    }
  }
  EXPECT_EQ(a.starts.size(), 3u);
  EXPECT_EQ(a.seed, 17u);
}

TEST(FitJoint, EstimatesStayWithinBounds) {
  FitProblem p = cavity_noise_problem(0.5, 12);
  FitOptions o;
  o.n_starts = 4;
  const auto r = fit_joint(p, o);
  for (const auto& e : r.estimates) {
    EXPECT_GE(e.value, e.lower_bound);
    EXPECT_LE(e.value, e.upper_bound);
  }
  for (const auto& d : r.datasets) EXPECT_TRUE(std::isfinite(d.residual_rms_db));
}

TEST(FitJoint, ReportsNonConvergence) {
  FitProblem p = cavity_noise_problem(0.2, 5);
  FitOptions o;
  o.n_starts = 2;
  o.max_iterations = 1;
  const auto r = fit_joint(p, o);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.termination, "max_iterations");
  EXPECT_TRUE(std::isfinite(r.chi_square));
}

TEST(FitJoint, ErrorShrinksWithNoise) {
  FitOptions o;
  o.n_starts = 1;
  std::vector<double> coarse, fine;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto [noise, sink] : {std::pair{0.2, &coarse}, std::pair{0.02, &fine}}) {
      const auto r = fit_joint(cavity_noise_problem(noise, 100 + seed), o);
      sink->push_back(std::abs(r.estimates[0].value - 7e-6) / 7e-6 +
                      std::abs(r.estimates[1].value - 7.8e-13) / 7.8e-13);
    }
  }
  EXPECT_LT(median(fine), median(coarse));
}

TEST(FitJoint, StandardErrorsScaleWithNoise) {
  FitOptions o;
  o.n_starts = 1;
  const auto small = fit_joint(cavity_noise_problem(0.1, 21), o);
  const auto large = fit_joint(cavity_noise_problem(0.2, 21), o);
  for (std::size_t i = 0; i < small.estimates.size(); ++i) {
    const double ratio = large.estimates[i].standard_error / small.estimates[i].standard_error;
    EXPECT_NEAR(ratio, 2.0, 0.3 * 2.0) << small.estimates[i].name;
  }
}

TEST(FitJoint, StandardErrorsAreCalibrated) {
  // Over many noise draws, (estimate - truth) / standard_error has unit spread.
  FitOptions o;
  o.n_starts = 1;
  const double truth[] = {7e-6, 7.8e-13};
  double sum_sq[2] = {0.0, 0.0};
  const int draws = 40;
  for (int seed = 0; seed < draws; ++seed) {
    const auto r = fit_joint(cavity_noise_problem(0.2, 500 + seed), o);
    for (int i = 0; i < 2; ++i) {
      const double z = (r.estimates[i].value - truth[i]) / r.estimates[i].standard_error;
      sum_sq[i] += z * z;
    }
  }
  for (double s : sum_sq) EXPECT_NEAR(std::sqrt(s / draws), 1.0, 0.3);
}

TEST(FitJoint, GainLossAndPhaseNoiseAreNotSeparable) {
  // The cavity and readout act identically on every quadrature, so phase
  // jitter only rescales the squeezed/anti-squeezed contrast, which gain and
  // loss already set. The fit must report that rather than a finite error.
  FitProblem p;
  p.base = table1();
  p.datasets = synthesize(p.base, quadratures({0, 45, 90}), {}, log_grid(300.0, 1e5, 60), 0.1, 8);
  p.fit_detuning = false;
  p.fit_quadrature = false;
  FitOptions o;
  o.n_starts = 1;
  const auto r = fit_joint(p, o);
  for (const char* name : {"nonlinear_gain", "propagation_loss", "phase_noise_rms_rad"}) {
    EXPECT_TRUE(std::isinf(r.find(name)->standard_error)) << name;
  }
  EXPECT_TRUE(std::isfinite(r.find("round_trip_loss")->standard_error));
}
