#include "fdsqz/fit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fdsqz/noise_model.hpp"
#include "fdsqz/parallel.hpp"
#include "fdsqz/quadrature.hpp"

namespace fdsqz {

void SpectrumDataset::validate() const {
  if (frequencies_hz.size() != relative_noise_db.size()) {
    throw std::invalid_argument("frequency and noise vectors differ in length");
  }
  if (frequencies_hz.size() < 2) throw std::invalid_argument("a spectrum needs at least two points");
  for (std::size_t i = 0; i < frequencies_hz.size(); ++i) {
    if (!(std::isfinite(frequencies_hz[i]) && frequencies_hz[i] > 0.0)) {
      throw std::invalid_argument("frequencies must be positive and finite");
    }
    if (i > 0 && !(frequencies_hz[i] > frequencies_hz[i - 1])) {
      throw std::invalid_argument("frequencies must be strictly increasing");
    }
    if (!std::isfinite(relative_noise_db[i])) throw std::invalid_argument("noise values must be finite");
  }
  if (!std::isfinite(quadrature_rad) || !std::isfinite(detuning_offset_rad_s)) {
    throw std::invalid_argument("quadrature and detuning offset must be finite");
  }
  if (sigma_db && !(std::isfinite(*sigma_db) && *sigma_db > 0.0)) {
    throw std::invalid_argument("sigma_db must be positive");
  }
}

std::string to_string(SharedParameter p) {
  switch (p) {
    case SharedParameter::nonlinear_gain: return "nonlinear_gain";
    case SharedParameter::propagation_loss: return "propagation_loss";
    case SharedParameter::round_trip_loss: return "round_trip_loss";
    case SharedParameter::phase_noise_rms_rad: return "phase_noise_rms_rad";
    case SharedParameter::length_noise_rms_m: return "length_noise_rms_m";
  }
  return "unknown";
}

const std::vector<SharedParameter>& all_shared_parameters() {
  static const std::vector<SharedParameter> all = {
      SharedParameter::nonlinear_gain,      SharedParameter::propagation_loss,  SharedParameter::round_trip_loss,
      SharedParameter::phase_noise_rms_rad, SharedParameter::length_noise_rms_m,
  };
  return all;
}

SharedParameter shared_parameter_from_string(const std::string& name) {
  for (SharedParameter p : all_shared_parameters()) {
    if (to_string(p) == name) return p;
  }
  throw std::invalid_argument("unknown fit parameter '" + name + "'");
}

double get(const SystemParams& params, SharedParameter p) {
  switch (p) {
    case SharedParameter::nonlinear_gain: return params.squeezer.nonlinear_gain;
    case SharedParameter::propagation_loss: return params.budget.propagation_loss;
    case SharedParameter::round_trip_loss: return params.cavity.round_trip_loss;
    case SharedParameter::phase_noise_rms_rad: return params.budget.phase_noise_rms_rad;
    case SharedParameter::length_noise_rms_m: return params.budget.length_noise_rms_m;
  }
  return 0.0;
}

void set(SystemParams& params, SharedParameter p, double value) {
  switch (p) {
    case SharedParameter::nonlinear_gain: params.squeezer.nonlinear_gain = value; break;
    case SharedParameter::propagation_loss: params.budget.propagation_loss = value; break;
    case SharedParameter::round_trip_loss: params.cavity.round_trip_loss = value; break;
    case SharedParameter::phase_noise_rms_rad: params.budget.phase_noise_rms_rad = value; break;
    case SharedParameter::length_noise_rms_m: params.budget.length_noise_rms_m = value; break;
  }
}

ParameterBounds default_bounds(SharedParameter p) {
  switch (p) {
    case SharedParameter::nonlinear_gain: return {1.0, 50.0};
    case SharedParameter::propagation_loss: return {0.0, 0.5};
    case SharedParameter::round_trip_loss: return {0.0, 100e-6};
    case SharedParameter::phase_noise_rms_rad: return {0.0, 0.2};
    case SharedParameter::length_noise_rms_m: return {0.0, 1e-11};
  }
  return {};
}

std::vector<FreeParameter> default_free_parameters() {
  std::vector<FreeParameter> out;
  for (SharedParameter p : all_shared_parameters()) out.push_back({p, default_bounds(p)});
  return out;
}

// ---------------------------------------------------------------------------
// FitProblem

void FitProblem::validate() const {
  if (datasets.empty()) throw std::invalid_argument("fit needs at least one dataset");
  for (const auto& d : datasets) d.validate();
  base.validate();
  for (std::size_t i = 0; i < shared_free.size(); ++i) {
    const auto& fp = shared_free[i];
    if (!(std::isfinite(fp.bounds.lower) && std::isfinite(fp.bounds.upper) && fp.bounds.lower < fp.bounds.upper)) {
      throw std::invalid_argument("bounds of " + to_string(fp.parameter) + " must be finite and ordered");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (shared_free[j].parameter == fp.parameter) {
        throw std::invalid_argument("parameter " + to_string(fp.parameter) + " listed twice");
      }
    }
  }
  if (!(quadrature_half_range_rad > 0.0) || !(detuning_half_range_rad_s > 0.0)) {
    throw std::invalid_argument("per-dataset ranges must be positive");
  }
  if (!(std::isfinite(min_fit_frequency_hz) && min_fit_frequency_hz >= 0.0)) {
    throw std::invalid_argument("min_fit_frequency_hz must be >= 0");
  }
  if (fitted_points() == 0) throw std::invalid_argument("no data points above the minimum fit frequency");
}

Eigen::Index FitProblem::dimension() const {
  const std::size_t per = (fit_quadrature ? 1 : 0) + (fit_detuning ? 1 : 0);
  return static_cast<Eigen::Index>(shared_free.size() + per * datasets.size());
}

std::vector<std::string> FitProblem::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& fp : shared_free) names.push_back(to_string(fp.parameter));
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    if (fit_quadrature) names.push_back("quadrature_rad[" + std::to_string(k) + "]");
    if (fit_detuning) names.push_back("detuning_offset_rad_s[" + std::to_string(k) + "]");
  }
  return names;
}

namespace {

struct Layout {
  Eigen::VectorXd initial, lower, upper;
};

Layout layout(const FitProblem& p) {
  const Eigen::Index n = p.dimension();
  Layout l{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  Eigen::Index i = 0;
  for (const auto& fp : p.shared_free) {
    l.initial(i) = get(p.base, fp.parameter);
    l.lower(i) = fp.bounds.lower;
    l.upper(i) = fp.bounds.upper;
    ++i;
  }
  for (const auto& d : p.datasets) {
    if (p.fit_quadrature) {
      l.initial(i) = d.quadrature_rad;
      l.lower(i) = d.quadrature_rad - p.quadrature_half_range_rad;
      l.upper(i) = d.quadrature_rad + p.quadrature_half_range_rad;
      ++i;
    }
    if (p.fit_detuning) {
      l.initial(i) = d.detuning_offset_rad_s;
      l.lower(i) = d.detuning_offset_rad_s - p.detuning_half_range_rad_s;
      l.upper(i) = d.detuning_offset_rad_s + p.detuning_half_range_rad_s;
      ++i;
    }
  }
  l.initial = l.initial.cwiseMax(l.lower).cwiseMin(l.upper);
  return l;
}

}  // namespace

Eigen::VectorXd FitProblem::initial_vector() const { return layout(*this).initial; }
Eigen::VectorXd FitProblem::lower_bounds() const { return layout(*this).lower; }
Eigen::VectorXd FitProblem::upper_bounds() const { return layout(*this).upper; }

FitProblem::Unpacked FitProblem::unpack(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) throw std::invalid_argument("parameter vector has the wrong size");
  Unpacked u{base, {}, {}};
  Eigen::Index i = 0;
  for (const auto& fp : shared_free) set(u.params, fp.parameter, x(i++));
  for (const auto& d : datasets) {
    u.quadrature_rad.push_back(fit_quadrature ? x(i++) : d.quadrature_rad);
    u.detuning_offset_rad_s.push_back(fit_detuning ? x(i++) : d.detuning_offset_rad_s);
  }
  return u;
}

std::size_t FitProblem::fitted_points() const {
  std::size_t n = 0;
  for (const auto& d : datasets) {
    n += static_cast<std::size_t>(std::count_if(d.frequencies_hz.begin(), d.frequencies_hz.end(),
                                                [&](double f) { return f >= min_fit_frequency_hz; }));
  }
  return n;
}

// ---------------------------------------------------------------------------
// Objective

namespace {

std::vector<double> fitted_frequencies(const SpectrumDataset& d, double fmin) {
  std::vector<double> out;
  for (double f : d.frequencies_hz) {
    if (f >= fmin) out.push_back(f);
  }
  return out;
}

// Unweighted model - data residuals in dB, dataset by dataset.
std::vector<std::vector<double>> db_differences(const FitProblem& problem, const FitProblem::Unpacked& u,
                                                unsigned threads) {
  std::vector<std::vector<double>> out(problem.datasets.size());
  parallel_for(problem.datasets.size(), threads, [&](std::size_t k) {
    const auto& d = problem.datasets[k];
    const auto freqs = fitted_frequencies(d, problem.min_fit_frequency_hz);
    if (freqs.empty()) return;
    const auto model = noise_spectrum(freqs, u.quadrature_rad[k], u.params, u.detuning_offset_rad_s[k]);
    const std::size_t offset = d.frequencies_hz.size() - freqs.size();
    auto& diff = out[k];
    diff.resize(freqs.size());
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      diff[i] = to_db(model[i]) - d.relative_noise_db[offset + i];
    }
  });
  return out;
}

}  // namespace

ResidualEvaluation residuals(const FitProblem& problem, const Eigen::VectorXd& x, unsigned threads) {
  ResidualEvaluation ev;
  ev.residuals.resize(static_cast<Eigen::Index>(problem.fitted_points()));
  try {
    const auto u = problem.unpack(x);
    const auto diffs = db_differences(problem, u, threads);
    Eigen::Index i = 0;
    for (std::size_t k = 0; k < diffs.size(); ++k) {
      const double sigma = problem.datasets[k].sigma_db.value_or(1.0);
      for (double d : diffs[k]) ev.residuals(i++) = d / sigma;
    }
    if (!ev.residuals.allFinite()) throw std::domain_error("non-finite model value");
  } catch (const std::invalid_argument&) {
    ev.penalized = true;
  } catch (const std::domain_error&) {
    ev.penalized = true;
  } catch (const PassivityError&) {
    ev.penalized = true;
  }
  if (ev.penalized) ev.residuals.setConstant(kPenaltyResidualDb);
  return ev;
}

double objective(const FitProblem& problem, const Eigen::VectorXd& x) {
  return residuals(problem, x).residuals.squaredNorm();
}

// ---------------------------------------------------------------------------
// Joint fit

const ParameterEstimate* FitReport::find(const std::string& name) const {
  for (const auto& e : estimates) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Rows are starts, columns are dimensions; every column visits each of the
// `rows` strata exactly once.
Eigen::MatrixXd latin_hypercube(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Eigen::MatrixXd u(rows, cols);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(rows));
  for (Eigen::Index c = 0; c < cols; ++c) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    for (std::size_t i = perm.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(perm[i - 1], perm[j]);
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      u(r, c) = (static_cast<double>(perm[static_cast<std::size_t>(r)]) + unit_uniform(rng)) /
                static_cast<double>(rows);
    }
  }
  return u;
}

}  // namespace

FitReport fit_joint(const FitProblem& problem, const FitOptions& options) {
  problem.validate();
  if (options.n_starts < 1) throw std::invalid_argument("n_starts must be >= 1");

  const Layout l = layout(problem);
  const auto n_shared = static_cast<Eigen::Index>(problem.shared_free.size());

  std::mt19937_64 rng(options.seed);
  const Eigen::MatrixXd lhs = latin_hypercube(options.n_starts - 1, n_shared, rng);
  std::vector<Eigen::VectorXd> starts(static_cast<std::size_t>(options.n_starts), l.initial);
  for (int s = 1; s < options.n_starts; ++s) {
    for (Eigen::Index j = 0; j < n_shared; ++j) {
      starts[static_cast<std::size_t>(s)](j) = l.lower(j) + lhs(s - 1, j) * (l.upper(j) - l.lower(j));
    }
  }

  LeastSquaresOptions ls;
  ls.max_iterations = options.max_iterations;
  ls.relative_step = options.relative_step;

  std::vector<LeastSquaresResult> results(starts.size());
  std::vector<int> penalties(starts.size(), 0);
  parallel_for(starts.size(), options.threads, [&](std::size_t s) {
    int& penalized = penalties[s];
    const ResidualFunction f = [&](const Eigen::VectorXd& x) {
      auto ev = residuals(problem, x);
      if (ev.penalized) ++penalized;
      return ev.residuals;
    };
    results[s] = bounded_levenberg_marquardt(f, starts[s], l.lower, l.upper, ls);
  });

  std::size_t best = 0;
  for (std::size_t s = 1; s < results.size(); ++s) {
    if (results[s].cost < results[best].cost) best = s;
  }
  const LeastSquaresResult& r = results[best];

  FitReport report;
  report.seed = options.seed;
  report.n_starts = options.n_starts;
  report.best_start = static_cast<int>(best);
  report.chi_square = r.cost;
  report.points = static_cast<std::size_t>(r.residuals.size());
  report.degrees_of_freedom =
      report.points > static_cast<std::size_t>(r.x.size()) ? report.points - static_cast<std::size_t>(r.x.size()) : 0;
  report.iterations = r.iterations;
  report.termination = to_string(r.termination);
  report.converged = converged(r.termination);
  report.penalized_evaluations = std::accumulate(penalties.begin(), penalties.end(), 0);
  for (const auto& s : results) report.starts.push_back({s.cost, s.iterations, to_string(s.termination)});

  const Eigen::MatrixXd cov = parameter_covariance(r.jacobian, r.cost, options.relative_step);
  auto stderr_of = [&](Eigen::Index i) { return std::sqrt(std::max(cov(i, i), 0.0)); };

  Eigen::Index i = 0;
  for (const auto& fp : problem.shared_free) {
    report.estimates.push_back({to_string(fp.parameter), r.x(i), stderr_of(i), fp.bounds.lower, fp.bounds.upper});
    ++i;
  }
  const auto u = problem.unpack(r.x);
  const auto diffs = db_differences(problem, u, 1);
  for (std::size_t k = 0; k < problem.datasets.size(); ++k) {
    DatasetFit d;
    d.quadrature_rad = u.quadrature_rad[k];
    d.detuning_offset_rad_s = u.detuning_offset_rad_s[k];
    if (problem.fit_quadrature) d.quadrature_stderr_rad = stderr_of(i++);
    if (problem.fit_detuning) d.detuning_stderr_rad_s = stderr_of(i++);
    d.points = diffs[k].size();
    double ss = 0.0;
    for (double v : diffs[k]) ss += v * v;
    d.residual_rms_db = d.points ? std::sqrt(ss / static_cast<double>(d.points)) : 0.0;
    report.datasets.push_back(d);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic data

std::vector<SpectrumDataset> synthesize(const SystemParams& truth, std::span<const double> quadratures_rad,
                                        std::span<const double> detuning_offsets_rad_s,
                                        std::span<const double> freqs_hz, double noise_db_rms, std::uint64_t seed,
                                        unsigned threads) {
  if (!(noise_db_rms >= 0.0)) throw std::invalid_argument("noise_db_rms must be >= 0");
  if (!detuning_offsets_rad_s.empty() && detuning_offsets_rad_s.size() != quadratures_rad.size()) {
    throw std::invalid_argument("one detuning offset per quadrature required");
  }
  std::vector<SpectrumDataset> out(quadratures_rad.size());
  parallel_for(out.size(), threads, [&](std::size_t k) {
    auto& d = out[k];
    d.quadrature_rad = quadratures_rad[k];
    d.detuning_offset_rad_s = detuning_offsets_rad_s.empty() ? 0.0 : detuning_offsets_rad_s[k];
    d.frequencies_hz.assign(freqs_hz.begin(), freqs_hz.end());
    const auto model = noise_spectrum(freqs_hz, d.quadrature_rad, truth, d.detuning_offset_rad_s);
    d.relative_noise_db.resize(model.size());
    std::transform(model.begin(), model.end(), d.relative_noise_db.begin(), to_db);
  });
  if (noise_db_rms > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise_db_rms);
    for (auto& d : out) {
      for (double& v : d.relative_noise_db) v += gauss(rng);
    }
  }
  for (const auto& d : out) d.validate();
  return out;
}

}  // namespace fdsqz
