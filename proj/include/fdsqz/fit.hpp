#pragma once

// Joint least-squares estimation of shared physical parameters across
// several noise spectra, each with its own readout quadrature and detuning
// offset. Residuals are taken in dB.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fdsqz/least_squares.hpp"
#include "fdsqz/types.hpp"

namespace fdsqz {

/// A noise-vs-frequency trace at one readout quadrature.
struct SpectrumDataset {
  std::vector<double> frequencies_hz;
  std::vector<double> relative_noise_db;
  double quadrature_rad = 0.0;
  double detuning_offset_rad_s = 0.0;  // offset from the nominal cavity detuning
  std::optional<double> sigma_db;      // uniform per-point uncertainty

  void validate() const;
};

/// Shared physical parameters that can be fitted.
enum class SharedParameter {
  nonlinear_gain,
  propagation_loss,
  round_trip_loss,
  phase_noise_rms_rad,
  length_noise_rms_m,
};

std::string to_string(SharedParameter p);
/// Throws std::invalid_argument for unknown names.
SharedParameter shared_parameter_from_string(const std::string& name);
const std::vector<SharedParameter>& all_shared_parameters();

double get(const SystemParams& params, SharedParameter p);
void set(SystemParams& params, SharedParameter p, double value);

struct ParameterBounds {
  double lower = 0.0;
  double upper = 0.0;
};

ParameterBounds default_bounds(SharedParameter p);

struct FreeParameter {
  SharedParameter parameter;
  ParameterBounds bounds;
};

/// The free parameters flagged as fit-determined in the demonstration's
/// parameter table.
std::vector<FreeParameter> default_free_parameters();

struct FitProblem {
  std::vector<SpectrumDataset> datasets;
  SystemParams base;                     // fixed values and starting values
  std::vector<FreeParameter> shared_free = default_free_parameters();
  bool fit_quadrature = true;            // per-dataset phi
  bool fit_detuning = true;              // per-dataset detuning offset
  double quadrature_half_range_rad = 1.5707963267948966;
  double detuning_half_range_rad_s = 2.0 * 3.141592653589793 * 250.0;
  double min_fit_frequency_hz = 300.0;

  void validate() const;

  Eigen::Index dimension() const;
  std::vector<std::string> parameter_names() const;
  Eigen::VectorXd initial_vector() const;
  Eigen::VectorXd lower_bounds() const;
  Eigen::VectorXd upper_bounds() const;

  /// Model inputs for a parameter vector: shared system parameters plus the
  /// (quadrature, detuning offset) of each dataset.
  struct Unpacked {
    SystemParams params;
    std::vector<double> quadrature_rad;
    std::vector<double> detuning_offset_rad_s;
  };
  Unpacked unpack(const Eigen::VectorXd& x) const;

  /// Number of data points at or above the minimum fit frequency.
  std::size_t fitted_points() const;
};

/// Weighted dB residuals over every fitted point, in dataset order.
/// A model failure yields `penalty_db` for every residual.
struct ResidualEvaluation {
  Eigen::VectorXd residuals;
  bool penalized = false;
};

inline constexpr double kPenaltyResidualDb = 1e3;

ResidualEvaluation residuals(const FitProblem& problem, const Eigen::VectorXd& x, unsigned threads = 1);

/// Sum of squared weighted dB residuals over points at or above the
/// minimum fit frequency.
double objective(const FitProblem& problem, const Eigen::VectorXd& x);

struct FitOptions {
  std::uint64_t seed = 0;
  int n_starts = 8;
  int max_iterations = 200;
  double relative_step = 1e-4;
  unsigned threads = 1;
};

struct ParameterEstimate {
  std::string name;
  double value = 0.0;
  double standard_error = 0.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;

  double ci95_low() const { return value - 1.959963984540054 * standard_error; }
  double ci95_high() const { return value + 1.959963984540054 * standard_error; }
};

struct DatasetFit {
  double quadrature_rad = 0.0;
  double quadrature_stderr_rad = 0.0;
  double detuning_offset_rad_s = 0.0;
  double detuning_stderr_rad_s = 0.0;
  double residual_rms_db = 0.0;
  std::size_t points = 0;
};

struct StartSummary {
  double chi_square = 0.0;
  int iterations = 0;
  std::string termination;
};

struct FitReport {
  std::vector<ParameterEstimate> estimates;  // shared parameters
  std::vector<DatasetFit> datasets;
  double chi_square = 0.0;
  std::size_t points = 0;
  std::size_t degrees_of_freedom = 0;
  int iterations = 0;
  std::string termination;
  bool converged = false;
  int best_start = 0;
  int n_starts = 0;
  std::uint64_t seed = 0;
  int penalized_evaluations = 0;
  std::vector<StartSummary> starts;

  const ParameterEstimate* find(const std::string& name) const;
};

/// Multi-start bounded Levenberg-Marquardt. Start 0 uses the problem's
/// initial values; the others draw the shared parameters from a Latin
/// hypercube over their bounds. Deterministic in (problem, seed, n_starts).
FitReport fit_joint(const FitProblem& problem, const FitOptions& options = {});

/// Model spectra at the given quadratures and detuning offsets, plus i.i.d.
/// Gaussian perturbations of `noise_db_rms` dB. Deterministic per seed.
std::vector<SpectrumDataset> synthesize(const SystemParams& truth, std::span<const double> quadratures_rad,
                                        std::span<const double> detuning_offsets_rad_s,
                                        std::span<const double> freqs_hz, double noise_db_rms,
                                        std::uint64_t seed, unsigned threads = 1);

}  // namespace fdsqz
