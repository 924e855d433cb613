#pragma once

// Homodyne noise of a squeezed vacuum reflected off a lossy, detuned filter
// cavity, relative to shot noise (linear units, vacuum = 1).
//
// Pipeline for one sideband frequency:
//   OPO covariance -> propagation loss -> cavity reflection (with mode
//   mismatch) -> readout loss (1 - visibility^2 * QE) -> average over
//   Gaussian detuning jitter and quadrature jitter -> project on readout.

#include <cstddef>
#include <span>
#include <vector>

#include "fdsqz/gauss_hermite.hpp"
#include "fdsqz/quadrature.hpp"
#include "fdsqz/types.hpp"

namespace fdsqz {

/// Readout covariance at one frequency for an exact cavity detuning.
QuadratureCovariance readout_covariance(double freq_hz, const SystemParams& params, double detuning_rad_s);

/// Readout covariance averaged over the detuning jitter implied by the
/// cavity length noise. `detuning_offset_rad_s` shifts the nominal detuning.
QuadratureCovariance averaged_readout_covariance(double freq_hz, const SystemParams& params,
                                                 double detuning_offset_rad_s = 0.0);

/// E[b(phi + sigma X)^T V b(phi + sigma X)] for standard normal X.
double jittered_projection(const QuadratureCovariance& V, double quadrature_rad, double sigma_rad,
                           const GaussHermiteRule& rule);

/// Noise relative to shot noise at `freq_hz` (> 0) and readout quadrature.
double measured_noise(double freq_hz, double quadrature_rad, const SystemParams& params,
                      double detuning_offset_rad_s = 0.0);

double measured_noise(double freq_hz, double quadrature_rad, const CavityParams& cavity,
                      const SqueezerParams& squeezer, const DegradationBudget& budget);

/// Same pipeline with the filter cavity removed: frequency independent.
double frequency_independent_noise(double quadrature_rad, const SystemParams& params);

/// measured_noise over a frequency grid.
std::vector<double> noise_spectrum(std::span<const double> freqs_hz, double quadrature_rad,
                                   const SystemParams& params, double detuning_offset_rad_s = 0.0,
                                   unsigned threads = 1);

struct QuadratureOptimum {
  double noise = 0.0;
  double quadrature_rad = 0.0;  // in [0, pi)
};

/// Minimum of the measured noise over readout quadratures at one frequency.
QuadratureOptimum optimal_quadrature(double freq_hz, const SystemParams& params,
                                     double detuning_offset_rad_s = 0.0);

/// Pointwise minimum over quadratures of the noise spectrum.
std::vector<double> lower_envelope(std::span<const double> freqs_hz, const SystemParams& params,
                                   unsigned threads = 1);

/// Rotation of the reflected quadratures for a lossless version of
/// `cavity`, unwrapped across the grid (radians).
std::vector<double> rotation_angle(std::span<const double> freqs_hz, const CavityParams& cavity);

/// Orientation of the minimum-noise quadrature of the full (lossy,
/// jitter-averaged) readout state, unwrapped across the grid (radians).
std::vector<double> squeezing_angle(std::span<const double> freqs_hz, const SystemParams& params);

/// n log-spaced points from fmin to fmax inclusive.
std::vector<double> log_grid(double fmin_hz, double fmax_hz, std::size_t n);

}  // namespace fdsqz
