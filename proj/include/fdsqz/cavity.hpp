#pragma once

#include <complex>
#include <numbers>

#include "fdsqz/quadrature.hpp"
#include "fdsqz/types.hpp"

namespace fdsqz {

/// Amplitude reflectivity of the filter cavity for a field offset by
/// `offset_rad_s` from resonance (+Omega - Delta for the upper sideband,
/// -Omega - Delta for the lower one):
///
///   r = (-r_in + a e^{i phi}) / (1 - r_in a e^{i phi}),  phi = 2 L offset / c
///
/// with r_in = sqrt(1 - T_in) and a = sqrt(1 - L_rt).
template <typename Scalar = double>
std::complex<Scalar> cavity_reflectivity(const CavityParams& cavity, Scalar offset_rad_s) {
  using C = std::complex<Scalar>;
  const Scalar t_in = cavity.input_transmissivity;
  const Scalar loss = cavity.round_trip_loss;
  const Scalar r_in = std::sqrt(Scalar(1) - t_in);
  const Scalar a = std::sqrt(Scalar(1) - loss);
  const Scalar phi = Scalar(2) * Scalar(cavity.length_m) * offset_rad_s / Scalar(kSpeedOfLight);
  // Written in terms of 1 - r_in, 1 - a and e^{i phi} - 1 so that nothing
  // cancels near resonance of a high-finesse cavity.
  const Scalar one_minus_r = t_in / (Scalar(1) + r_in);
  const Scalar one_minus_a = loss / (Scalar(1) + a);
  const Scalar half = phi / Scalar(2);
  const C expm1_phase(Scalar(-2) * std::sin(half) * std::sin(half), std::sin(phi));
  const C round_trip_minus_one = a * expm1_phase - one_minus_a;
  return (one_minus_r + round_trip_minus_one) / (one_minus_r - r_in * round_trip_minus_one);
}

/// Phase of the reflectivity far from resonance (half a free spectral range
/// away), where the field is promptly reflected by the input coupler.
inline double prompt_reflection_phase() { return std::numbers::pi; }

/// Reflectivity seen by the readout mode when only a power fraction
/// `mode_coupling` of the squeezed field couples to the cavity. The rest is
/// promptly reflected with an extra phase `mismatch_phase_rad`. Throws
/// PassivityError if the composition exceeds unit magnitude.
template <typename Scalar = double>
std::complex<Scalar> effective_reflectivity(const CavityParams& cavity, const DegradationBudget& budget,
                                            Scalar offset_rad_s) {
  const Scalar c0 = budget.mode_coupling;
  const std::complex<Scalar> r = cavity_reflectivity<Scalar>(cavity, offset_rad_s);
  if (c0 == Scalar(1)) return r;
  const std::complex<Scalar> prompt =
      std::polar(Scalar(1), Scalar(prompt_reflection_phase() + budget.mismatch_phase_rad));
  const std::complex<Scalar> r_eff = c0 * r + (Scalar(1) - c0) * prompt;
  if (std::abs(r_eff) > Scalar(1) + Scalar(kPassivityTolerance)) {
    throw PassivityError("mode-mismatch composition gives |r_eff| > 1");
  }
  return r_eff;
}

/// Quadrature transfer for the sideband pair at +-Omega around a carrier
/// detuned by `detuning_rad_s`.
template <typename Scalar = double>
Transfer<Scalar> cavity_transfer(const CavityParams& cavity, const DegradationBudget& budget,
                                 Scalar omega_rad_s, Scalar detuning_rad_s) {
  return quadrature_transfer(effective_reflectivity<Scalar>(cavity, budget, omega_rad_s - detuning_rad_s),
                             effective_reflectivity<Scalar>(cavity, budget, -omega_rad_s - detuning_rad_s));
}

}  // namespace fdsqz
