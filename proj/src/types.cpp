#include "fdsqz/types.hpp"

namespace fdsqz {
namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw InvalidParameter(field, what);
}

bool fraction(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void CavityParams::validate() const {
  require(std::isfinite(length_m) && length_m > 0.0, "cavity.length_m", "must be positive");
  require(input_transmissivity > 0.0 && input_transmissivity < 1.0, "cavity.input_transmissivity",
          "must lie in (0, 1)");
  require(round_trip_loss >= 0.0 && round_trip_loss < 1.0, "cavity.round_trip_loss", "must lie in [0, 1)");
  require(std::isfinite(detuning_rad_s), "cavity.detuning_rad_s", "must be finite");
  require(std::isfinite(wavelength_m) && wavelength_m > 0.0, "cavity.wavelength_m", "must be positive");
  const double f = finesse();
  require(std::isfinite(f) && f > 1.0, "cavity.input_transmissivity", "finesse must be finite and > 1");
}

void SqueezerParams::validate() const {
  require(std::isfinite(nonlinear_gain) && nonlinear_gain >= 1.0, "squeezer.nonlinear_gain", "must be >= 1");
  require(escape_efficiency > 0.0 && escape_efficiency <= 1.0, "squeezer.escape_efficiency",
          "must lie in (0, 1]");
  require(std::isfinite(squeeze_angle_rad), "squeezer.squeeze_angle_rad", "must be finite");
}

void DegradationBudget::validate() const {
  require(fraction(propagation_loss), "budget.propagation_loss", "must lie in [0, 1]");
  require(fraction(homodyne_visibility), "budget.homodyne_visibility", "must lie in [0, 1]");
  require(fraction(quantum_efficiency), "budget.quantum_efficiency", "must lie in [0, 1]");
  require(fraction(mode_coupling), "budget.mode_coupling", "must lie in [0, 1]");
  require(std::isfinite(phase_noise_rms_rad) && phase_noise_rms_rad >= 0.0, "budget.phase_noise_rms_rad",
          "must be >= 0");
  require(std::isfinite(length_noise_rms_m) && length_noise_rms_m >= 0.0, "budget.length_noise_rms_m",
          "must be >= 0");
  require(std::isfinite(mismatch_phase_rad), "budget.mismatch_phase_rad", "must be finite");
}

void ModelOptions::validate() const {
  require(quadrature_nodes >= 1 && quadrature_nodes <= 100, "model.quadrature_nodes", "must lie in [1, 100]");
}

void SystemParams::validate() const {
  cavity.validate();
  squeezer.validate();
  budget.validate();
  options.validate();
  const double eta = detection_efficiency(squeezer, budget);
  require(eta > 0.0 && eta <= 1.0, "budget", "detection efficiency must lie in (0, 1]");
}

}  // namespace fdsqz
