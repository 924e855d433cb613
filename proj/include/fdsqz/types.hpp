#pragma once

// Physical parameter bundles for a squeezed-vacuum source reflected off a
// detuned filter cavity and read out by balanced homodyne detection.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fdsqz {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s, exact SI
inline constexpr double kDefaultWavelength = 1064e-9;  // m

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }
inline constexpr double hz_to_rad_s(double hz) { return 2.0 * std::numbers::pi * hz; }
inline constexpr double rad_s_to_hz(double w) { return w / (2.0 * std::numbers::pi); }

inline double to_db(double linear) { return 10.0 * std::log10(linear); }
inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

/// Raised when a parameter bundle violates one of its invariants. `field()`
/// names the offending member, e.g. "escape_efficiency".
class InvalidParameter : public std::invalid_argument {
 public:
  InvalidParameter(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Single-ended Fabry-Perot filter cavity. The end-mirror transmission is
/// folded into `round_trip_loss`.
struct CavityParams {
  double length_m = 1.0;
  double input_transmissivity = 1e-4;
  double round_trip_loss = 0.0;
  double detuning_rad_s = 0.0;  // carrier offset from resonance, signed
  double wavelength_m = kDefaultWavelength;

  double finesse() const { return 2.0 * std::numbers::pi / (input_transmissivity + round_trip_loss); }
  double half_linewidth_rad_s() const {
    return std::numbers::pi * kSpeedOfLight / (2.0 * length_m * finesse());
  }

  void validate() const;
};

struct SqueezerParams {
  double nonlinear_gain = 1.0;
  double escape_efficiency = 1.0;
  double squeeze_angle_rad = 0.0;  // orientation of the squeezed quadrature

  /// Normalized pump amplitude x = 1 - 1/sqrt(gain), in [0, 1).
  double pump_amplitude() const { return 1.0 - 1.0 / std::sqrt(nonlinear_gain); }

  void validate() const;
};

/// Everything that degrades the state between the OPO and the photodiodes.
struct DegradationBudget {
  double propagation_loss = 0.0;
  double homodyne_visibility = 1.0;  // amplitude overlap; enters squared
  double quantum_efficiency = 1.0;
  double mode_coupling = 1.0;  // power overlap of squeezed field with cavity mode
  double phase_noise_rms_rad = 0.0;
  double length_noise_rms_m = 0.0;
  double mismatch_phase_rad = 0.0;

  /// Loss applied at the readout: 1 - visibility^2 * quantum_efficiency.
  double readout_loss() const {
    return 1.0 - homodyne_visibility * homodyne_visibility * quantum_efficiency;
  }

  void validate() const;
};

/// Product of every frequency-independent efficiency from OPO to photodiode.
inline double detection_efficiency(const SqueezerParams& sq, const DegradationBudget& b) {
  return sq.escape_efficiency * (1.0 - b.propagation_loss) * b.homodyne_visibility *
         b.homodyne_visibility * b.quantum_efficiency;
}

/// Numerical settings of the noise model.
struct ModelOptions {
  int quadrature_nodes = 7;  // Gauss-Hermite nodes per jitter dimension

  void validate() const;
};

/// The full set of physical inputs to the noise model.
struct SystemParams {
  CavityParams cavity;
  SqueezerParams squeezer;
  DegradationBudget budget;
  ModelOptions options;

  void validate() const;
};

}  // namespace fdsqz
