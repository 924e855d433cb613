#pragma once

// Closed-form filter cavity design relations.

#include <optional>

#include "fdsqz/types.hpp"

namespace fdsqz {

struct CavityDesignSummary {
  double length_m = 0.0;
  double finesse = 0.0;
  double half_linewidth_rad_s = 0.0;
  double storage_time_s = 0.0;
  double round_trip_loss = 0.0;
  double decoherence_time_s = 0.0;  // +inf for a lossless cavity
  double rotation_frequency_hz = 0.0;
  std::optional<double> input_transmissivity;  // when 2 pi / F - L_rt is meaningful

  bool decoherence_unbounded() const { return !std::isfinite(decoherence_time_s); }
};

/// gamma_fc = pi c / (2 L F), in rad/s.
double half_linewidth(double length_m, double finesse);

/// tau_storage = 1 / gamma_fc.
double storage_time(double half_linewidth_rad_s);

/// tau_dec = -2 L / (c ln(1 - L_rt)). Returns +inf for L_rt <= 0.
double decoherence_time(double length_m, double round_trip_loss);

/// Detuning that produces a 90 degree rotation: the half linewidth itself.
double detuning_for_90deg(double half_linewidth_rad_s);

/// RMS detuning fluctuation caused by RMS length noise:
/// (2 pi c / lambda) (dL / L).
double length_noise_to_detuning_rms(double length_noise_rms_m, double length_m,
                                    double wavelength_m = kDefaultWavelength);

/// Finesse that gives `storage_time_s` at `length_m`.
double finesse_for_storage_time(double storage_time_s, double length_m);

/// Round-trip loss that gives `decoherence_time_s` at `length_m`.
double round_trip_loss_for_decoherence(double length_m, double decoherence_time_s);

/// Full summary of a cavity of given length, finesse and round-trip loss.
CavityDesignSummary summarize_design(double length_m, double finesse, double round_trip_loss);

/// Design for a target storage time: finesse from the linewidth relation,
/// decoherence time from the loss. Rejects designs whose finesse is <= 1.
CavityDesignSummary scale_design(double target_storage_s, double length_m, double round_trip_loss);

}  // namespace fdsqz
