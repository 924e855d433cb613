#include "fdsqz/design.hpp"

#include <limits>
#include <numbers>
#include <stdexcept>

namespace fdsqz {
namespace {

void positive(double v, const char* name) {
  if (!(std::isfinite(v) && v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
}

}  // namespace

double half_linewidth(double length_m, double finesse) {
  positive(length_m, "length");
  if (!(std::isfinite(finesse) && finesse > 1.0)) throw std::invalid_argument("finesse must be > 1");
  return std::numbers::pi * kSpeedOfLight / (2.0 * length_m * finesse);
}

double storage_time(double half_linewidth_rad_s) {
  positive(half_linewidth_rad_s, "half linewidth");
  return 1.0 / half_linewidth_rad_s;
}

double decoherence_time(double length_m, double round_trip_loss) {
  positive(length_m, "length");
  if (!(round_trip_loss < 1.0)) throw std::invalid_argument("round-trip loss must be < 1");
  if (round_trip_loss <= 0.0) return std::numeric_limits<double>::infinity();
  return -2.0 * length_m / (kSpeedOfLight * std::log1p(-round_trip_loss));
}

double detuning_for_90deg(double half_linewidth_rad_s) {
  positive(half_linewidth_rad_s, "half linewidth");
  return half_linewidth_rad_s;
}

double length_noise_to_detuning_rms(double length_noise_rms_m, double length_m, double wavelength_m) {
  if (!(length_noise_rms_m >= 0.0)) throw std::invalid_argument("length noise must be >= 0");
  positive(length_m, "length");
  positive(wavelength_m, "wavelength");
  return 2.0 * std::numbers::pi * kSpeedOfLight / wavelength_m * (length_noise_rms_m / length_m);
}

double finesse_for_storage_time(double storage_time_s, double length_m) {
  positive(storage_time_s, "storage time");
  positive(length_m, "length");
  return std::numbers::pi * kSpeedOfLight * storage_time_s / (2.0 * length_m);
}

double round_trip_loss_for_decoherence(double length_m, double decoherence_time_s) {
  positive(length_m, "length");
  positive(decoherence_time_s, "decoherence time");
  return -std::expm1(-2.0 * length_m / (kSpeedOfLight * decoherence_time_s));
}

CavityDesignSummary summarize_design(double length_m, double finesse, double round_trip_loss) {
  if (!(round_trip_loss >= 0.0)) throw std::invalid_argument("round-trip loss must be >= 0");
  CavityDesignSummary s;
  s.length_m = length_m;
  s.finesse = finesse;
  s.half_linewidth_rad_s = half_linewidth(length_m, finesse);
  s.storage_time_s = storage_time(s.half_linewidth_rad_s);
  s.round_trip_loss = round_trip_loss;
  s.decoherence_time_s = decoherence_time(length_m, round_trip_loss);
  s.rotation_frequency_hz = rad_s_to_hz(s.half_linewidth_rad_s);
  const double t_in = 2.0 * std::numbers::pi / finesse - round_trip_loss;
  if (t_in > 0.0 && t_in < 1.0) s.input_transmissivity = t_in;
  return s;
}

CavityDesignSummary scale_design(double target_storage_s, double length_m, double round_trip_loss) {
  const double f = finesse_for_storage_time(target_storage_s, length_m);
  if (!(f > 1.0)) throw std::invalid_argument("storage time too short: finesse would be <= 1");
  return summarize_design(length_m, f, round_trip_loss);
}

}  // namespace fdsqz
