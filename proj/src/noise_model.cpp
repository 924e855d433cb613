#include "fdsqz/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fdsqz/cavity.hpp"
#include "fdsqz/design.hpp"
#include "fdsqz/parallel.hpp"

namespace fdsqz {
namespace {

constexpr double kPi = std::numbers::pi;

void check_frequency(double freq_hz) {
  if (!(std::isfinite(freq_hz) && freq_hz > 0.0)) throw std::invalid_argument("frequency must be positive");
}

// Shared per-call state: the quadrature rule and the loss-degraded OPO
// covariance do not depend on frequency.
class Evaluator {
 public:
  explicit Evaluator(const SystemParams& params)
      : params_(params), rule_(gauss_hermite_rule(params.options.quadrature_nodes)) {
    params_.validate();
    injected_ = apply_loss(opo_output_covariance(params_.squeezer), params_.budget.propagation_loss);
    detuning_rms_ = length_noise_to_detuning_rms(params_.budget.length_noise_rms_m, params_.cavity.length_m,
                                                 params_.cavity.wavelength_m);
  }

  const GaussHermiteRule& rule() const { return rule_; }
  double phase_rms() const { return params_.budget.phase_noise_rms_rad; }

  QuadratureCovariance at_detuning(double freq_hz, double detuning_rad_s) const {
    const double omega = hz_to_rad_s(freq_hz);
    const QuadratureTransfer t = cavity_transfer(params_.cavity, params_.budget, omega, detuning_rad_s);
    return apply_loss(reflected_covariance(injected_, t), params_.budget.readout_loss());
  }

  QuadratureCovariance averaged(double freq_hz, double detuning_offset_rad_s) const {
    check_frequency(freq_hz);
    const double nominal = params_.cavity.detuning_rad_s + detuning_offset_rad_s;
    if (detuning_rms_ == 0.0) return at_detuning(freq_hz, nominal);
    QuadratureCovariance acc = QuadratureCovariance::Zero();
    for (Eigen::Index i = 0; i < rule_.size(); ++i) {
      acc += rule_.weights(i) * at_detuning(freq_hz, nominal + detuning_rms_ * rule_.nodes(i));
    }
    return acc;
  }

  double noise(const QuadratureCovariance& v, double quadrature_rad) const {
    return jittered_projection(v, quadrature_rad, phase_rms(), rule_);
  }

  QuadratureOptimum minimize(const QuadratureCovariance& v) const {
    // The jitter-averaged projection is a sinusoid in 2 phi, so a coarse scan
    // brackets the unique minimum and golden-section search refines it.
    constexpr int kScan = 64;
    const double step = kPi / kScan;
    int best = 0;
    double best_val = noise(v, 0.0);
    for (int k = 1; k < kScan; ++k) {
      const double val = noise(v, k * step);
      if (val < best_val) {
        best_val = val;
        best = k;
      }
    }
    double lo = (best - 1) * step;
    double hi = (best + 1) * step;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = noise(v, x1);
    double f2 = noise(v, x2);
    while (hi - lo > 1e-10) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - inv_phi * (hi - lo);
        f1 = noise(v, x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + inv_phi * (hi - lo);
        f2 = noise(v, x2);
      }
    }
    QuadratureOptimum opt;
    opt.quadrature_rad = 0.5 * (lo + hi);
    opt.noise = noise(v, opt.quadrature_rad);
    if (best_val < opt.noise) {
      opt.noise = best_val;
      opt.quadrature_rad = best * step;
    }
    opt.quadrature_rad = std::fmod(opt.quadrature_rad + kPi, kPi);
    return opt;
  }

 private:
  SystemParams params_;
  GaussHermiteRule rule_;
  QuadratureCovariance injected_;
  double detuning_rms_ = 0.0;
};

// Unwraps angles that are only defined modulo `period`.
void unwrap(std::vector<double>& angles, double period) {
  for (std::size_t i = 1; i < angles.size(); ++i) {
    const double jump = angles[i] - angles[i - 1];
    angles[i] -= period * std::round(jump / period);
  }
}

void check_grid(std::span<const double> freqs_hz) {
  if (freqs_hz.empty()) throw std::invalid_argument("frequency grid is empty");
}

}  // namespace

QuadratureCovariance readout_covariance(double freq_hz, const SystemParams& params, double detuning_rad_s) {
  check_frequency(freq_hz);
  return Evaluator(params).at_detuning(freq_hz, detuning_rad_s);
}

QuadratureCovariance averaged_readout_covariance(double freq_hz, const SystemParams& params,
                                                 double detuning_offset_rad_s) {
  return Evaluator(params).averaged(freq_hz, detuning_offset_rad_s);
}

double jittered_projection(const QuadratureCovariance& V, double quadrature_rad, double sigma_rad,
                           const GaussHermiteRule& rule) {
  if (sigma_rad == 0.0) return project(V, quadrature_rad);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < rule.size(); ++j) {
    acc += rule.weights(j) * project(V, quadrature_rad + sigma_rad * rule.nodes(j));
  }
  return acc;
}

double measured_noise(double freq_hz, double quadrature_rad, const SystemParams& params,
                      double detuning_offset_rad_s) {
  const Evaluator ev(params);
  return ev.noise(ev.averaged(freq_hz, detuning_offset_rad_s), quadrature_rad);
}

double measured_noise(double freq_hz, double quadrature_rad, const CavityParams& cavity,
                      const SqueezerParams& squeezer, const DegradationBudget& budget) {
  return measured_noise(freq_hz, quadrature_rad, SystemParams{cavity, squeezer, budget, {}});
}

double frequency_independent_noise(double quadrature_rad, const SystemParams& params) {
  params.validate();
  const auto& b = params.budget;
  const QuadratureCovariance v =
      apply_loss(apply_loss(opo_output_covariance(params.squeezer), b.propagation_loss), b.readout_loss());
  return jittered_projection(v, quadrature_rad, b.phase_noise_rms_rad,
                             gauss_hermite_rule(params.options.quadrature_nodes));
}

std::vector<double> noise_spectrum(std::span<const double> freqs_hz, double quadrature_rad,
                                   const SystemParams& params, double detuning_offset_rad_s, unsigned threads) {
  check_grid(freqs_hz);
  const Evaluator ev(params);
  std::vector<double> out(freqs_hz.size());
  parallel_for(freqs_hz.size(), threads, [&](std::size_t i) {
    out[i] = ev.noise(ev.averaged(freqs_hz[i], detuning_offset_rad_s), quadrature_rad);
  });
  return out;
}

QuadratureOptimum optimal_quadrature(double freq_hz, const SystemParams& params, double detuning_offset_rad_s) {
  const Evaluator ev(params);
  return ev.minimize(ev.averaged(freq_hz, detuning_offset_rad_s));
}

std::vector<double> lower_envelope(std::span<const double> freqs_hz, const SystemParams& params,
                                   unsigned threads) {
  check_grid(freqs_hz);
  const Evaluator ev(params);
  std::vector<double> out(freqs_hz.size());
  parallel_for(freqs_hz.size(), threads,
               [&](std::size_t i) { out[i] = ev.minimize(ev.averaged(freqs_hz[i], 0.0)).noise; });
  return out;
}

std::vector<double> rotation_angle(std::span<const double> freqs_hz, const CavityParams& cavity) {
  CavityParams lossless = cavity;
  lossless.round_trip_loss = 0.0;
  lossless.validate();
  std::vector<double> out;
  out.reserve(freqs_hz.size());
  for (double f : freqs_hz) {
    check_frequency(f);
    const double omega = hz_to_rad_s(f);
    // Lossless reflection: T = e^{i alpha} R(theta), theta the mean sideband phase.
    const double upper = std::arg(cavity_reflectivity(lossless, omega - lossless.detuning_rad_s));
    const double lower = std::arg(cavity_reflectivity(lossless, -omega - lossless.detuning_rad_s));
    out.push_back(0.5 * (upper + lower));
  }
  unwrap(out, kPi);
  return out;
}

std::vector<double> squeezing_angle(std::span<const double> freqs_hz, const SystemParams& params) {
  const Evaluator ev(params);
  std::vector<double> out;
  out.reserve(freqs_hz.size());
  for (double f : freqs_hz) out.push_back(min_noise_angle(ev.averaged(f, 0.0)));
  unwrap(out, kPi);
  return out;
}

std::vector<double> log_grid(double fmin_hz, double fmax_hz, std::size_t n) {
  if (!(fmin_hz > 0.0 && fmax_hz > fmin_hz)) throw std::invalid_argument("need 0 < fmin < fmax");
  if (n < 2) throw std::invalid_argument("grid needs at least two points");
  std::vector<double> grid(n);
  const double lo = std::log(fmin_hz);
  const double span = std::log(fmax_hz) - lo;
  for (std::size_t i = 0; i < n; ++i) grid[i] = std::exp(lo + span * static_cast<double>(i) / (n - 1));
  grid.front() = fmin_hz;
  grid.back() = fmax_hz;
  return grid;
}

}  // namespace fdsqz
