#pragma once

// Two-photon (quadrature) picture of a single sideband pair at frequency
// Omega. Covariances are normalized so that vacuum is the identity.

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>

#include "fdsqz/types.hpp"

namespace fdsqz {

template <typename Scalar>
using Covariance = Eigen::Matrix<Scalar, 2, 2>;

template <typename Scalar>
using Transfer = Eigen::Matrix<std::complex<Scalar>, 2, 2>;

using QuadratureCovariance = Covariance<double>;
using QuadratureTransfer = Transfer<double>;

inline constexpr double kPassivityTolerance = 1e-12;

/// Thrown when a transfer matrix would amplify vacuum, i.e. I - T T^dagger
/// has a negative eigenvalue beyond tolerance.
class PassivityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 2> rotation(Scalar angle) {
  using std::cos;
  using std::sin;
  Eigen::Matrix<Scalar, 2, 2> r;
  r << cos(angle), -sin(angle), sin(angle), cos(angle);
  return r;
}

/// Unit readout vector b = (cos phi, sin phi).
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> readout_vector(Scalar phi) {
  using std::cos;
  using std::sin;
  return {cos(phi), sin(phi)};
}

/// Noise seen by a homodyne detector reading quadrature phi: b^T V b.
template <typename Derived>
typename Derived::Scalar project(const Eigen::MatrixBase<Derived>& V, typename Derived::Scalar phi) {
  const auto b = readout_vector(phi);
  return b.dot(V * b);
}

/// Matrix taking the sideband basis (a(+Omega), a^dagger(-Omega)) to the
/// amplitude/phase quadrature basis.
template <typename Scalar>
Transfer<Scalar> sideband_to_quadrature() {
  using C = std::complex<Scalar>;
  const Scalar s = Scalar(1) / std::sqrt(Scalar(2));
  Transfer<Scalar> a;
  a << C(s, 0), C(s, 0), C(0, -s), C(0, s);
  return a;
}

/// Quadrature transfer of an element that reflects the upper sideband with
/// `r_plus` and the lower sideband with `r_minus`:
///   T = A diag(r_plus, conj(r_minus)) A^dagger.
template <typename Scalar>
Transfer<Scalar> quadrature_transfer(std::complex<Scalar> r_plus, std::complex<Scalar> r_minus) {
  const Scalar limit = Scalar(1) + Scalar(kPassivityTolerance);
  if (!(std::abs(r_plus) <= limit) || !(std::abs(r_minus) <= limit)) {
    throw PassivityError("reflectivity magnitude exceeds unity");
  }
  const Transfer<Scalar> a = sideband_to_quadrature<Scalar>();
  Eigen::DiagonalMatrix<std::complex<Scalar>, 2> d(r_plus, std::conj(r_minus));
  return a * d * a.adjoint();
}

/// Eigenvalues of I - T T^dagger, ascending.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> passivity_margin(const Transfer<Scalar>& t) {
  using std::sqrt;
  const Transfer<Scalar> defect = Transfer<Scalar>::Identity() - t * t.adjoint();
  const Scalar a = defect(0, 0).real();
  const Scalar d = defect(1, 1).real();
  const Scalar mean = Scalar(0.5) * (a + d);
  const Scalar half = Scalar(0.5) * (a - d);
  const Scalar radius = sqrt(half * half + std::norm(defect(0, 1)));
  return {mean - radius, mean + radius};
}

template <typename Scalar>
bool is_passive(const Transfer<Scalar>& t, Scalar tol = Scalar(kPassivityTolerance)) {
  return passivity_margin(t)(0) >= -tol;
}

/// Covariance of the OPO output. The squeezed axis lies along
/// `squeeze_angle_rad`; the OPO is flat across the audio band.
template <typename Scalar = double>
Covariance<Scalar> opo_output_covariance(const SqueezerParams& sq) {
  sq.validate();
  const Scalar x = sq.pump_amplitude();
  const Scalar eta = sq.escape_efficiency;
  const Scalar v_sqz = Scalar(1) - eta * Scalar(4) * x / ((Scalar(1) + x) * (Scalar(1) + x));
  const Scalar v_anti = Scalar(1) + eta * Scalar(4) * x / ((Scalar(1) - x) * (Scalar(1) - x));
  const auto r = rotation<Scalar>(sq.squeeze_angle_rad);
  return r * Eigen::DiagonalMatrix<Scalar, 2>(v_sqz, v_anti) * r.transpose();
}

/// Beam-splitter loss: (1 - loss) V + loss I.
template <typename Derived>
Covariance<typename Derived::Scalar> apply_loss(const Eigen::MatrixBase<Derived>& V,
                                                typename Derived::Scalar loss) {
  using Scalar = typename Derived::Scalar;
  if (!(loss >= Scalar(0) && loss <= Scalar(1))) throw std::invalid_argument("loss must lie in [0, 1]");
  return (Scalar(1) - loss) * V + loss * Covariance<Scalar>::Identity();
}

/// Input-output relation of a passive element: V_out = Re[T V T^dagger + I - T T^dagger].
template <typename Scalar>
Covariance<Scalar> reflected_covariance(const Covariance<Scalar>& V, const Transfer<Scalar>& t) {
  if (!is_passive(t)) throw PassivityError("transfer matrix is not passive");
  const Transfer<Scalar> vc = V.template cast<std::complex<Scalar>>();
  const Transfer<Scalar> out = t * vc * t.adjoint() + Transfer<Scalar>::Identity() - t * t.adjoint();
  return out.real();
}

/// Angle of the minimum-noise quadrature, in [0, pi).
template <typename Scalar>
Scalar min_noise_angle(const Covariance<Scalar>& V) {
  using std::atan2;
  // Minimum of b^T V b sits at 2 phi = atan2(2 V01, V00 - V11) + pi.
  Scalar a = Scalar(0.5) * (atan2(Scalar(2) * V(0, 1), V(0, 0) - V(1, 1)) + Scalar(std::numbers::pi));
  if (a >= Scalar(std::numbers::pi)) a -= Scalar(std::numbers::pi);
  return a;
}

}  // namespace fdsqz
