#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include "siml/sphere_grid.hpp"
#include "siml/types.hpp"

namespace siml {

/// Sensor positions (L x 3, meters) and operating wavelength (meters).
template <typename Scalar = double>
class SensorArray {
 public:
  static constexpr double kMinSeparation = 1e-9;

  SensorArray(Matrix<Scalar> positions, Scalar wavelength)
      : positions_(std::move(positions)), wavelength_(wavelength) {
    if (positions_.cols() != 3 || positions_.rows() < 1) {
      throw std::invalid_argument("SensorArray: positions must be L x 3 with L >= 1");
    }
    if (!(wavelength_ > Scalar(0)) || !std::isfinite(wavelength_)) {
      throw std::invalid_argument("SensorArray: wavelength must be positive");
    }
    if (!positions_.allFinite()) {
      throw std::invalid_argument("SensorArray: non-finite sensor position");
    }
    for (Eigen::Index i = 0; i < positions_.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < positions_.rows(); ++j) {
        if ((positions_.row(i) - positions_.row(j)).norm() < Scalar(kMinSeparation)) {
          throw std::invalid_argument("SensorArray: sensors " + std::to_string(i) + " and " +
                                      std::to_string(j) + " are closer than 1e-9 m");
        }
      }
    }
  }

  Eigen::Index size() const { return positions_.rows(); }
  const Matrix<Scalar>& positions() const { return positions_; }
  Scalar wavelength() const { return wavelength_; }

 private:
  Matrix<Scalar> positions_;
  Scalar wavelength_;
};

/// Random planar layout: L sensors uniform in a disk of diameter
/// `aperture_in_wavelengths * wavelength` in the z = 0 plane.
template <typename Scalar = double>
SensorArray<Scalar> random_disk_array(Eigen::Index n_sensors, Scalar wavelength,
                                      Scalar aperture_in_wavelengths, std::uint64_t seed) {
  if (n_sensors < 1) throw std::invalid_argument("random_disk_array: L must be >= 1");
  if (!(aperture_in_wavelengths > Scalar(0))) {
    throw std::invalid_argument("random_disk_array: aperture must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Scalar radius = aperture_in_wavelengths * wavelength / Scalar(2);
  Matrix<Scalar> pos(n_sensors, 3);
  for (Eigen::Index i = 0; i < n_sensors; ++i) {
    const Scalar r = radius * Scalar(std::sqrt(unit(rng)));
    const Scalar phi = Scalar(2) * kPi<Scalar> * Scalar(unit(rng));
    pos.row(i) << r * std::cos(phi), r * std::sin(phi), Scalar(0);
  }
  return SensorArray<Scalar>(std::move(pos), wavelength);
}

/// a(r)_i = exp(-j 2 pi <r, p_i> / lambda), the conjugate of the sensing
/// function phi_i evaluated at r.
template <typename Scalar>
CVector<Scalar> steering_vector(const SensorArray<Scalar>& array, const Direction<Scalar>& r) {
  const Scalar k = Scalar(2) * kPi<Scalar> / array.wavelength();
  const Vector<Scalar> phase = -k * (array.positions() * r.vec());
  CVector<Scalar> a(phase.size());
  for (Eigen::Index i = 0; i < phase.size(); ++i) a(i) = std::polar(Scalar(1), phase(i));
  return a;
}

/// Steering vectors for every grid point, one column per pixel (L x P).
template <typename Scalar>
CMatrix<Scalar> steering_matrix(const SensorArray<Scalar>& array, const SphereGrid<Scalar>& grid) {
  const Scalar k = Scalar(2) * kPi<Scalar> / array.wavelength();
  const Matrix<Scalar> phase = -k * (array.positions() * grid.points().transpose());
  CMatrix<Scalar> a(phase.rows(), phase.cols());
  for (Eigen::Index p = 0; p < phase.cols(); ++p) {
    for (Eigen::Index i = 0; i < phase.rows(); ++i) a(i, p) = std::polar(Scalar(1), phase(i, p));
  }
  return a;
}

/// Discretized analysis operator: row i holds conj(phi_i) on the grid.
template <typename Scalar = double>
struct SamplingMatrix {
  CMatrix<Scalar> entries;
  const SphereGrid<Scalar>* grid;
  bool weights_absorbed;

  /// Apply to a field sampled on the grid. With absorbed weights this is the
  /// quadrature of s against conj(phi_i).
  template <typename Derived>
  CVector<Scalar> apply(const Eigen::MatrixBase<Derived>& s) const {
    return entries * s.template cast<Complex<Scalar>>();
  }
};

/// The grid must outlive the returned matrix.
template <typename Scalar>
SamplingMatrix<Scalar> sampling_matrix(const SensorArray<Scalar>& array,
                                       const SphereGrid<Scalar>& grid, bool absorb_weights) {
  CMatrix<Scalar> m = steering_matrix(array, grid);
  if (absorb_weights) m = m * grid.weights().template cast<Complex<Scalar>>().asDiagonal();
  return {std::move(m), &grid, absorb_weights};
}

/// Unnormalized sinc, sin(x)/x with sinc(0) = 1.
template <typename Scalar>
Scalar sinc(Scalar x) {
  if (std::abs(x) < Scalar(1e-4)) {
    const Scalar x2 = x * x;
    return Scalar(1) - x2 / Scalar(6) + x2 * x2 / Scalar(120);
  }
  return std::sin(x) / x;
}

/// Analytic Gram matrix of the sensing functions over the whole sphere:
/// H_ij = 4 pi sinc(2 pi |p_i - p_j| / lambda).
template <typename Scalar>
Matrix<Scalar> gram_matrix(const SensorArray<Scalar>& array) {
  const Eigen::Index n = array.size();
  const Scalar k = Scalar(2) * kPi<Scalar> / array.wavelength();
  const auto& pos = array.positions();
  Matrix<Scalar> h(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    h(i, i) = kFourPi<Scalar>;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Scalar v = kFourPi<Scalar> * sinc(k * (pos.row(i) - pos.row(j)).norm());
      h(i, j) = v;
      h(j, i) = v;
    }
  }
  return h;
}

}  // namespace siml
