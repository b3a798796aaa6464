#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace siml {

template <typename Scalar>
using Complex = std::complex<Scalar>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using CVector = Eigen::Matrix<Complex<Scalar>, Eigen::Dynamic, 1>;

template <typename Scalar>
using CMatrix = Eigen::Matrix<Complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
inline constexpr Scalar kPi = std::numbers::pi_v<Scalar>;

template <typename Scalar>
inline constexpr Scalar kFourPi = Scalar(4) * std::numbers::pi_v<Scalar>;

/// Failures caused by the numerics rather than by the caller's arguments
/// (rank deficiency, conditioning, non-definite model covariance). The CLI
/// maps these to exit code 3; std::invalid_argument maps to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sieve Gram matrix G is not full column rank.
class CoherencyError : public NumericalError {
 public:
  CoherencyError(const std::string& what, double smallest_singular_value)
      : NumericalError(what), smallest_singular_value_(smallest_singular_value) {}
  double smallest_singular_value() const { return smallest_singular_value_; }

 private:
  double smallest_singular_value_;
};

class ConditioningError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Joint (R, sigma) estimation needs strictly fewer sieve functions than sensors.
class IdentifiabilityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Model covariance is not positive definite where a likelihood is requested.
class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Capon-type inverse of a singular sample covariance.
class InversionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Hermitian part (A + A^H) / 2.
template <typename Derived>
auto hermitian_part(const Eigen::MatrixBase<Derived>& a) {
  using Plain = typename Derived::PlainObject;
  Plain out = (a + a.adjoint()) / typename Derived::RealScalar(2);
  return out;
}

}  // namespace siml
