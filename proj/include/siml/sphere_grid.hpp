#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <variant>
#include <vector>

#include "siml/types.hpp"

namespace siml {

/// Unit vector on the sphere. Construction normalizes; the components of a
/// Direction always have unit norm within 1e-12.
template <typename Scalar = double>
class Direction {
 public:
  Direction() : v_(0, 0, 1) {}
  Direction(Scalar x, Scalar y, Scalar z) : Direction(Vector3<Scalar>(x, y, z)) {}
  explicit Direction(const Vector3<Scalar>& v) {
    const Scalar n = v.norm();
    if (!(n > Scalar(0)) || !std::isfinite(n)) {
      throw std::invalid_argument("Direction: zero or non-finite vector");
    }
    v_ = v / n;
  }

  /// Direction from colatitude theta (angle to +z) and azimuth phi.
  static Direction from_spherical(Scalar theta, Scalar phi) {
    const Scalar s = std::sin(theta);
    return Direction(s * std::cos(phi), s * std::sin(phi), std::cos(theta));
  }

  Scalar x() const { return v_.x(); }
  Scalar y() const { return v_.y(); }
  Scalar z() const { return v_.z(); }
  const Vector3<Scalar>& vec() const { return v_; }

  /// Great-circle angle to another direction, accurate for small angles.
  Scalar angle_to(const Direction& other) const {
    return std::atan2(v_.cross(other.v_).norm(), v_.dot(other.v_));
  }

  friend bool operator==(const Direction& a, const Direction& b) { return a.v_ == b.v_; }

 private:
  Vector3<Scalar> v_;
};

struct FullSphere {};

template <typename Scalar>
struct SphericalCap {
  Direction<Scalar> center;
  Scalar radius;
};

/// Pixelization of the sphere (or of a cap) with quadrature weights in
/// steradians. Immutable once built.
///
/// Point ordering is part of the contract: Fibonacci grids are ordered by
/// lattice index (z decreasing from the north pole); cap grids are ordered
/// ring by ring from the center outwards, counter-clockwise within a ring.
template <typename Scalar = double>
class SphereGrid {
 public:
  using Kind = std::variant<FullSphere, SphericalCap<Scalar>>;

  SphereGrid(Matrix<Scalar> points, Vector<Scalar> weights, Kind kind)
      : points_(std::move(points)), weights_(std::move(weights)), kind_(std::move(kind)) {
    if (points_.cols() != 3 || points_.rows() != weights_.size() || weights_.size() == 0) {
      throw std::invalid_argument("SphereGrid: points must be P x 3 with P matching weights");
    }
    if ((weights_.array() <= Scalar(0)).any()) {
      throw std::invalid_argument("SphereGrid: weights must be positive");
    }
  }

  Eigen::Index size() const { return weights_.size(); }

  /// P x 3 matrix of unit vectors, one row per pixel.
  const Matrix<Scalar>& points() const { return points_; }
  const Vector<Scalar>& weights() const { return weights_; }
  const Kind& kind() const { return kind_; }
  bool is_full_sphere() const { return std::holds_alternative<FullSphere>(kind_); }

  Direction<Scalar> direction(Eigen::Index p) const {
    return Direction<Scalar>(Vector3<Scalar>(points_.row(p).transpose()));
  }

  Scalar total_area() const { return weights_.sum(); }

  /// Index of the pixel whose center is closest to r.
  Eigen::Index nearest(const Direction<Scalar>& r) const {
    Eigen::Index best = 0;
    (points_ * r.vec()).maxCoeff(&best);
    return best;
  }

 private:
  Matrix<Scalar> points_;
  Vector<Scalar> weights_;
  Kind kind_;
};

/// Area of a spherical cap of angular radius `radius`.
template <typename Scalar>
Scalar cap_area(Scalar radius) {
  // 2*pi*(1 - cos r) written with sin^2 to stay accurate for small radii.
  const Scalar s = std::sin(radius / Scalar(2));
  return Scalar(4) * kPi<Scalar> * s * s;
}

/// Fibonacci lattice on the full sphere, equal weights 4*pi/P.
template <typename Scalar = double>
SphereGrid<Scalar> make_fibonacci_grid(Eigen::Index n_points) {
  if (n_points < 1) throw std::invalid_argument("make_fibonacci_grid: P must be >= 1");
  const Scalar golden_angle = kPi<Scalar> * (Scalar(3) - std::sqrt(Scalar(5)));
  Matrix<Scalar> pts(n_points, 3);
  for (Eigen::Index k = 0; k < n_points; ++k) {
    const Scalar z = Scalar(1) - Scalar(2 * k + 1) / Scalar(n_points);
    const Scalar rho = std::sqrt(std::max(Scalar(0), Scalar(1) - z * z));
    const Scalar phi = golden_angle * Scalar(k);
    pts.row(k) << rho * std::cos(phi), rho * std::sin(phi), z;
  }
  Vector<Scalar> w = Vector<Scalar>::Constant(n_points, kFourPi<Scalar> / Scalar(n_points));
  return SphereGrid<Scalar>(std::move(pts), std::move(w), FullSphere{});
}

namespace detail {

// Orthonormal frame (e1, e2, center) used to rotate a +z cap onto `center`.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> frame_for(const Direction<Scalar>& center) {
  const Vector3<Scalar> c = center.vec();
  const Vector3<Scalar> helper =
      std::abs(c.z()) < Scalar(0.9) ? Vector3<Scalar>::UnitZ() : Vector3<Scalar>::UnitX();
  Vector3<Scalar> e1 = helper.cross(c).normalized();
  Vector3<Scalar> e2 = c.cross(e1);
  Eigen::Matrix<Scalar, 3, 3> f;
  f.col(0) = e1;
  f.col(1) = e2;
  f.col(2) = c;
  return f;
}

}  // namespace detail

/// Equal-area cap grid. Ring k (k = 0 .. n_rings-1) holds 2k+1 pixels, so
/// the grid has n_rings^2 pixels, each of area cap_area(radius) / n_rings^2.
/// Ring boundaries sit at 1 - cos(theta_k) = (1 - cos radius) * (k/n)^2;
/// pixel centers sit at the equal-area midpoint of their ring and sector.
template <typename Scalar = double>
SphereGrid<Scalar> make_cap_grid(const Direction<Scalar>& center, Scalar radius,
                                 Eigen::Index n_rings) {
  if (!(radius > Scalar(0)) || radius > kPi<Scalar> / Scalar(2) + Scalar(1e-15)) {
    throw std::invalid_argument("make_cap_grid: radius must lie in (0, pi/2]");
  }
  if (n_rings < 1) throw std::invalid_argument("make_cap_grid: n_rings must be >= 1");

  const Eigen::Index n_pix = n_rings * n_rings;
  const Scalar area = cap_area(radius);
  // h(theta) = 1 - cos(theta); cap height.
  const Scalar h_cap = area / (Scalar(2) * kPi<Scalar>);
  const auto frame = detail::frame_for(center);

  Matrix<Scalar> pts(n_pix, 3);
  Eigen::Index p = 0;
  for (Eigen::Index k = 0; k < n_rings; ++k) {
    const Eigen::Index count = 2 * k + 1;
    Scalar theta = 0;
    if (k > 0) {
      const Scalar n2 = Scalar(n_rings) * Scalar(n_rings);
      const Scalar h_mid = h_cap * (Scalar(k * k) + Scalar((k + 1) * (k + 1))) / (Scalar(2) * n2);
      // theta = acos(1 - h) = 2 asin(sqrt(h/2))
      theta = Scalar(2) * std::asin(std::sqrt(h_mid / Scalar(2)));
    }
    // Alternate half-sector offsets between rings to avoid radial alignment.
    const Scalar offset = (k % 2 == 0) ? Scalar(0.5) : Scalar(0);
    for (Eigen::Index j = 0; j < count; ++j) {
      const Scalar phi = Scalar(2) * kPi<Scalar> * (Scalar(j) + offset) / Scalar(count);
      const Scalar s = std::sin(theta);
      const Vector3<Scalar> local(s * std::cos(phi), s * std::sin(phi), std::cos(theta));
      pts.row(p++) = (frame * local).normalized().transpose();
    }
  }
  Vector<Scalar> w = Vector<Scalar>::Constant(n_pix, area / Scalar(n_pix));
  return SphereGrid<Scalar>(std::move(pts), std::move(w), SphericalCap<Scalar>{center, radius});
}

/// Weighted sum over the grid: sum_p weight_p * values_p.
template <typename Scalar, typename Derived>
typename Derived::Scalar quadrature(const SphereGrid<Scalar>& grid,
                                    const Eigen::MatrixBase<Derived>& values) {
  if (values.size() != grid.size()) {
    throw std::invalid_argument("quadrature: values length does not match grid size");
  }
  using V = typename Derived::Scalar;
  return (grid.weights().template cast<V>().array() * values.derived().array()).sum();
}

}  // namespace siml
