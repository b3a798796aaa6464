#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "siml/array_model.hpp"
#include "siml/field_sim.hpp"
#include "siml/sphere_grid.hpp"
#include "siml/types.hpp"

namespace siml {

enum class BeamformerKind { MB, MVDR, AAR };

inline std::string_view to_string(BeamformerKind kind) {
  switch (kind) {
    case BeamformerKind::MB: return "mb";
    case BeamformerKind::MVDR: return "mvdr";
    case BeamformerKind::AAR: return "aar";
  }
  return "?";
}

template <typename Scalar = double>
struct BeamformerSpec {
  BeamformerKind kind = BeamformerKind::MB;
  /// Fraction of Tr(Sigma-hat)/L added to the diagonal before inversion.
  Scalar diagonal_loading = 0;
};

/// Loading applied when the caller asks for none and Sigma-hat is rank
/// deficient (N < L).
inline constexpr double kDefaultLoadingFewSnapshots = 1e-6;

/// Steered-response spectrum on every grid point, a = steering_vector(r):
///   MB   a^H S a / (a^H a)^2
///   MVDR 1 / (a^H S^-1 a)
///   AAR  (a^H S^-1 a) / (a^H S^-2 a)
template <typename Scalar>
Vector<Scalar> beamform_spectrum(const SampleCovariance<Scalar>& s, const SensorArray<Scalar>& array,
                                 const SphereGrid<Scalar>& grid, const BeamformerSpec<Scalar>& spec) {
  if (!(spec.diagonal_loading >= Scalar(0))) {
    throw std::invalid_argument("beamform_spectrum: diagonal_loading must be >= 0");
  }
  if (array.size() != s.size()) throw std::invalid_argument("beamform_spectrum: L mismatch");
  const Eigen::Index n = s.size();
  const CMatrix<Scalar> a = steering_matrix(array, grid);

  if (spec.kind == BeamformerKind::MB) {
    const CMatrix<Scalar> sa = s.matrix * a;
    const Vector<Scalar> num = (a.conjugate().array() * sa.array()).colwise().sum().real();
    const Vector<Scalar> aa = a.colwise().squaredNorm().transpose();
    return (num.array() / aa.array().square()).matrix();
  }

  Scalar loading = spec.diagonal_loading;
  if (loading == Scalar(0) && s.n_snapshots < n) loading = Scalar(kDefaultLoadingFewSnapshots);
  CMatrix<Scalar> loaded = s.matrix;
  loaded.diagonal().array() += Complex<Scalar>(loading * s.matrix.trace().real() / Scalar(n));

  Eigen::LLT<CMatrix<Scalar>> llt(loaded);
  bool singular = llt.info() != Eigen::Success;
  if (!singular) {
    const auto d = llt.matrixLLT().diagonal().real();
    singular = !(d.minCoeff() > Scalar(1e-6) * d.maxCoeff());
  }
  if (singular) {
    throw InversionError(std::string("beamform_spectrum (") + std::string(to_string(spec.kind)) +
                         "): sample covariance is singular; use diagonal_loading > 0");
  }
  const CMatrix<Scalar> x = llt.solve(a);  // S^-1 a
  const Vector<Scalar> quad = (a.conjugate().array() * x.array()).colwise().sum().real();
  if (spec.kind == BeamformerKind::MVDR) return quad.cwiseInverse();
  const Vector<Scalar> quad2 = x.colwise().squaredNorm().transpose();
  return (quad.array() / quad2.array()).matrix();
}

}  // namespace siml
