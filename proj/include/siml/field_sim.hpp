#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "siml/array_model.hpp"
#include "siml/sphere_grid.hpp"
#include "siml/types.hpp"

namespace siml {

template <typename Scalar = double>
struct PointSource {
  Direction<Scalar> direction;
  Scalar power;
};

/// Gaussian intensity profile in the great-circle angle to `center`.
template <typename Scalar = double>
struct BlobSource {
  Direction<Scalar> center;
  Scalar width;
  Scalar peak_power;
};

/// Correlation between two point components, indices into the component list.
template <typename Scalar = double>
struct SourceCorrelation {
  std::size_t i;
  std::size_t j;
  Complex<Scalar> rho;
};

template <typename Scalar = double>
using SourceComponent = std::variant<PointSource<Scalar>, BlobSource<Scalar>>;

/// Ground-truth source field. Blobs are spatially white; point sources may be
/// pairwise correlated.
template <typename Scalar = double>
struct SourceModel {
  std::vector<SourceComponent<Scalar>> components;
  std::vector<SourceCorrelation<Scalar>> correlations;

  /// Throws std::invalid_argument on negative powers, non-positive widths,
  /// |rho| > 1, correlations that reference non-point components, or a
  /// non-PSD point cross-covariance.
  void validate() const;

  /// Indices of the point components, in component order.
  std::vector<std::size_t> point_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t c = 0; c < components.size(); ++c) {
      if (std::holds_alternative<PointSource<Scalar>>(components[c])) idx.push_back(c);
    }
    return idx;
  }

  /// Cross-covariance of the point components (K x K, K = #points).
  CMatrix<Scalar> point_covariance() const;
};

template <typename Scalar>
CMatrix<Scalar> SourceModel<Scalar>::point_covariance() const {
  const auto idx = point_indices();
  const auto k = static_cast<Eigen::Index>(idx.size());
  CMatrix<Scalar> c = CMatrix<Scalar>::Zero(k, k);
  auto position = [&](std::size_t comp) -> Eigen::Index {
    for (Eigen::Index a = 0; a < k; ++a) {
      if (idx[static_cast<std::size_t>(a)] == comp) return a;
    }
    throw std::invalid_argument("SourceModel: correlation index " + std::to_string(comp) +
                                " is not a point component");
  };
  for (Eigen::Index a = 0; a < k; ++a) {
    c(a, a) = std::get<PointSource<Scalar>>(components[idx[static_cast<std::size_t>(a)]]).power;
  }
  for (const auto& corr : correlations) {
    if (corr.i >= components.size() || corr.j >= components.size() || corr.i == corr.j) {
      throw std::invalid_argument("SourceModel: correlation indices out of range");
    }
    const Eigen::Index a = position(corr.i);
    const Eigen::Index b = position(corr.j);
    const Complex<Scalar> v = corr.rho * std::sqrt(c(a, a).real() * c(b, b).real());
    c(a, b) = v;
    c(b, a) = std::conj(v);
  }
  return c;
}

template <typename Scalar>
void SourceModel<Scalar>::validate() const {
  for (const auto& comp : components) {
    if (const auto* p = std::get_if<PointSource<Scalar>>(&comp)) {
      if (!(p->power >= Scalar(0))) throw std::invalid_argument("SourceModel: negative point power");
    } else {
      const auto& b = std::get<BlobSource<Scalar>>(comp);
      if (!(b.width > Scalar(0))) throw std::invalid_argument("SourceModel: blob width must be > 0");
      if (!(b.peak_power >= Scalar(0))) {
        throw std::invalid_argument("SourceModel: negative blob peak power");
      }
    }
  }
  for (const auto& corr : correlations) {
    if (std::abs(corr.rho) > Scalar(1) + Scalar(1e-12)) {
      throw std::invalid_argument("SourceModel: |rho| must be <= 1");
    }
  }
  const CMatrix<Scalar> c = point_covariance();
  if (c.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<CMatrix<Scalar>> es(c, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < Scalar(-1e-10)) {
      throw std::invalid_argument("SourceModel: point cross-covariance is not PSD");
    }
  }
}

/// Blob intensity at angular distance theta from its center.
template <typename Scalar>
Scalar blob_profile(const BlobSource<Scalar>& blob, Scalar theta) {
  return blob.peak_power * std::exp(-theta * theta / (Scalar(2) * blob.width * blob.width));
}

/// Intensity I(r) = kappa(r, r) sampled on the grid. A point source deposits
/// power / pixel_weight into its nearest pixel.
template <typename Scalar>
Vector<Scalar> intensity_map(const SourceModel<Scalar>& model, const SphereGrid<Scalar>& grid) {
  Vector<Scalar> values = Vector<Scalar>::Zero(grid.size());
  for (const auto& comp : model.components) {
    if (const auto* p = std::get_if<PointSource<Scalar>>(&comp)) {
      const Eigen::Index k = grid.nearest(p->direction);
      values(k) += p->power / grid.weights()(k);
    } else {
      const auto& b = std::get<BlobSource<Scalar>>(comp);
      for (Eigen::Index k = 0; k < grid.size(); ++k) {
        values(k) += blob_profile(b, b.center.angle_to(grid.direction(k)));
      }
    }
  }
  return values;
}

/// Sigma = Phi* T_kappa Phi + sigma I. Blobs are integrated by quadrature on
/// the grid; point sources use their exact steering vectors.
template <typename Scalar>
CMatrix<Scalar> population_covariance(const SourceModel<Scalar>& model,
                                      const SensorArray<Scalar>& array, Scalar sigma,
                                      const SphereGrid<Scalar>& grid) {
  if (!(sigma >= Scalar(0))) throw std::invalid_argument("population_covariance: sigma < 0");
  model.validate();
  const Eigen::Index n = array.size();
  CMatrix<Scalar> cov = CMatrix<Scalar>::Zero(n, n);

  // Diffuse part: sum_p w_p I_blob(r_p) a(r_p) a(r_p)^H.
  Vector<Scalar> diffuse = Vector<Scalar>::Zero(grid.size());
  bool has_blob = false;
  for (const auto& comp : model.components) {
    if (const auto* b = std::get_if<BlobSource<Scalar>>(&comp)) {
      has_blob = true;
      for (Eigen::Index k = 0; k < grid.size(); ++k) {
        diffuse(k) += blob_profile(*b, b->center.angle_to(grid.direction(k)));
      }
    }
  }
  if (has_blob) {
    const CMatrix<Scalar> a = steering_matrix(array, grid);
    const Vector<Scalar> scale = (grid.weights().array() * diffuse.array()).sqrt().matrix();
    const CMatrix<Scalar> aw = a * scale.template cast<Complex<Scalar>>().asDiagonal();
    cov.noalias() += aw * aw.adjoint();
  }

  const auto idx = model.point_indices();
  if (!idx.empty()) {
    const auto k = static_cast<Eigen::Index>(idx.size());
    CMatrix<Scalar> a(n, k);
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto& point = std::get<PointSource<Scalar>>(model.components[idx[std::size_t(c)]]);
      a.col(c) = steering_vector(array, point.direction);
    }
    cov.noalias() += a * model.point_covariance() * a.adjoint();
  }
  cov.diagonal().array() += Complex<Scalar>(sigma);
  return hermitian_part(cov);
}

/// Sigma-hat with its snapshot count N.
template <typename Scalar = double>
struct SampleCovariance {
  CMatrix<Scalar> matrix;
  std::int64_t n_snapshots;

  Eigen::Index size() const { return matrix.rows(); }
};

/// Hermitian square root factor F with F F^H = sigma (eigenvalues clipped at 0).
/// Throws std::invalid_argument if sigma has eigenvalues below -1e-10 * trace.
template <typename Scalar>
CMatrix<Scalar> psd_factor(const CMatrix<Scalar>& sigma) {
  Eigen::SelfAdjointEigenSolver<CMatrix<Scalar>> es(sigma);
  const Scalar trace = std::abs(sigma.trace().real());
  const Scalar tol = Scalar(1e-10) * std::max(trace, std::numeric_limits<Scalar>::min());
  if (es.eigenvalues().size() > 0 && es.eigenvalues().minCoeff() < -tol) {
    throw std::invalid_argument("covariance is not positive semidefinite (min eigenvalue " +
                                std::to_string(double(es.eigenvalues().minCoeff())) + ")");
  }
  const Vector<Scalar> root = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * root.template cast<Complex<Scalar>>().asDiagonal();
}

/// L x N matrix of i.i.d. columns y ~ CN(0, sigma). Real and imaginary parts
/// of the unit draws are N(0, 1/2). Deterministic in (sigma, N, seed).
template <typename Scalar>
CMatrix<Scalar> draw_snapshots(const CMatrix<Scalar>& sigma, std::int64_t n_snapshots,
                               std::uint64_t seed) {
  if (n_snapshots < 1) throw std::invalid_argument("sample_covariance: N must be >= 1");
  if (sigma.rows() != sigma.cols()) throw std::invalid_argument("sample_covariance: not square");
  if (!sigma.isApprox(sigma.adjoint(), Scalar(1e-10)) && sigma.norm() > Scalar(0)) {
    throw std::invalid_argument("sample_covariance: covariance is not Hermitian");
  }
  const Eigen::Index n = sigma.rows();
  const CMatrix<Scalar> factor = psd_factor<Scalar>(sigma);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  CMatrix<Scalar> z(n, n_snapshots);
  for (Eigen::Index s = 0; s < n_snapshots; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar re = Scalar(normal(rng));
      const Scalar im = Scalar(normal(rng));
      z(i, s) = Complex<Scalar>(re, im);
    }
  }
  return factor * z;
}

/// (1/N) sum y y^H over the draws of draw_snapshots.
template <typename Scalar>
SampleCovariance<Scalar> sample_covariance(const CMatrix<Scalar>& sigma, std::int64_t n_snapshots,
                                           std::uint64_t seed) {
  const CMatrix<Scalar> y = draw_snapshots(sigma, n_snapshots, seed);
  CMatrix<Scalar> s = y * y.adjoint() / Scalar(n_snapshots);
  s = hermitian_part(s);
  return {std::move(s), n_snapshots};
}

/// 10 log10( Tr(Sigma_signal) / (L sigma) ).
template <typename Scalar>
Scalar snr_db(const SourceModel<Scalar>& model, const SensorArray<Scalar>& array, Scalar sigma,
              const SphereGrid<Scalar>& grid) {
  if (!(sigma > Scalar(0))) throw std::invalid_argument("snr_db: sigma must be > 0");
  const CMatrix<Scalar> sig = population_covariance(model, array, Scalar(0), grid);
  return Scalar(10) * std::log10(sig.trace().real() / (Scalar(array.size()) * sigma));
}

/// Noise power giving the requested SNR under the snr_db definition.
template <typename Scalar>
Scalar sigma_for_snr(const CMatrix<Scalar>& signal_covariance, Scalar snr_db_value) {
  const Scalar tr = signal_covariance.trace().real();
  if (!(tr > Scalar(0))) throw std::invalid_argument("sigma_for_snr: source model has no power");
  return tr / (Scalar(signal_covariance.rows()) * std::pow(Scalar(10), snr_db_value / Scalar(10)));
}

}  // namespace siml
