#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "siml/array_model.hpp"
#include "siml/field_sim.hpp"
#include "siml/sphere_grid.hpp"
#include "siml/types.hpp"

namespace siml {

/// Sieve Psi = Phi W with Gram matrix G = Phi* Psi = H W.
///
/// The thin SVD of G is kept so that the left pseudo-inverse
/// G^+ = V S^-1 U^H and the projector G G^+ = U U^H never go through
/// (G^H G)^-1.
template <typename Scalar = double>
class SievedBasis {
 public:
  static constexpr double kCoherencyTolerance = 1e-10;

  SievedBasis(CMatrix<Scalar> w, const Matrix<Scalar>& h) : w_(std::move(w)) {
    if (h.rows() != h.cols() || h.rows() != w_.rows()) {
      throw std::invalid_argument("SievedBasis: W and H dimensions disagree");
    }
    if (w_.cols() < 1 || w_.cols() > w_.rows()) {
      throw std::invalid_argument("SievedBasis: M must satisfy 1 <= M <= L");
    }
    g_ = h.template cast<Complex<Scalar>>() * w_;
    Eigen::BDCSVD<CMatrix<Scalar>> svd(g_, Eigen::ComputeThinU | Eigen::ComputeThinV);
    singular_values_ = svd.singularValues();
    const Scalar s_max = singular_values_(0);
    const Scalar s_min = singular_values_(singular_values_.size() - 1);
    if (!(s_min > Scalar(kCoherencyTolerance) * s_max)) {
      throw CoherencyError("sieve Gram matrix G is rank deficient: smallest singular value " +
                               std::to_string(double(s_min)) + " vs largest " +
                               std::to_string(double(s_max)),
                           double(s_min));
    }
    range_ = svd.matrixU();
    const Vector<Scalar> inv_s = singular_values_.cwiseInverse();
    g_pinv_ = svd.matrixV() * inv_s.template cast<Complex<Scalar>>().asDiagonal() *
              range_.adjoint();
    gram_conditioning_ = (s_max / s_min) * (s_max / s_min);
  }

  Eigen::Index L() const { return w_.rows(); }
  Eigen::Index M() const { return w_.cols(); }

  /// Sieve coefficients (L x M), orthonormal columns.
  const CMatrix<Scalar>& W() const { return w_; }
  /// Gram matrix (L x M).
  const CMatrix<Scalar>& G() const { return g_; }
  /// Left pseudo-inverse of G (M x L).
  const CMatrix<Scalar>& G_pinv() const { return g_pinv_; }
  /// Orthonormal basis of range(G) (L x M).
  const CMatrix<Scalar>& range_basis() const { return range_; }
  const Vector<Scalar>& singular_values() const { return singular_values_; }
  /// Condition number of G^H G.
  Scalar gram_conditioning() const { return gram_conditioning_; }

 private:
  CMatrix<Scalar> w_;
  CMatrix<Scalar> g_;
  CMatrix<Scalar> g_pinv_;
  CMatrix<Scalar> range_;
  Vector<Scalar> singular_values_;
  Scalar gram_conditioning_{};
};

/// Eigenpairs of a sample covariance sorted by descending eigenvalue.
template <typename Scalar>
struct DescendingEigen {
  Vector<Scalar> values;
  CMatrix<Scalar> vectors;
};

template <typename Scalar>
DescendingEigen<Scalar> descending_eigen(const CMatrix<Scalar>& s) {
  Eigen::SelfAdjointEigenSolver<CMatrix<Scalar>> es(s);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

/// Sieve from the top-M eigenvectors of Sigma-hat with an explicit Gram matrix H.
template <typename Scalar>
SievedBasis<Scalar> eigen_sieve(const SampleCovariance<Scalar>& s, const Matrix<Scalar>& h,
                                Eigen::Index m) {
  const Eigen::Index n = s.size();
  if (h.rows() != n) throw std::invalid_argument("eigen_sieve: H and Sigma-hat sizes differ");
  if (m < 1 || m > n) {
    throw std::invalid_argument("eigen_sieve: M = " + std::to_string(m) + " outside [1, " +
                                std::to_string(n) + "]");
  }
  const auto eig = descending_eigen(s.matrix);
  return SievedBasis<Scalar>(eig.vectors.leftCols(m), h);
}

template <typename Scalar>
SievedBasis<Scalar> eigen_sieve(const SampleCovariance<Scalar>& s, const SensorArray<Scalar>& array,
                                Eigen::Index m) {
  if (array.size() != s.size()) {
    throw std::invalid_argument("eigen_sieve: array and Sigma-hat disagree on L");
  }
  return eigen_sieve(s, gram_matrix(array), m);
}

template <typename Scalar = double>
struct KappaEstimate {
  CMatrix<Scalar> R_hat;
  Scalar sigma_hat{};
  Scalar log_likelihood{};
  /// True when the joint noise estimate came out negative and was set to 0.
  bool sigma_clamped = false;
  std::shared_ptr<const SievedBasis<Scalar>> basis;

  Eigen::Index M() const { return R_hat.rows(); }
};

/// l = -Tr[(G R G^H + sigma I)^-1 Sigma-hat] - log|G R G^H + sigma I|,
/// constant terms of the Wishart density dropped.
template <typename Scalar>
Scalar log_likelihood(const SampleCovariance<Scalar>& s, const SievedBasis<Scalar>& basis,
                      const CMatrix<Scalar>& r, Scalar sigma) {
  if (r.rows() != basis.M() || r.cols() != basis.M()) {
    throw std::invalid_argument("log_likelihood: R must be M x M");
  }
  CMatrix<Scalar> c = basis.G() * r * basis.G().adjoint();
  c = hermitian_part(c);
  c.diagonal().array() += Complex<Scalar>(sigma);
  Eigen::LLT<CMatrix<Scalar>> llt(c);
  if (llt.info() != Eigen::Success) {
    throw DomainError("log_likelihood: model covariance G R G^H + sigma I is not positive definite");
  }
  const auto& lower = llt.matrixLLT();
  Scalar log_det = 0;
  for (Eigen::Index i = 0; i < lower.rows(); ++i) log_det += Scalar(2) * std::log(lower(i, i).real());
  const Scalar fit = llt.solve(s.matrix).trace().real();
  return -fit - log_det;
}

namespace detail {

template <typename Scalar>
void check_conditioning(const SievedBasis<Scalar>& basis) {
  if (basis.gram_conditioning() > Scalar(1e12)) {
    throw ConditioningError("G^H G condition number " +
                            std::to_string(double(basis.gram_conditioning())) +
                            " exceeds 1e12; reduce M");
  }
}

// G^+ (X - sigma I) G^+^H, Hermitian part.
template <typename Scalar>
CMatrix<Scalar> project_coefficients(const SievedBasis<Scalar>& basis, const CMatrix<Scalar>& x,
                                     Scalar sigma) {
  CMatrix<Scalar> shifted = x;
  shifted.diagonal().array() -= Complex<Scalar>(sigma);
  CMatrix<Scalar> r = basis.G_pinv() * shifted * basis.G_pinv().adjoint();
  return hermitian_part(r);
}

template <typename Scalar>
Scalar likelihood_or_neg_inf(const SampleCovariance<Scalar>& s, const SievedBasis<Scalar>& basis,
                             const CMatrix<Scalar>& r, Scalar sigma) {
  try {
    return log_likelihood(s, basis, r, sigma);
  } catch (const DomainError&) {
    return -std::numeric_limits<Scalar>::infinity();
  }
}

}  // namespace detail

/// Known noise power: R-hat = G^+ (Sigma-hat - sigma I) G^+^H.
template <typename Scalar>
KappaEstimate<Scalar> estimate_known_noise(const SampleCovariance<Scalar>& s,
                                           std::shared_ptr<const SievedBasis<Scalar>> basis,
                                           Scalar sigma) {
  if (!(sigma >= Scalar(0))) throw std::invalid_argument("estimate_known_noise: sigma < 0");
  if (basis->L() != s.size()) throw std::invalid_argument("estimate_known_noise: L mismatch");
  detail::check_conditioning(*basis);
  KappaEstimate<Scalar> est;
  est.R_hat = detail::project_coefficients(*basis, s.matrix, sigma);
  est.sigma_hat = sigma;
  est.log_likelihood = detail::likelihood_or_neg_inf(s, *basis, est.R_hat, sigma);
  est.basis = std::move(basis);
  return est;
}

template <typename Scalar>
KappaEstimate<Scalar> estimate_known_noise(const SampleCovariance<Scalar>& s,
                                           const SievedBasis<Scalar>& basis, Scalar sigma) {
  return estimate_known_noise(s, std::make_shared<const SievedBasis<Scalar>>(basis), sigma);
}

/// Joint maximum likelihood for (R, sigma):
///   sigma-hat = Tr(Sigma-hat - G G^+ Sigma-hat) / (L - M)
///   R-hat     = G^+ (Sigma-hat - sigma-hat I) G^+^H
/// A negative sigma-hat is clamped to 0 and flagged.
template <typename Scalar>
KappaEstimate<Scalar> estimate_joint(const SampleCovariance<Scalar>& s,
                                     std::shared_ptr<const SievedBasis<Scalar>> basis) {
  const Eigen::Index n = s.size();
  const Eigen::Index m = basis->M();
  if (basis->L() != n) throw std::invalid_argument("estimate_joint: L mismatch");
  if (m >= n) {
    throw IdentifiabilityError("estimate_joint: joint estimation requires M < L (M = " +
                               std::to_string(m) + ", L = " + std::to_string(n) + ")");
  }
  detail::check_conditioning(*basis);

  const auto& u = basis->range_basis();
  const Scalar total = s.matrix.trace().real();
  const Scalar in_range = (u.adjoint() * s.matrix * u).trace().real();
  Scalar sigma_hat = (total - in_range) / Scalar(n - m);

  KappaEstimate<Scalar> est;
  if (sigma_hat < Scalar(0)) {
    sigma_hat = Scalar(0);
    est.sigma_clamped = true;
  }
  est.sigma_hat = sigma_hat;
  est.R_hat = detail::project_coefficients(*basis, s.matrix, sigma_hat);
  est.log_likelihood = detail::likelihood_or_neg_inf(s, *basis, est.R_hat, sigma_hat);
  est.basis = std::move(basis);
  return est;
}

template <typename Scalar>
KappaEstimate<Scalar> estimate_joint(const SampleCovariance<Scalar>& s,
                                     const SievedBasis<Scalar>& basis) {
  return estimate_joint(s, std::make_shared<const SievedBasis<Scalar>>(basis));
}

/// Penalized criterion used to pick the sieve dimension. The penalty is
/// 2 M^2 log L; the fit term uses the full-sample log-likelihood N * l, where
/// l is the per-snapshot value returned by log_likelihood.
template <typename Scalar>
Scalar bic_value(Scalar log_likelihood_value, std::int64_t n_snapshots, Eigen::Index m,
                 Eigen::Index n_sensors) {
  return Scalar(-2) * Scalar(n_snapshots) * log_likelihood_value +
         Scalar(2) * Scalar(m) * Scalar(m) * std::log(Scalar(n_sensors));
}

template <typename Scalar = double>
struct BicEntry {
  Eigen::Index M;
  Scalar log_likelihood;
  Scalar bic;
  bool ok;
  std::string error;
};

template <typename Scalar = double>
struct BicScan {
  std::vector<BicEntry<Scalar>> entries;
  Eigen::Index selected_M;

  const BicEntry<Scalar>* selected() const {
    for (const auto& e : entries) {
      if (e.ok && e.M == selected_M) return &e;
    }
    return nullptr;
  }
};

class ScanFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Default scan range {2, 2 + stride, ...} capped at min(L - 1, N).
inline std::vector<Eigen::Index> default_bic_range(Eigen::Index n_sensors, std::int64_t n_snapshots,
                                                   Eigen::Index stride = 1) {
  if (stride < 1) throw std::invalid_argument("default_bic_range: stride must be >= 1");
  const Eigen::Index hi = std::min<Eigen::Index>(n_sensors - 1, Eigen::Index(n_snapshots));
  std::vector<Eigen::Index> ms;
  for (Eigen::Index m = 2; m <= hi; m += stride) ms.push_back(m);
  if (ms.empty() && hi >= 1) ms.push_back(hi);
  return ms;
}

/// Fits the joint estimator for every candidate M and selects argmin BIC,
/// ties going to the smallest M. Failed candidates are kept with ok = false.
template <typename Scalar>
BicScan<Scalar> bic_scan(const SampleCovariance<Scalar>& s, const Matrix<Scalar>& h,
                         const std::vector<Eigen::Index>& m_values) {
  const Eigen::Index n = s.size();
  for (const auto m : m_values) {
    if (m < 1 || m > n - 1) {
      throw std::invalid_argument("bic_scan: M = " + std::to_string(m) + " outside [1, L-1]");
    }
  }
  if (m_values.empty()) throw std::invalid_argument("bic_scan: no candidate M");
  const auto eig = descending_eigen(s.matrix);

  BicScan<Scalar> scan;
  scan.entries.reserve(m_values.size());
  for (const auto m : m_values) {
    BicEntry<Scalar> entry{m, std::numeric_limits<Scalar>::quiet_NaN(),
                           std::numeric_limits<Scalar>::quiet_NaN(), false, {}};
    try {
      auto basis = std::make_shared<const SievedBasis<Scalar>>(eig.vectors.leftCols(m), h);
      const auto est = estimate_joint(s, std::move(basis));
      if (!std::isfinite(est.log_likelihood)) {
        throw DomainError("non-finite log-likelihood (noise estimate clamped at 0)");
      }
      entry.log_likelihood = est.log_likelihood;
      entry.bic = bic_value(est.log_likelihood, s.n_snapshots, m, n);
      entry.ok = true;
    } catch (const NumericalError& e) {
      entry.error = e.what();
    }
    scan.entries.push_back(std::move(entry));
  }

  const BicEntry<Scalar>* best = nullptr;
  for (const auto& e : scan.entries) {
    if (!e.ok) continue;
    if (best == nullptr || e.bic < best->bic || (e.bic == best->bic && e.M < best->M)) best = &e;
  }
  if (best == nullptr) throw ScanFailure("bic_scan: every candidate M failed");
  scan.selected_M = best->M;
  return scan;
}

template <typename Scalar>
BicScan<Scalar> bic_scan(const SampleCovariance<Scalar>& s, const SensorArray<Scalar>& array,
                         const std::vector<Eigen::Index>& m_values) {
  if (array.size() != s.size()) throw std::invalid_argument("bic_scan: L mismatch");
  return bic_scan(s, gram_matrix(array), m_values);
}

/// I-hat(r) = sum_ij R_ij psi_i(r) conj(psi_j(r)) on every grid point, with
/// psi_k = sum_i W_ik phi_i. Negative values are kept.
template <typename Scalar>
Vector<Scalar> intensity_estimate(const KappaEstimate<Scalar>& est, const SensorArray<Scalar>& array,
                                  const SphereGrid<Scalar>& grid) {
  if (!est.basis || est.basis->L() != array.size()) {
    throw std::invalid_argument("intensity_estimate: estimate and array disagree on L");
  }
  // u(r) = conj(psi(r)) = W^H a(r); I-hat = u^H R u.
  const CMatrix<Scalar> u = est.basis->W().adjoint() * steering_matrix(array, grid);
  const CMatrix<Scalar> ru = est.R_hat * u;
  return (u.conjugate().array() * ru.array()).colwise().sum().real().transpose();
}

/// E[R-hat] = G^+ (Sigma - sigma I) G^+^H for the population covariance of
/// `model`: the target of the known-noise estimator for a fixed basis.
template <typename Scalar>
CMatrix<Scalar> kappa_project_expectation(const SourceModel<Scalar>& model,
                                          const SensorArray<Scalar>& array, Scalar sigma,
                                          const SievedBasis<Scalar>& basis,
                                          const SphereGrid<Scalar>& grid) {
  if (!(sigma >= Scalar(0))) throw std::invalid_argument("kappa_project_expectation: sigma < 0");
  detail::check_conditioning(basis);
  const CMatrix<Scalar> cov = population_covariance(model, array, sigma, grid);
  return detail::project_coefficients(basis, cov, sigma);
}

}  // namespace siml
