#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "oracle/ml_oracle.hpp"
#include "siml/estimators.hpp"

using namespace siml;
using testing::rel_fro;

namespace {

SampleCovariance<double> simulated(const SensorArray<double>& array, double sigma, std::int64_t n,
                                   std::uint64_t seed) {
  const auto grid = make_fibonacci_grid<double>(2000);
  SourceModel<double> model;
  model.components.push_back(BlobSource<double>{Direction<double>::from_spherical(0.3, 0.5), 0.3, 1.0});
  model.components.push_back(PointSource<double>{Direction<double>::from_spherical(1.0, 2.0), 0.05});
  return sample_covariance(population_covariance(model, array, sigma, grid), n, seed);
}

SievedBasis<double> identity_basis(Eigen::Index n) {
  return SievedBasis<double>(CMatrix<double>::Identity(n, n), Matrix<double>::Identity(n, n));
}

}  // namespace

TEST_CASE("eigen_sieve picks the leading eigenvectors") {
  SampleCovariance<double> s{CMatrix<double>::Zero(3, 3), 10};
  s.matrix.diagonal() << 3.0, 2.0, 1.0;
  const SievedBasis<double> b = eigen_sieve(s, Matrix<double>(Matrix<double>::Identity(3, 3)), 2);
  REQUIRE(b.M() == 2);
  CHECK(std::abs(std::abs(b.W()(0, 0)) - 1.0) < 1e-12);
  CHECK(std::abs(std::abs(b.W()(1, 1)) - 1.0) < 1e-12);
  CHECK(b.W().row(2).norm() < 1e-12);
}

TEST_CASE("eigen_sieve with M = L gives a unitary W") {
  const auto array = random_disk_array<double>(10, 1.0, 2.0, 5);
  const auto s = simulated(array, 0.5, 300, 1);
  const auto b = eigen_sieve(s, array, 10);
  CHECK((b.W().adjoint() * b.W() - CMatrix<double>::Identity(10, 10)).norm() < 1e-12);
}

TEST_CASE("eigen_sieve argument checks") {
  const auto array = random_disk_array<double>(6, 1.0, 2.0, 5);
  const auto s = simulated(array, 0.5, 100, 1);
  CHECK_THROWS_AS(eigen_sieve(s, array, 7), std::invalid_argument);
  CHECK_THROWS_AS(eigen_sieve(s, array, 0), std::invalid_argument);
}

TEST_CASE("rank-deficient G raises a coherency error") {
  CMatrix<double> w = CMatrix<double>::Zero(4, 2);
  w(0, 0) = 1.0;
  w(0, 1) = 1.0;
  CHECK_THROWS_AS(SievedBasis<double>(w, Matrix<double>::Identity(4, 4)), CoherencyError);
}

TEST_CASE("known noise: white data gives a zero estimate") {
  const Eigen::Index n = 8;
  const SampleCovariance<double> s{2.0 * CMatrix<double>::Identity(n, n), 100};
  const auto b = std::make_shared<const SievedBasis<double>>(identity_basis(n));
  const auto est = estimate_known_noise(s, b, 2.0);
  CHECK(est.R_hat.norm() < 1e-14);
}

TEST_CASE("known noise: M = L reconstructs the sample covariance") {
  const auto array = random_disk_array<double>(16, 1.0, 2.0, 9);
  const auto s = simulated(array, 0.3, 500, 2);
  const auto est = estimate_known_noise(s, std::make_shared<const SievedBasis<double>>(
                                               eigen_sieve(s, array, 16)),
                                        0.3);
  const CMatrix<double> G = est.basis->G();
  CMatrix<double> target = s.matrix;
  target.diagonal().array() -= 0.3;
  CHECK(rel_fro(G * est.R_hat * G.adjoint(), target) < 1e-10);
}

TEST_CASE("joint: white data recovers sigma exactly") {
  const auto array = random_disk_array<double>(12, 1.0, 2.0, 3);
  const Eigen::Index n = array.size();
  const SampleCovariance<double> s{1.7 * CMatrix<double>::Identity(n, n), 100};
  CMatrix<double> w = testing::random_complex(n, 4, 11).householderQr().householderQ() *
                      CMatrix<double>::Identity(n, 4);
  const auto b = std::make_shared<const SievedBasis<double>>(w, gram_matrix(array));
  const auto est = estimate_joint(s, b);
  CHECK(std::abs(est.sigma_hat - 1.7) < 1e-12);
  CHECK(est.R_hat.norm() < 1e-12);
}

TEST_CASE("joint: exact-model data returns the generating parameters") {
  const auto array = random_disk_array<double>(20, 1.0, 2.0, 4);
  const auto s0 = simulated(array, 0.5, 400, 3);
  const auto b = std::make_shared<const SievedBasis<double>>(eigen_sieve(s0, array, 6));
  const CMatrix<double> Q = testing::random_psd(6, 21);
  const double sigma = 0.8;
  SampleCovariance<double> s{b->G() * Q * b->G().adjoint(), 400};
  s.matrix.diagonal().array() += sigma;
  const auto est = estimate_joint(s, b);
  CHECK(std::abs(est.sigma_hat - sigma) / sigma < 1e-10);
  CHECK(rel_fro(est.R_hat, Q) < 1e-10);
  CHECK_FALSE(est.sigma_clamped);
}

TEST_CASE("joint: M >= L is not identifiable") {
  const auto array = random_disk_array<double>(6, 1.0, 2.0, 4);
  const auto s = simulated(array, 0.5, 100, 3);
  const auto b = std::make_shared<const SievedBasis<double>>(eigen_sieve(s, array, 6));
  CHECK_THROWS_AS(estimate_joint(s, b), IdentifiabilityError);
}

TEST_CASE("joint: negative sigma is clamped and flagged") {
  // All the energy lives in the sieved subspace except a tiny negative residue.
  const Eigen::Index n = 4;
  SampleCovariance<double> s{CMatrix<double>::Zero(n, n), 10};
  s.matrix.diagonal() << 5.0, 4.0, 3.0, -1e-3;
  CMatrix<double> w = CMatrix<double>::Identity(n, 3);
  const auto b = std::make_shared<const SievedBasis<double>>(w, Matrix<double>::Identity(n, n));
  const auto est = estimate_joint(s, b);
  CHECK(est.sigma_clamped);
  CHECK(est.sigma_hat == 0.0);
  CHECK(est.log_likelihood == -std::numeric_limits<double>::infinity());
}

TEST_CASE("ill-conditioned Gram raises a conditioning error") {
  // Two nearly parallel columns: singular values far apart but nonzero.
  const Eigen::Index n = 4;
  CMatrix<double> w = CMatrix<double>::Zero(n, 2);
  w(0, 0) = 1.0;
  w(0, 1) = 1.0;
  w(1, 1) = 1e-8;
  const auto b = std::make_shared<const SievedBasis<double>>(w, Matrix<double>::Identity(n, n));
  const SampleCovariance<double> s{CMatrix<double>::Identity(n, n), 10};
  CHECK_THROWS_AS(estimate_known_noise(s, b, 0.5), ConditioningError);
}

TEST_CASE("log-likelihood closed cases") {
  const auto array = random_disk_array<double>(10, 1.0, 2.0, 8);
  const auto s = simulated(array, 0.4, 200, 5);
  const auto b = eigen_sieve(s, array, 4);
  const double sigma = 0.7;
  const double l = double(array.size());

  const double ll0 = log_likelihood(s, b, CMatrix<double>(CMatrix<double>::Zero(4, 4)), sigma);
  CHECK(ll0 == doctest::Approx(-s.matrix.trace().real() / sigma - l * std::log(sigma)).epsilon(1e-12));

  const CMatrix<double> Q = testing::random_psd(4, 3);
  SampleCovariance<double> exact{b.G() * Q * b.G().adjoint(), 200};
  exact.matrix.diagonal().array() += sigma;
  const double ld = std::log(exact.matrix.determinant().real());
  CHECK(log_likelihood(exact, b, Q, sigma) == doctest::Approx(-l - ld).epsilon(1e-10));

  // Dense reference with an explicit inverse and determinant.
  const CMatrix<double> R = testing::random_psd(4, 4);
  CMatrix<double> C = b.G() * R * b.G().adjoint();
  C.diagonal().array() += sigma;
  const double ref = -(C.inverse() * s.matrix).trace().real() - std::log(C.determinant().real());
  CHECK(log_likelihood(s, b, R, sigma) == doctest::Approx(ref).epsilon(1e-10));

  CHECK_THROWS_AS(log_likelihood(s, b, CMatrix<double>(-100.0 * CMatrix<double>::Identity(4, 4)), sigma), DomainError);
}

TEST_CASE("closed forms agree with direct numerical maximization") {
  for (std::uint64_t inst = 0; inst < 3; ++inst) {
    const auto array = random_disk_array<double>(12, 1.0, 1.5, 100 + inst);
    const auto s = simulated(array, 0.6, 3000, 200 + inst);
    CAPTURE(inst);
    SUBCASE("known noise, M = 6") {
      const auto b = std::make_shared<const SievedBasis<double>>(eigen_sieve(s, array, 6));
      const auto est = estimate_known_noise(s, b, 0.6);
      oracle::Problem prob{s.matrix, b->G(), false, 0.6};
      const auto res = oracle::maximize_likelihood(prob);
      REQUIRE(res.converged);
      CHECK(rel_fro(est.R_hat, prob.unpack_R(res.x)) < 1e-4);
    }
    SUBCASE("joint, M = 5") {
      const auto b = std::make_shared<const SievedBasis<double>>(eigen_sieve(s, array, 5));
      const auto est = estimate_joint(s, b);
      oracle::Problem prob{s.matrix, b->G(), true, 0.0};
      const auto res = oracle::maximize_likelihood(prob);
      REQUIRE(res.converged);
      CHECK(rel_fro(est.R_hat, prob.unpack_R(res.x)) < 1e-4);
      CHECK(std::abs(est.sigma_hat - prob.sigma(res.x)) / est.sigma_hat < 1e-4);
    }
  }
}

TEST_CASE("joint estimate is a local maximum of the likelihood") {
  const auto array = random_disk_array<double>(14, 1.0, 2.0, 31);
  const auto s = simulated(array, 0.5, 1000, 32);
  const auto b = std::make_shared<const SievedBasis<double>>(eigen_sieve(s, array, 5));
  const auto est = estimate_joint(s, b);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double scale = 1e-3 * est.R_hat.norm();
  for (int k = 0; k < 100; ++k) {
    const CMatrix<double> dR = scale * testing::random_hermitian(5, 1000 + k);
    const double ds = 1e-3 * est.sigma_hat * nd(rng);
    double ll;
    try {
      ll = log_likelihood(s, *b, CMatrix<double>(est.R_hat + dR), est.sigma_hat + ds);
    } catch (const DomainError&) {
      continue;
    }
    CHECK(est.log_likelihood >= ll);
  }
}

TEST_CASE("joint intensity map depends only on the sieved subspace") {
  const auto array = random_disk_array<double>(14, 1.0, 2.0, 41);
  const auto grid = make_fibonacci_grid<double>(300);
  const auto s = simulated(array, 0.5, 800, 42);
  const auto b = eigen_sieve(s, array, 6);
  const CMatrix<double> U = testing::random_complex(6, 6, 43).householderQr().householderQ();
  const auto e1 = estimate_joint(s, b);
  const auto e2 = estimate_joint(s, SievedBasis<double>(b.W() * U, gram_matrix(array)));
  CHECK(rel_fro(U * e2.R_hat * U.adjoint(), e1.R_hat) < 1e-10);
  const Vector<double> m1 = intensity_estimate(e1, array, grid);
  const Vector<double> m2 = intensity_estimate(e2, array, grid);
  CHECK((m1 - m2).norm() / m1.norm() < 1e-10);
}

TEST_CASE("BIC formula and scan bookkeeping") {
  CHECK(bic_value(0.0, 1, 3, 300) == doctest::Approx(2.0 * 9.0 * std::log(300.0)));
  CHECK(2.0 * std::log(300.0) == doctest::Approx(11.407).epsilon(1e-4));
  CHECK(bic_value(-2.0, 10, 1, 4) == doctest::Approx(40.0 + 2.0 * std::log(4.0)));

  const auto array = random_disk_array<double>(20, 1.0, 2.0, 51);
  const auto s = simulated(array, 0.2, 2000, 52);
  const auto single = bic_scan(s, array, {7});
  CHECK(single.selected_M == 7);
  REQUIRE(single.entries.size() == 1);

  const auto scan = bic_scan(s, array, default_bic_range(20, 2000, 1));
  CHECK(scan.entries.size() == 18);
  const auto* best = scan.selected();
  REQUIRE(best != nullptr);
  for (const auto& e : scan.entries) {
    if (e.ok) CHECK(best->bic <= e.bic);
  }
  CHECK_THROWS_AS(bic_scan(s, array, {20}), std::invalid_argument);
}

TEST_CASE("default BIC range") {
  const auto r = default_bic_range(10, 1000, 3);
  CHECK(r == std::vector<Eigen::Index>{2, 5, 8});
  CHECK(default_bic_range(100, 4, 1) == std::vector<Eigen::Index>{2, 3, 4});
}

TEST_CASE("intensity estimate") {
  const auto array = random_disk_array<double>(9, 1.0, 2.0, 61);
  const auto grid = make_fibonacci_grid<double>(100);
  const auto s = simulated(array, 0.5, 500, 62);
  auto basis = std::make_shared<const SievedBasis<double>>(eigen_sieve(s, array, 4));
  KappaEstimate<double> est{CMatrix<double>::Zero(4, 4), 0.5, 0.0, false, basis};
  CHECK(intensity_estimate(est, array, grid).norm() == 0.0);

  const CMatrix<double> psi = basis->W().adjoint() * steering_matrix(array, grid);  // M x P

  est.R_hat.setZero();
  est.R_hat(0, 0) = 1.0;
  const Vector<double> single = intensity_estimate(est, array, grid);
  CHECK((single - psi.row(0).cwiseAbs2().transpose()).norm() < 1e-10 * single.norm());

  est.R_hat = testing::random_hermitian(4, 63);
  const Vector<double> map = intensity_estimate(est, array, grid);
  for (Eigen::Index p = 0; p < grid.size(); ++p) {
    Complex<double> acc = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) acc += est.R_hat(i, j) * std::conj(psi(i, p)) * psi(j, p);
    }
    CHECK(std::abs(acc.imag()) < 1e-10);
    CHECK(std::abs(map[p] - acc.real()) < 1e-10 * std::max(1.0, std::abs(acc.real())));
  }
}

TEST_CASE("projected expectation") {
  const auto array = random_disk_array<double>(10, 1.0, 2.0, 71);
  const auto grid = make_fibonacci_grid<double>(1500);
  const auto s = simulated(array, 0.5, 500, 72);
  const auto b = eigen_sieve(s, array, 10);
  CHECK(kappa_project_expectation(SourceModel<double>{}, array, 0.5, b, grid).norm() < 1e-12);

  SourceModel<double> model;
  model.components.push_back(BlobSource<double>{Direction<double>::from_spherical(0.2, 1.0), 0.25, 2.0});
  const CMatrix<double> E = kappa_project_expectation(model, array, 0.5, b, grid);
  const CMatrix<double> signal = population_covariance(model, array, 0.0, grid);
  CHECK(rel_fro(b.G() * E * b.G().adjoint(), signal) < 1e-10);
}
