#include <doctest.h>

#include "helpers.hpp"
#include "siml/beamformers.hpp"

using namespace siml;

namespace {

struct Setup {
  SensorArray<double> array = random_disk_array<double>(16, 1.0, 3.0, 17);
  SphereGrid<double> grid = make_fibonacci_grid<double>(400);

  SampleCovariance<double> data(double sigma, std::int64_t n, std::uint64_t seed) const {
    SourceModel<double> m;
    m.components.push_back(PointSource<double>{grid.direction(40), 1.0});
    m.components.push_back(BlobSource<double>{grid.direction(300), 0.2, 0.5});
    return sample_covariance(population_covariance(m, array, sigma, grid), n, seed);
  }
};

const BeamformerSpec<double> kMB{BeamformerKind::MB, 0.0};
const BeamformerSpec<double> kMVDR{BeamformerKind::MVDR, 0.0};
const BeamformerSpec<double> kAAR{BeamformerKind::AAR, 0.0};

}  // namespace

TEST_CASE("identity covariance") {
  const Setup s;
  const Eigen::Index L = s.array.size();
  const SampleCovariance<double> I{CMatrix<double>::Identity(L, L), 100};
  const Vector<double> mb = beamform_spectrum(I, s.array, s.grid, kMB);
  const Vector<double> mvdr = beamform_spectrum(I, s.array, s.grid, kMVDR);
  const Vector<double> aar = beamform_spectrum(I, s.array, s.grid, kAAR);
  CHECK((mb.array() - 1.0 / double(L)).abs().maxCoeff() < 1e-14);
  CHECK((mvdr.array() - 1.0 / double(L)).abs().maxCoeff() < 1e-14);
  CHECK((aar.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("matched beamformer is calibrated on a unit point source") {
  const Setup s;
  SourceModel<double> m;
  m.components.push_back(PointSource<double>{s.grid.direction(123), 1.0});
  const SampleCovariance<double> S{population_covariance(m, s.array, 0.0, s.grid), 10};
  const Vector<double> mb = beamform_spectrum(S, s.array, s.grid, kMB);
  CHECK(mb[123] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mb.maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("scaling behaviour") {
  const Setup s;
  const auto S = s.data(0.3, 500, 1);
  SampleCovariance<double> S3{3.0 * S.matrix, S.n_snapshots};
  // aH S^-1 a / aH S^-2 a picks up one net power of the scale, like MB and MVDR.
  for (const auto& spec : {kMB, kMVDR, kAAR}) {
    const Vector<double> a = beamform_spectrum(S, s.array, s.grid, spec);
    const Vector<double> b = beamform_spectrum(S3, s.array, s.grid, spec);
    CHECK((b - 3.0 * a).norm() < 1e-12 * b.norm());
  }
}

TEST_CASE("Cauchy-Schwarz bound and nonnegativity") {
  const Setup s;
  const auto S = s.data(0.2, 300, 2);
  const CMatrix<double> Si = S.matrix.inverse();
  const CMatrix<double> A = steering_matrix(s.array, s.grid);
  for (Eigen::Index p = 0; p < s.grid.size(); ++p) {
    const CVector<double> a = A.col(p);
    const double aa = a.squaredNorm();
    const double q1 = (a.adjoint() * S.matrix * a)(0, 0).real();
    const double q2 = (a.adjoint() * Si * a)(0, 0).real();
    CHECK(aa * aa <= q1 * q2 * (1.0 + 1e-12));
  }
  for (const auto& spec : {kMB, kMVDR, kAAR}) {
    CHECK(beamform_spectrum(S, s.array, s.grid, spec).minCoeff() >= -1e-10);
  }
}

TEST_CASE("matches a direct per-direction evaluation") {
  const Setup s;
  const auto S = s.data(0.5, 400, 3);
  const CMatrix<double> Si = S.matrix.inverse();
  const Vector<double> mvdr = beamform_spectrum(S, s.array, s.grid, kMVDR);
  const Vector<double> aar = beamform_spectrum(S, s.array, s.grid, kAAR);
  for (Eigen::Index p = 0; p < s.grid.size(); p += 37) {
    const CVector<double> a = steering_vector(s.array, s.grid.direction(p));
    const double q1 = (a.adjoint() * Si * a)(0, 0).real();
    const double q2 = (a.adjoint() * Si * Si * a)(0, 0).real();
    CHECK(mvdr[p] == doctest::Approx(1.0 / q1).epsilon(1e-9));
    CHECK(aar[p] == doctest::Approx(q1 / q2).epsilon(1e-9));
  }
}

TEST_CASE("singular covariance") {
  const Setup s;
  const Eigen::Index L = s.array.size();
  CMatrix<double> rank1 = CMatrix<double>::Zero(L, L);
  const CVector<double> a = steering_vector(s.array, s.grid.direction(5));
  rank1 = a * a.adjoint();
  const SampleCovariance<double> S{rank1, 1000};
  CHECK_THROWS_AS(beamform_spectrum(S, s.array, s.grid, kMVDR), InversionError);
  CHECK_THROWS_AS(beamform_spectrum(S, s.array, s.grid, kAAR), InversionError);
  CHECK_NOTHROW(beamform_spectrum(S, s.array, s.grid, kMB));
  const BeamformerSpec<double> loaded{BeamformerKind::MVDR, 1e-3};
  const Vector<double> v = beamform_spectrum(S, s.array, s.grid, loaded);
  CHECK(v.allFinite());
  CHECK(v.minCoeff() >= 0.0);

  // Fewer snapshots than sensors: default loading kicks in.
  const auto few = s.data(0.1, 4, 9);
  CHECK(beamform_spectrum(few, s.array, s.grid, kMVDR).allFinite());

  CHECK_THROWS_AS(beamform_spectrum(S, s.array, s.grid, BeamformerSpec<double>{BeamformerKind::MVDR, -1.0}),
                  std::invalid_argument);
}

TEST_CASE("names") {
  CHECK(to_string(BeamformerKind::MB) == "mb");
  CHECK(to_string(BeamformerKind::MVDR) == "mvdr");
  CHECK(to_string(BeamformerKind::AAR) == "aar");
}
