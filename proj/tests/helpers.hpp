#pragma once

#include <cstdint>
#include <random>

#include "siml/types.hpp"

namespace testing {

inline siml::CMatrix<double> random_complex(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  siml::CMatrix<double> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = {n(rng), n(rng)};
  }
  return m;
}

inline siml::CMatrix<double> random_psd(Eigen::Index n, std::uint64_t seed) {
  const siml::CMatrix<double> a = random_complex(n, n, seed);
  return a * a.adjoint() / double(n);
}

inline siml::CMatrix<double> random_hermitian(Eigen::Index n, std::uint64_t seed) {
  const siml::CMatrix<double> a = random_complex(n, n, seed);
  return (a + a.adjoint()) / 2.0;
}

inline double rel_fro(const siml::CMatrix<double>& a, const siml::CMatrix<double>& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace testing
