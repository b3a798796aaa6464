#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "siml/sphere_grid.hpp"
#include "siml/types.hpp"

namespace siml {

/// Real-valued map on a grid. The grid must outlive the map.
template <typename Scalar = double>
struct IntensityMap {
  const SphereGrid<Scalar>* grid;
  Vector<Scalar> values;
  std::string label;

  IntensityMap(const SphereGrid<Scalar>& g, Vector<Scalar> v, std::string l = {})
      : grid(&g), values(std::move(v)), label(std::move(l)) {
    if (values.size() != grid->size()) {
      throw std::invalid_argument("IntensityMap: values length does not match grid");
    }
    if (!values.allFinite()) throw std::invalid_argument("IntensityMap: non-finite value");
  }
};

namespace detail {

template <typename Scalar>
Scalar weighted_dot(const Vector<Scalar>& w, const Vector<Scalar>& a, const Vector<Scalar>& b) {
  return (w.array() * a.array() * b.array()).sum();
}

}  // namespace detail

/// ||c est - truth||^2 / ||truth||^2 in the pixel-weighted norm. With
/// scale_fit, c = <est, truth> / ||est||^2 (the minimizer); otherwise c = 1.
template <typename Scalar>
Scalar relative_mse(const IntensityMap<Scalar>& estimate, const IntensityMap<Scalar>& truth,
                    bool scale_fit) {
  if (estimate.grid != truth.grid && estimate.grid->size() != truth.grid->size()) {
    throw std::invalid_argument("relative_mse: maps live on different grids");
  }
  const auto& w = truth.grid->weights();
  const Scalar tt = detail::weighted_dot(w, truth.values, truth.values);
  if (!(tt > Scalar(0))) throw std::domain_error("relative_mse: truth map is identically zero");
  Scalar c = 1;
  if (scale_fit) {
    const Scalar ee = detail::weighted_dot(w, estimate.values, estimate.values);
    c = ee > Scalar(0) ? detail::weighted_dot(w, estimate.values, truth.values) / ee : Scalar(0);
  }
  const Vector<Scalar> diff = c * estimate.values - truth.values;
  return detail::weighted_dot(w, diff, diff) / tt;
}

/// Pixel-weighted standard deviation about the weighted mean.
template <typename Scalar>
Scalar rms_contrast(const IntensityMap<Scalar>& map) {
  if (map.values.size() < 2) throw std::invalid_argument("rms_contrast: need at least 2 pixels");
  const auto& w = map.grid->weights();
  const Scalar total = w.sum();
  const Scalar mean = (w.array() * map.values.array()).sum() / total;
  const Scalar var = (w.array() * (map.values.array() - mean).square()).sum() / total;
  return std::sqrt(var);
}

/// rms_contrast of the map divided by its peak absolute value (0 for a zero map).
template <typename Scalar>
Scalar rms_contrast_normalized(const IntensityMap<Scalar>& map) {
  const Scalar peak = map.values.cwiseAbs().maxCoeff();
  if (!(peak > Scalar(0))) return Scalar(0);
  return rms_contrast(map) / peak;
}

}  // namespace siml
