#pragma once

// Text formats exchanged with the plotting scripts and between CLI stages.
// Every floating-point value is written with 17 significant digits so that
// files round-trip exactly and reruns are byte-identical.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siml/array_model.hpp"
#include "siml/estimators.hpp"
#include "siml/field_sim.hpp"
#include "siml/sphere_grid.hpp"

namespace siml::io {

using nlohmann::json;
namespace fs = std::filesystem;

/// Malformed input file (bad header, wrong column count, unparsable number).
class FormatError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string format_double(double v);

// Grid: header "x,y,z,weight", one row per pixel in grid order.
void write_grid_csv(std::ostream& os, const SphereGrid<double>& grid);

// Array layout: header "x_m,y_m,z_m". The wavelength travels separately.
void write_array_csv(std::ostream& os, const SensorArray<double>& array);
Matrix<double> read_array_csv(std::istream& is);
SensorArray<double> load_array_csv(const fs::path& path, double wavelength);

// Source model JSON:
//   {"components": [{"type": "point", "direction": [x, y, z], "power": p},
//                   {"type": "blob", "center": [x, y, z], "width": w, "peak_power": p}],
//    "correlations": [{"i": 0, "j": 1, "rho": [re, im]}]}
// Directions may also be given as {"theta": colatitude, "phi": azimuth}.
json source_model_to_json(const SourceModel<double>& model);
SourceModel<double> source_model_from_json(const json& j);

// Complex matrices: one CSV row per matrix row, entries interleaved as
// re_0,im_0,re_1,im_1,... with no header.
void write_complex_matrix_csv(std::ostream& os, const CMatrix<double>& m);
CMatrix<double> read_complex_matrix_csv(std::istream& is);

struct CovarianceSidecar {
  std::int64_t n_snapshots = 0;
  Eigen::Index L = 0;
  double sigma = 0;
  double snr_db = 0;
  std::uint64_t seed = 0;
};
json covariance_sidecar_to_json(const CovarianceSidecar& s);
CovarianceSidecar covariance_sidecar_from_json(const json& j);

/// Reads `<stem>.csv` and the `N` field of `<stem>.json`.
SampleCovariance<double> load_sample_covariance(const fs::path& csv_path);

json estimate_sidecar(const KappaEstimate<double>& est);

// BIC scan: header "M,loglik,bic,selected"; failed candidates carry nan.
void write_bic_csv(std::ostream& os, const BicScan<double>& scan);

// Intensity map / spectrum: header "x,y,z,weight,value".
void write_map_csv(std::ostream& os, const SphereGrid<double>& grid, const Vector<double>& values);

struct MetricRow {
  std::string method;
  Eigen::Index M = 0;  // 0 for beamformers
  double snr_db = 0;
  std::uint64_t seed = 0;
  double rel_mse_fit = 0;
  double rel_mse_raw = 0;
  double rms_contrast = 0;
  double rms_contrast_norm = 0;
};

// Metric table: header
// "method,M,snr_db,seed,rel_mse_fit,rel_mse_raw,rms_contrast,rms_contrast_norm".
void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(std::istream& is);

/// Writes `content` to `path`, creating parent directories.
void write_text_file(const fs::path& path, const std::string& content);
std::string read_text_file(const fs::path& path);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace siml::io
