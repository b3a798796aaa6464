#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siml/array_model.hpp"
#include "siml/field_sim.hpp"
#include "siml/io.hpp"
#include "siml/sphere_grid.hpp"

namespace siml {

/// Invalid experiment configuration; the message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ArrayConfig {
  Eigen::Index L = 100;
  double aperture_in_wavelengths = 50.0;
  std::uint64_t layout_seed = 0;
  /// CSV layout (x_m,y_m,z_m); overrides the random layout when set.
  std::optional<std::string> layout_file;
  /// Redraw the random layout for every repeat (layout_seed + repeat).
  bool vary_layout = false;

  bool operator==(const ArrayConfig&) const = default;
};

struct GridConfig {
  std::string kind = "cap";  // "cap" | "fibonacci"
  Eigen::Index P = 2000;     // fibonacci
  std::array<double, 3> center{0.0, 0.0, 1.0};
  double radius = 0.5;       // cap, radians
  Eigen::Index n_rings = 40;  // cap

  bool operator==(const GridConfig&) const = default;
};

struct SimlConfig {
  /// Fixed sieve dimension; empty selects M by BIC.
  std::optional<Eigen::Index> M;
  Eigen::Index bic_min = 2;
  /// Upper end of the BIC scan; 0 means min(L - 1, N).
  Eigen::Index bic_max = 0;
  Eigen::Index bic_stride = 1;
  bool clip_negative = false;

  bool operator==(const SimlConfig&) const = default;
};

struct ExperimentConfig {
  ArrayConfig array;
  double wavelength = 1.0;
  GridConfig grid;
  nlohmann::json source_model = nlohmann::json::object();
  std::vector<double> snr_db_list{5.0};
  std::int64_t n_snapshots = 2000;
  Eigen::Index n_repeats = 1;
  std::uint64_t seed_base = 0;
  std::vector<std::string> methods{"siml_joint", "mb", "mvdr", "aar"};
  SimlConfig siml;
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"siml_known", "siml_joint", "mb", "mvdr", "aar"};
  return m;
}

/// Parse and validate; relative layout/source-model paths resolve against
/// `base_dir`. Throws ConfigError with a field-level message.
ExperimentConfig config_from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& cfg);

SphereGrid<double> build_grid(const GridConfig& g);
SensorArray<double> build_array(const ExperimentConfig& cfg, Eigen::Index repeat = 0);
SourceModel<double> build_source_model(const ExperimentConfig& cfg);
std::vector<Eigen::Index> bic_candidates(const ExperimentConfig& cfg);

struct CellFailure {
  double snr_db;
  Eigen::Index repeat;
  std::string method;
  std::string error;
};

struct ExperimentReport {
  std::filesystem::path output_dir;
  std::vector<io::MetricRow> metrics;
  /// BIC-selected M per (snr index, repeat); empty when M is fixed.
  std::vector<std::vector<Eigen::Index>> selected_M;
  std::vector<double> sigma_per_snr;
  std::vector<CellFailure> failures;
  std::vector<std::string> files;
};

struct RunOptions {
  unsigned threads = 1;
};

/// Runs every (snr, repeat) cell and writes maps, BIC scans, metrics.csv and
/// manifest.json under cfg.output_dir. Output bytes depend only on cfg.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct SummaryRow {
  std::string method;
  double snr_db = 0;
  std::size_t n = 0;
  double mean_M = 0;
  double mean_rel_mse_fit = 0, std_rel_mse_fit = 0;
  double mean_rel_mse_raw = 0, std_rel_mse_raw = 0;
  double mean_rms_contrast = 0, std_rms_contrast = 0;
  double mean_rms_contrast_norm = 0, std_rms_contrast_norm = 0;
};

/// Aggregates metric rows per (method, snr) in order of first appearance;
/// std is the sample standard deviation (0 for a single repeat).
std::vector<SummaryRow> summarize_metrics(const std::vector<io::MetricRow>& rows);

/// Reads metrics.csv from a report directory, writes summary.csv, and records
/// warnings for (method, snr) groups with fewer rows than the manifest's
/// n_repeats.
std::vector<SummaryRow> compare_summary(const std::filesystem::path& report_dir);

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);

inline constexpr const char* kToolVersion = "siml 0.1.0";

}  // namespace siml
