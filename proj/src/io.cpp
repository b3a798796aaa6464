#include "siml/io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace siml::io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw FormatError("cannot parse number '" + s + "'");
  }
  return v;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

void expect_header(std::istream& is, const std::string& header) {
  std::string line;
  if (!std::getline(is, line) || strip_cr(line) != header) {
    throw FormatError("expected CSV header '" + header + "'");
  }
}

Direction<double> direction_from_json(const json& j, const char* field) {
  if (j.is_array()) {
    if (j.size() != 3) throw std::invalid_argument(std::string(field) + ": expected [x, y, z]");
    return Direction<double>(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  }
  if (j.is_object() && j.contains("theta") && j.contains("phi")) {
    return Direction<double>::from_spherical(j.at("theta").get<double>(), j.at("phi").get<double>());
  }
  throw std::invalid_argument(std::string(field) + ": expected [x, y, z] or {theta, phi}");
}

json direction_to_json(const Direction<double>& d) { return json::array({d.x(), d.y(), d.z()}); }

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.17g}", v);
}

void write_grid_csv(std::ostream& os, const SphereGrid<double>& grid) {
  os << "x,y,z,weight\n";
  const auto& pts = grid.points();
  for (Eigen::Index p = 0; p < grid.size(); ++p) {
    os << format_double(pts(p, 0)) << ',' << format_double(pts(p, 1)) << ','
       << format_double(pts(p, 2)) << ',' << format_double(grid.weights()(p)) << '\n';
  }
}

void write_array_csv(std::ostream& os, const SensorArray<double>& array) {
  os << "x_m,y_m,z_m\n";
  const auto& pos = array.positions();
  for (Eigen::Index i = 0; i < pos.rows(); ++i) {
    os << format_double(pos(i, 0)) << ',' << format_double(pos(i, 1)) << ','
       << format_double(pos(i, 2)) << '\n';
  }
}

Matrix<double> read_array_csv(std::istream& is) {
  expect_header(is, "x_m,y_m,z_m");
  std::vector<std::array<double, 3>> rows;
  std::string line;
  while (std::getline(is, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) {
      throw FormatError("array CSV row " + std::to_string(rows.size() + 1) + ": expected 3 columns");
    }
    rows.push_back({parse_double(cells[0]), parse_double(cells[1]), parse_double(cells[2])});
  }
  Matrix<double> pos(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < 3; ++c) pos(Eigen::Index(i), c) = rows[i][std::size_t(c)];
  }
  return pos;
}

SensorArray<double> load_array_csv(const fs::path& path, double wavelength) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open array layout " + path.string());
  return SensorArray<double>(read_array_csv(in), wavelength);
}

json source_model_to_json(const SourceModel<double>& model) {
  json comps = json::array();
  for (const auto& c : model.components) {
    if (const auto* p = std::get_if<PointSource<double>>(&c)) {
      comps.push_back({{"type", "point"}, {"direction", direction_to_json(p->direction)},
                       {"power", p->power}});
    } else {
      const auto& b = std::get<BlobSource<double>>(c);
      comps.push_back({{"type", "blob"}, {"center", direction_to_json(b.center)},
                       {"width", b.width}, {"peak_power", b.peak_power}});
    }
  }
  json corrs = json::array();
  for (const auto& c : model.correlations) {
    corrs.push_back({{"i", c.i}, {"j", c.j}, {"rho", json::array({c.rho.real(), c.rho.imag()})}});
  }
  return {{"components", comps}, {"correlations", corrs}};
}

SourceModel<double> source_model_from_json(const json& j) {
  SourceModel<double> model;
  if (!j.is_object() || !j.contains("components")) {
    throw std::invalid_argument("source_model: missing 'components'");
  }
  std::size_t idx = 0;
  for (const auto& c : j.at("components")) {
    const std::string where = "source_model.components[" + std::to_string(idx++) + "]";
    const auto type = c.value("type", std::string{});
    if (type == "point") {
      model.components.emplace_back(PointSource<double>{
          direction_from_json(c.at("direction"), (where + ".direction").c_str()),
          c.at("power").get<double>()});
    } else if (type == "blob") {
      model.components.emplace_back(BlobSource<double>{
          direction_from_json(c.at("center"), (where + ".center").c_str()),
          c.at("width").get<double>(), c.at("peak_power").get<double>()});
    } else {
      throw std::invalid_argument(where + ".type: expected 'point' or 'blob'");
    }
  }
  if (j.contains("correlations")) {
    for (const auto& c : j.at("correlations")) {
      std::complex<double> rho;
      const auto& r = c.at("rho");
      if (r.is_array()) {
        rho = {r.at(0).get<double>(), r.at(1).get<double>()};
      } else {
        rho = {r.get<double>(), 0.0};
      }
      model.correlations.push_back({c.at("i").get<std::size_t>(), c.at("j").get<std::size_t>(), rho});
    }
  }
  model.validate();
  return model;
}

void write_complex_matrix_csv(std::ostream& os, const CMatrix<double>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) os << ',';
      os << format_double(m(i, j).real()) << ',' << format_double(m(i, j).imag());
    }
    os << '\n';
  }
}

CMatrix<double> read_complex_matrix_csv(std::istream& is) {
  std::vector<std::vector<std::complex<double>>> rows;
  std::string line;
  while (std::getline(is, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() % 2 != 0) throw FormatError("complex CSV row has an odd number of columns");
    std::vector<std::complex<double>> row;
    for (std::size_t k = 0; k < cells.size(); k += 2) {
      row.emplace_back(parse_double(cells[k]), parse_double(cells[k + 1]));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError("complex CSV rows have different lengths");
    }
    rows.push_back(std::move(row));
  }
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  CMatrix<double> m(n_rows, n_cols);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    for (Eigen::Index j = 0; j < n_cols; ++j) m(i, j) = rows[std::size_t(i)][std::size_t(j)];
  }
  return m;
}

json covariance_sidecar_to_json(const CovarianceSidecar& s) {
  return {{"N", s.n_snapshots}, {"L", s.L}, {"sigma", s.sigma}, {"snr_db", s.snr_db},
          {"seed", s.seed}};
}

CovarianceSidecar covariance_sidecar_from_json(const json& j) {
  CovarianceSidecar s;
  s.n_snapshots = j.at("N").get<std::int64_t>();
  s.L = j.value("L", Eigen::Index{0});
  s.sigma = j.value("sigma", 0.0);
  s.snr_db = j.value("snr_db", 0.0);
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

SampleCovariance<double> load_sample_covariance(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::invalid_argument("cannot open covariance " + csv_path.string());
  CMatrix<double> m = read_complex_matrix_csv(in);
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw FormatError("covariance CSV is not a non-empty square matrix");
  }
  fs::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  const auto meta = covariance_sidecar_from_json(json::parse(read_text_file(sidecar)));
  if (meta.n_snapshots < 1) throw std::invalid_argument("covariance sidecar: N must be >= 1");
  return {std::move(m), meta.n_snapshots};
}

json estimate_sidecar(const KappaEstimate<double>& est) {
  json j = {{"M", est.M()},
            {"sigma_hat", est.sigma_hat},
            {"sigma_clamped", est.sigma_clamped},
            {"conditioning", est.basis ? est.basis->gram_conditioning() : 0.0}};
  if (std::isfinite(est.log_likelihood)) {
    j["log_likelihood"] = est.log_likelihood;
  } else {
    j["log_likelihood"] = nullptr;
  }
  return j;
}

void write_bic_csv(std::ostream& os, const BicScan<double>& scan) {
  os << "M,loglik,bic,selected\n";
  for (const auto& e : scan.entries) {
    os << e.M << ',' << format_double(e.ok ? e.log_likelihood : std::nan("")) << ','
       << format_double(e.ok ? e.bic : std::nan("")) << ','
       << ((e.ok && e.M == scan.selected_M) ? 1 : 0) << '\n';
  }
}

void write_map_csv(std::ostream& os, const SphereGrid<double>& grid, const Vector<double>& values) {
  if (values.size() != grid.size()) throw std::invalid_argument("write_map_csv: size mismatch");
  os << "x,y,z,weight,value\n";
  const auto& pts = grid.points();
  for (Eigen::Index p = 0; p < grid.size(); ++p) {
    os << format_double(pts(p, 0)) << ',' << format_double(pts(p, 1)) << ','
       << format_double(pts(p, 2)) << ',' << format_double(grid.weights()(p)) << ','
       << format_double(values(p)) << '\n';
  }
}

static constexpr const char* kMetricsHeader =
    "method,M,snr_db,seed,rel_mse_fit,rel_mse_raw,rms_contrast,rms_contrast_norm";

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << r.M << ',' << format_double(r.snr_db) << ',' << r.seed << ','
       << format_double(r.rel_mse_fit) << ',' << format_double(r.rel_mse_raw) << ','
       << format_double(r.rms_contrast) << ',' << format_double(r.rms_contrast_norm) << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& is) {
  expect_header(is, kMetricsHeader);
  std::vector<MetricRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 8) {
      throw FormatError("metrics CSV row " + std::to_string(rows.size() + 1) +
                        ": expected 8 columns");
    }
    MetricRow r;
    r.method = c[0];
    r.M = static_cast<Eigen::Index>(std::stoll(c[1]));
    r.snr_db = parse_double(c[2]);
    r.seed = std::stoull(c[3]);
    r.rel_mse_fit = parse_double(c[4]);
    r.rel_mse_raw = parse_double(c[5]);
    r.rms_contrast = parse_double(c[6]);
    r.rms_contrast_norm = parse_double(c[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace siml::io
