#include "siml/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "siml/beamformers.hpp"
#include "siml/estimators.hpp"
#include "siml/metrics.hpp"

namespace siml {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T field(const json& obj, const char* key, const T& fallback, const std::string& path) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  require(cfg.array.L >= 1, "array.L: must be >= 1");
  require(cfg.array.aperture_in_wavelengths > 0, "array.aperture_in_wavelengths: must be > 0");
  require(cfg.wavelength > 0 && std::isfinite(cfg.wavelength), "wavelength: must be > 0");
  require(cfg.grid.kind == "cap" || cfg.grid.kind == "fibonacci",
          "grid.kind: expected 'cap' or 'fibonacci'");
  if (cfg.grid.kind == "fibonacci") {
    require(cfg.grid.P >= 1, "grid.P: must be >= 1");
  } else {
    require(cfg.grid.radius > 0 && cfg.grid.radius <= std::numbers::pi / 2,
            "grid.radius: must lie in (0, pi/2]");
    require(cfg.grid.n_rings >= 1, "grid.n_rings: must be >= 1");
  }
  require(!cfg.snr_db_list.empty(), "snr_db_list: must not be empty");
  for (double s : cfg.snr_db_list) require(std::isfinite(s), "snr_db_list: every SNR must be finite");
  require(cfg.n_snapshots >= 1, "n_snapshots: must be >= 1");
  require(cfg.n_repeats >= 1, "n_repeats: must be >= 1");
  require(!cfg.methods.empty(), "methods: must not be empty");
  for (const auto& m : cfg.methods) {
    require(std::find(known_methods().begin(), known_methods().end(), m) != known_methods().end(),
            "methods: unknown method '" + m + "'");
  }
  const bool joint = std::find(cfg.methods.begin(), cfg.methods.end(), "siml_joint") != cfg.methods.end();
  if (cfg.siml.M) {
    require(*cfg.siml.M >= 1, "siml.M: must be >= 1");
    require(*cfg.siml.M <= cfg.array.L, "siml.M: must be <= L");
    if (joint) require(*cfg.siml.M <= cfg.array.L - 1, "siml.M: must be in [1, L-1] for siml_joint");
  }
  require(cfg.siml.bic_stride >= 1, "siml.bic_range.stride: must be >= 1");
  require(cfg.siml.bic_min >= 1, "siml.bic_range.min: must be >= 1");
  require(cfg.siml.bic_max == 0 || cfg.siml.bic_max >= cfg.siml.bic_min,
          "siml.bic_range.max: must be 0 or >= min");
  require(cfg.siml.bic_max <= cfg.array.L - 1, "siml.bic_range.max: must be <= L-1");
  try {
    (void)io::source_model_from_json(cfg.source_model);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("source_model: ") + e.what());
  }
}

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig cfg;
  if (j.contains("array")) {
    const auto& a = j.at("array");
    cfg.array.L = field<Eigen::Index>(a, "L", cfg.array.L, "array");
    cfg.array.aperture_in_wavelengths =
        field<double>(a, "aperture_in_wavelengths", cfg.array.aperture_in_wavelengths, "array");
    cfg.array.layout_seed = field<std::uint64_t>(a, "layout_seed", 0, "array");
    cfg.array.vary_layout = field<bool>(a, "vary_layout", false, "array");
    if (a.contains("layout_file") && !a.at("layout_file").is_null()) {
      fs::path p = field<std::string>(a, "layout_file", "", "array");
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      cfg.array.layout_file = p.string();
    }
  }
  cfg.wavelength = field<double>(j, "wavelength", cfg.wavelength, "config");
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    cfg.grid.kind = field<std::string>(g, "kind", cfg.grid.kind, "grid");
    cfg.grid.P = field<Eigen::Index>(g, "P", cfg.grid.P, "grid");
    cfg.grid.center = field<std::array<double, 3>>(g, "center", cfg.grid.center, "grid");
    cfg.grid.radius = field<double>(g, "radius", cfg.grid.radius, "grid");
    cfg.grid.n_rings = field<Eigen::Index>(g, "n_rings", cfg.grid.n_rings, "grid");
  }
  if (!j.contains("source_model")) throw ConfigError("source_model: missing");
  const auto& sm = j.at("source_model");
  if (sm.is_string()) {
    fs::path p = sm.get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    try {
      cfg.source_model = json::parse(io::read_text_file(p));
    } catch (const std::exception& e) {
      throw ConfigError("source_model: cannot load " + p.string() + ": " + e.what());
    }
  } else {
    cfg.source_model = sm;
  }
  cfg.snr_db_list = field<std::vector<double>>(j, "snr_db_list", cfg.snr_db_list, "config");
  cfg.n_snapshots = field<std::int64_t>(j, "n_snapshots", cfg.n_snapshots, "config");
  cfg.n_repeats = field<Eigen::Index>(j, "n_repeats", cfg.n_repeats, "config");
  cfg.seed_base = field<std::uint64_t>(j, "seed_base", cfg.seed_base, "config");
  cfg.methods = field<std::vector<std::string>>(j, "methods", cfg.methods, "config");
  cfg.output_dir = field<std::string>(j, "output_dir", cfg.output_dir, "config");
  if (j.contains("siml")) {
    const auto& s = j.at("siml");
    if (s.contains("M") && !s.at("M").is_null()) {
      const auto& m = s.at("M");
      if (m.is_string()) {
        require(m.get<std::string>() == "bic", "siml.M: expected an integer or \"bic\"");
        cfg.siml.M.reset();
      } else if (m.is_number_integer()) {
        cfg.siml.M = m.get<Eigen::Index>();
      } else {
        throw ConfigError("siml.M: expected an integer or \"bic\"");
      }
    }
    if (s.contains("bic_range")) {
      const auto& r = s.at("bic_range");
      cfg.siml.bic_min = field<Eigen::Index>(r, "min", cfg.siml.bic_min, "siml.bic_range");
      cfg.siml.bic_max = field<Eigen::Index>(r, "max", cfg.siml.bic_max, "siml.bic_range");
      cfg.siml.bic_stride = field<Eigen::Index>(r, "stride", cfg.siml.bic_stride, "siml.bic_range");
    }
    cfg.siml.clip_negative = field<bool>(s, "clip_negative", false, "siml");
  }
  validate(cfg);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json array = {{"L", cfg.array.L},
                {"aperture_in_wavelengths", cfg.array.aperture_in_wavelengths},
                {"layout_seed", cfg.array.layout_seed},
                {"vary_layout", cfg.array.vary_layout}};
  array["layout_file"] = cfg.array.layout_file ? json(*cfg.array.layout_file) : json(nullptr);
  json siml = {{"bic_range",
                {{"min", cfg.siml.bic_min}, {"max", cfg.siml.bic_max}, {"stride", cfg.siml.bic_stride}}},
               {"clip_negative", cfg.siml.clip_negative}};
  siml["M"] = cfg.siml.M ? json(*cfg.siml.M) : json("bic");
  return {{"array", array},
          {"wavelength", cfg.wavelength},
          {"grid",
           {{"kind", cfg.grid.kind},
            {"P", cfg.grid.P},
            {"center", cfg.grid.center},
            {"radius", cfg.grid.radius},
            {"n_rings", cfg.grid.n_rings}}},
          {"source_model", cfg.source_model},
          {"snr_db_list", cfg.snr_db_list},
          {"n_snapshots", cfg.n_snapshots},
          {"n_repeats", cfg.n_repeats},
          {"seed_base", cfg.seed_base},
          {"methods", cfg.methods},
          {"siml", siml},
          {"output_dir", cfg.output_dir}};
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, path.parent_path());
}

SphereGrid<double> build_grid(const GridConfig& g) {
  if (g.kind == "fibonacci") return make_fibonacci_grid<double>(g.P);
  return make_cap_grid<double>(Direction<double>(g.center[0], g.center[1], g.center[2]), g.radius,
                               g.n_rings);
}

SensorArray<double> build_array(const ExperimentConfig& cfg, Eigen::Index repeat) {
  if (cfg.array.layout_file) {
    auto arr = io::load_array_csv(*cfg.array.layout_file, cfg.wavelength);
    if (arr.size() != cfg.array.L) {
      throw ConfigError("array.layout_file: has " + std::to_string(arr.size()) +
                        " sensors but array.L = " + std::to_string(cfg.array.L));
    }
    return arr;
  }
  const std::uint64_t seed =
      cfg.array.layout_seed + (cfg.array.vary_layout ? std::uint64_t(repeat) : 0);
  return random_disk_array<double>(cfg.array.L, cfg.wavelength, cfg.array.aperture_in_wavelengths,
                                   seed);
}

SourceModel<double> build_source_model(const ExperimentConfig& cfg) {
  return io::source_model_from_json(cfg.source_model);
}

std::vector<Eigen::Index> bic_candidates(const ExperimentConfig& cfg) {
  const Eigen::Index cap = std::min<Eigen::Index>(cfg.array.L - 1, Eigen::Index(cfg.n_snapshots));
  const Eigen::Index hi = cfg.siml.bic_max > 0 ? std::min(cfg.siml.bic_max, cap) : cap;
  std::vector<Eigen::Index> ms;
  for (Eigen::Index m = cfg.siml.bic_min; m <= hi; m += cfg.siml.bic_stride) ms.push_back(m);
  if (ms.empty()) {
    throw ConfigError("siml.bic_range: no candidate M in [" + std::to_string(cfg.siml.bic_min) +
                      ", " + std::to_string(hi) + "]");
  }
  return ms;
}

namespace {

struct Layout {
  SensorArray<double> array;
  Matrix<double> gram;
  CMatrix<double> signal_cov;
};

struct WrittenFile {
  std::string path;
  std::string sha256;
};

struct CellResult {
  std::vector<io::MetricRow> metrics;
  std::vector<WrittenFile> files;
  std::vector<CellFailure> failures;
  Eigen::Index selected_M = 0;
};

std::string snr_tag(double snr) { return fmt::format("snr{:+g}", snr); }

WrittenFile emit(const fs::path& root, const std::string& rel, const std::string& content) {
  io::write_text_file(root / rel, content);
  return {rel, io::sha256_hex(content)};
}

bool wants(const ExperimentConfig& cfg, const char* method) {
  return std::find(cfg.methods.begin(), cfg.methods.end(), method) != cfg.methods.end();
}

CellResult run_cell(const ExperimentConfig& cfg, const Layout& layout,
                    const SphereGrid<double>& grid, const IntensityMap<double>& truth,
                    std::size_t snr_index, Eigen::Index repeat, const fs::path& root) {
  CellResult out;
  const double snr = cfg.snr_db_list[snr_index];
  const std::uint64_t seed = cfg.seed_base + std::uint64_t(repeat);
  const std::string cell = fmt::format("{}_rep{:03d}", snr_tag(snr), repeat);

  auto fail_all = [&](const std::string& what) {
    for (const auto& m : cfg.methods) out.failures.push_back({snr, repeat, m, what});
  };

  const double sigma = sigma_for_snr(layout.signal_cov, snr);
  CMatrix<double> pop = layout.signal_cov;
  pop.diagonal().array() += sigma;
  SampleCovariance<double> sample;
  try {
    sample = sample_covariance(pop, cfg.n_snapshots, seed);
  } catch (const std::exception& e) {
    fail_all(e.what());
    return out;
  }

  std::optional<Eigen::Index> siml_M = cfg.siml.M;
  std::string scan_error;
  const bool any_siml = wants(cfg, "siml_joint") || wants(cfg, "siml_known");
  if (any_siml && !siml_M) {
    try {
      const auto scan = bic_scan(sample, layout.gram, bic_candidates(cfg));
      siml_M = scan.selected_M;
      out.selected_M = scan.selected_M;
      std::ostringstream ss;
      io::write_bic_csv(ss, scan);
      out.files.push_back(emit(root, "bic/bic_" + cell + ".csv", ss.str()));
    } catch (const std::exception& e) {
      scan_error = std::string("bic scan: ") + e.what();
    }
  }

  for (const auto& method : cfg.methods) {
    try {
      Vector<double> values;
      json meta = {{"method", method}, {"snr_db", snr}, {"seed", seed}, {"sigma", sigma},
                   {"n_snapshots", cfg.n_snapshots}};
      Eigen::Index m_used = 0;
      bool is_siml = method == "siml_joint" || method == "siml_known";
      if (is_siml) {
        if (!siml_M) throw NumericalError(scan_error);
        m_used = *siml_M;
        auto basis = std::make_shared<const SievedBasis<double>>(
            eigen_sieve(sample, layout.gram, m_used));
        const auto est = method == "siml_joint" ? estimate_joint(sample, basis)
                                                : estimate_known_noise(sample, basis, sigma);
        values = intensity_estimate(est, layout.array, grid);
        meta["estimate"] = io::estimate_sidecar(est);
        meta["M_selection"] = cfg.siml.M ? "fixed" : "bic";
      } else {
        BeamformerSpec<double> spec;
        spec.kind = method == "mb" ? BeamformerKind::MB
                    : method == "mvdr" ? BeamformerKind::MVDR
                                       : BeamformerKind::AAR;
        values = beamform_spectrum(sample, layout.array, grid, spec);
      }
      meta["M"] = m_used;

      const IntensityMap<double> est_map(grid, values, method);
      io::MetricRow row;
      row.method = method;
      row.M = m_used;
      row.snr_db = snr;
      row.seed = seed;
      row.rel_mse_fit = relative_mse(est_map, truth, true);
      row.rel_mse_raw = relative_mse(est_map, truth, false);
      row.rms_contrast = rms_contrast(est_map);
      row.rms_contrast_norm = rms_contrast_normalized(est_map);
      out.metrics.push_back(row);

      Vector<double> shown = values;
      if (is_siml && cfg.siml.clip_negative) {
        shown = shown.cwiseMax(0.0);
        meta["clipped_negative"] = true;
      }
      std::ostringstream ss;
      io::write_map_csv(ss, grid, shown);
      const std::string stem = "maps/" + method + "_" + cell;
      out.files.push_back(emit(root, stem + ".csv", ss.str()));
      out.files.push_back(emit(root, stem + ".json", meta.dump(2) + "\n"));
    } catch (const std::exception& e) {
      out.failures.push_back({snr, repeat, method, e.what()});
    }
  }
  return out;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  validate(cfg);
  const fs::path root = cfg.output_dir;
  fs::create_directories(root);

  const auto grid = build_grid(cfg.grid);
  const auto model = build_source_model(cfg);
  const IntensityMap<double> truth(grid, intensity_map(model, grid), "truth");

  const Eigen::Index n_layouts = cfg.array.vary_layout && !cfg.array.layout_file ? cfg.n_repeats : 1;
  std::vector<Layout> layouts;
  layouts.reserve(std::size_t(n_layouts));
  for (Eigen::Index r = 0; r < n_layouts; ++r) {
    auto arr = build_array(cfg, r);
    auto gram = gram_matrix(arr);
    auto sig = population_covariance(model, arr, 0.0, grid);
    layouts.push_back({std::move(arr), std::move(gram), std::move(sig)});
  }

  ExperimentReport report;
  report.output_dir = root;
  std::vector<WrittenFile> files;
  {
    files.push_back(emit(root, "config.json", config_to_json(cfg).dump(2) + "\n"));
    std::ostringstream a, g, t;
    io::write_array_csv(a, layouts.front().array);
    files.push_back(emit(root, "array.csv", a.str()));
    io::write_grid_csv(g, grid);
    files.push_back(emit(root, "grid.csv", g.str()));
    io::write_map_csv(t, grid, truth.values);
    files.push_back(emit(root, "maps/truth.csv", t.str()));
  }
  for (double snr : cfg.snr_db_list) {
    report.sigma_per_snr.push_back(sigma_for_snr(layouts.front().signal_cov, snr));
  }

  const std::size_t n_snr = cfg.snr_db_list.size();
  const std::size_t n_cells = n_snr * std::size_t(cfg.n_repeats);
  std::vector<CellResult> results(n_cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < n_cells; c = next++) {
      const std::size_t s = c / std::size_t(cfg.n_repeats);
      const auto r = Eigen::Index(c % std::size_t(cfg.n_repeats));
      const auto& layout = layouts[std::size_t(n_layouts > 1 ? r : 0)];
      results[c] = run_cell(cfg, layout, grid, truth, s, r, root);
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(opts.threads, unsigned(n_cells)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  report.selected_M.assign(n_snr, std::vector<Eigen::Index>(std::size_t(cfg.n_repeats), 0));
  std::vector<std::uint64_t> seeds;
  for (Eigen::Index r = 0; r < cfg.n_repeats; ++r) seeds.push_back(cfg.seed_base + std::uint64_t(r));
  for (std::size_t c = 0; c < n_cells; ++c) {
    auto& res = results[c];
    report.selected_M[c / std::size_t(cfg.n_repeats)][c % std::size_t(cfg.n_repeats)] = res.selected_M;
    report.metrics.insert(report.metrics.end(), res.metrics.begin(), res.metrics.end());
    report.failures.insert(report.failures.end(), res.failures.begin(), res.failures.end());
    files.insert(files.end(), res.files.begin(), res.files.end());
  }

  std::ostringstream metrics;
  io::write_metrics_csv(metrics, report.metrics);
  files.push_back(emit(root, "metrics.csv", metrics.str()));

  std::sort(files.begin(), files.end(),
            [](const WrittenFile& a, const WrittenFile& b) { return a.path < b.path; });
  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["config_sha256"] = io::sha256_hex(config_to_json(cfg).dump());
  manifest["n_repeats"] = cfg.n_repeats;
  manifest["seeds"] = seeds;
  manifest["sigma_per_snr"] = report.sigma_per_snr;
  manifest["files"] = json::array();
  for (const auto& f : files) {
    manifest["files"].push_back({{"path", f.path}, {"sha256", f.sha256}});
    report.files.push_back(f.path);
  }
  manifest["failures"] = json::array();
  for (const auto& f : report.failures) {
    manifest["failures"].push_back(
        {{"snr_db", f.snr_db}, {"repeat", f.repeat}, {"method", f.method}, {"error", f.error}});
  }
  io::write_text_file(root / "manifest.json", manifest.dump(2) + "\n");
  return report;
}

std::vector<SummaryRow> summarize_metrics(const std::vector<io::MetricRow>& rows) {
  std::vector<std::pair<std::string, double>> order;
  std::map<std::pair<std::string, double>, std::vector<const io::MetricRow*>> groups;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.method, r.snr_db);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  // Deviations are taken about the first value so identical inputs give an
  // exact zero spread.
  auto stats = [](const std::vector<const io::MetricRow*>& g, auto get) {
    const double x0 = get(*g.front());
    double shift = 0;
    for (const auto* r : g) shift += get(*r) - x0;
    shift /= double(g.size());
    double var = 0;
    for (const auto* r : g) {
      const double d = (get(*r) - x0) - shift;
      var += d * d;
    }
    const double sd = g.size() > 1 ? std::sqrt(var / double(g.size() - 1)) : 0.0;
    return std::make_pair(x0 + shift, sd);
  };
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    const auto& g = groups.at(key);
    SummaryRow s;
    s.method = key.first;
    s.snr_db = key.second;
    s.n = g.size();
    s.mean_M = stats(g, [](const io::MetricRow& r) { return double(r.M); }).first;
    std::tie(s.mean_rel_mse_fit, s.std_rel_mse_fit) = stats(g, [](const io::MetricRow& r) { return r.rel_mse_fit; });
    std::tie(s.mean_rel_mse_raw, s.std_rel_mse_raw) = stats(g, [](const io::MetricRow& r) { return r.rel_mse_raw; });
    std::tie(s.mean_rms_contrast, s.std_rms_contrast) = stats(g, [](const io::MetricRow& r) { return r.rms_contrast; });
    std::tie(s.mean_rms_contrast_norm, s.std_rms_contrast_norm) =
        stats(g, [](const io::MetricRow& r) { return r.rms_contrast_norm; });
    out.push_back(s);
  }
  return out;
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "method,snr_db,n,mean_M,mean_rel_mse_fit,std_rel_mse_fit,mean_rel_mse_raw,"
        "std_rel_mse_raw,mean_rms_contrast,std_rms_contrast,mean_rms_contrast_norm,"
        "std_rms_contrast_norm\n";
  using io::format_double;
  for (const auto& r : rows) {
    os << r.method << ',' << format_double(r.snr_db) << ',' << r.n << ',' << format_double(r.mean_M)
       << ',' << format_double(r.mean_rel_mse_fit) << ',' << format_double(r.std_rel_mse_fit) << ','
       << format_double(r.mean_rel_mse_raw) << ',' << format_double(r.std_rel_mse_raw) << ','
       << format_double(r.mean_rms_contrast) << ',' << format_double(r.std_rms_contrast) << ','
       << format_double(r.mean_rms_contrast_norm) << ',' << format_double(r.std_rms_contrast_norm)
       << '\n';
  }
}

std::vector<SummaryRow> compare_summary(const fs::path& report_dir) {
  std::ifstream in(report_dir / "metrics.csv");
  if (!in) throw std::invalid_argument("summarize: no metrics.csv in " + report_dir.string());
  const auto rows = io::read_metrics_csv(in);
  auto summary = summarize_metrics(rows);

  std::ostringstream ss;
  write_summary_csv(ss, summary);
  const std::string content = ss.str();
  io::write_text_file(report_dir / "summary.csv", content);

  const fs::path manifest_path = report_dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    json manifest = json::parse(io::read_text_file(manifest_path));
    const auto expected = manifest.value("n_repeats", std::size_t{0});
    json warnings = json::array();
    for (const auto& s : summary) {
      if (expected > 0 && s.n < expected) {
        warnings.push_back(fmt::format("{} at snr {}: {} of {} repeats present", s.method,
                                       io::format_double(s.snr_db), s.n, expected));
      }
    }
    manifest["summary_warnings"] = warnings;
    auto& files = manifest["files"];
    json kept = json::array();
    for (const auto& f : files) {
      if (f.at("path") != "summary.csv") kept.push_back(f);
    }
    kept.push_back({{"path", "summary.csv"}, {"sha256", io::sha256_hex(content)}});
    std::sort(kept.begin(), kept.end(),
              [](const json& a, const json& b) { return a.at("path") < b.at("path"); });
    manifest["files"] = kept;
    io::write_text_file(manifest_path, manifest.dump(2) + "\n");
  }
  return summary;
}

}  // namespace siml
