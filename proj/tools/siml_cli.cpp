// siml: command-line front end for simulation, estimation, beamforming,
// BIC scans and full comparison experiments.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "siml/beamformers.hpp"
#include "siml/estimators.hpp"
#include "siml/experiment.hpp"
#include "siml/io.hpp"

namespace {

using namespace siml;
namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string cov;
  std::optional<double> snr;
};

struct Context {
  ExperimentConfig cfg;
  SensorArray<double> array;
  SphereGrid<double> grid;
  fs::path out;
};

Context load_context(const CommonArgs& args) {
  if (args.config.empty()) throw ConfigError("--config is required");
  auto cfg = load_config(args.config);
  if (!args.out.empty()) cfg.output_dir = args.out;
  if (args.seed) cfg.seed_base = *args.seed;
  auto array = build_array(cfg);
  auto grid = build_grid(cfg.grid);
  fs::path out = cfg.output_dir;
  return {std::move(cfg), std::move(array), std::move(grid), std::move(out)};
}

struct Simulated {
  SampleCovariance<double> sample;
  io::CovarianceSidecar meta;
};

Simulated simulate(const Context& ctx, const CommonArgs& args) {
  const auto model = build_source_model(ctx.cfg);
  const auto signal = population_covariance(model, ctx.array, 0.0, ctx.grid);
  io::CovarianceSidecar meta;
  meta.snr_db = args.snr.value_or(ctx.cfg.snr_db_list.front());
  meta.sigma = sigma_for_snr(signal, meta.snr_db);
  meta.seed = ctx.cfg.seed_base;
  meta.n_snapshots = ctx.cfg.n_snapshots;
  meta.L = ctx.array.size();
  CMatrix<double> pop = signal;
  pop.diagonal().array() += meta.sigma;
  return {sample_covariance(pop, ctx.cfg.n_snapshots, meta.seed), meta};
}

// Sample covariance from --cov (with its JSON sidecar) or a fresh simulation.
Simulated obtain_sample(const Context& ctx, const CommonArgs& args) {
  if (args.cov.empty()) return simulate(ctx, args);
  fs::path sidecar = args.cov;
  sidecar.replace_extension(".json");
  Simulated s{io::load_sample_covariance(args.cov),
              io::covariance_sidecar_from_json(json::parse(io::read_text_file(sidecar)))};
  if (s.sample.size() != ctx.array.size()) {
    throw ConfigError(fmt::format("--cov: matrix is {}x{} but the array has {} sensors",
                                  s.sample.size(), s.sample.size(), ctx.array.size()));
  }
  return s;
}

std::string map_csv(const SphereGrid<double>& grid, const Vector<double>& v) {
  std::ostringstream ss;
  io::write_map_csv(ss, grid, v);
  return ss.str();
}

int cmd_simulate(const CommonArgs& args) {
  const auto ctx = load_context(args);
  const auto sim = simulate(ctx, args);
  const auto model = build_source_model(ctx.cfg);
  std::ostringstream arr, grid, cov;
  io::write_array_csv(arr, ctx.array);
  io::write_grid_csv(grid, ctx.grid);
  io::write_complex_matrix_csv(cov, sim.sample.matrix);
  io::write_text_file(ctx.out / "array.csv", arr.str());
  io::write_text_file(ctx.out / "grid.csv", grid.str());
  io::write_text_file(ctx.out / "truth.csv", map_csv(ctx.grid, intensity_map(model, ctx.grid)));
  io::write_text_file(ctx.out / "source_model.json", io::source_model_to_json(model).dump(2) + "\n");
  io::write_text_file(ctx.out / "covariance.csv", cov.str());
  io::write_text_file(ctx.out / "covariance.json",
                      io::covariance_sidecar_to_json(sim.meta).dump(2) + "\n");
  std::cout << fmt::format("simulated L={} N={} snr={} dB sigma={} -> {}\n", sim.meta.L,
                           sim.meta.n_snapshots, sim.meta.snr_db, sim.meta.sigma,
                           ctx.out.string());
  return 0;
}

int cmd_estimate(const CommonArgs& args, std::optional<Eigen::Index> m_arg,
                 std::optional<double> known_sigma) {
  const auto ctx = load_context(args);
  const auto sim = obtain_sample(ctx, args);
  const auto gram = gram_matrix(ctx.array);

  std::optional<Eigen::Index> m = m_arg ? m_arg : ctx.cfg.siml.M;
  json selection = "fixed";
  if (!m) {
    const auto scan = bic_scan(sim.sample, gram, bic_candidates(ctx.cfg));
    m = scan.selected_M;
    selection = "bic";
    std::ostringstream ss;
    io::write_bic_csv(ss, scan);
    io::write_text_file(ctx.out / "bic.csv", ss.str());
  }
  auto basis = std::make_shared<const SievedBasis<double>>(eigen_sieve(sim.sample, gram, *m));
  const auto est = known_sigma ? estimate_known_noise(sim.sample, basis, *known_sigma)
                               : estimate_joint(sim.sample, basis);
  Vector<double> map = intensity_estimate(est, ctx.array, ctx.grid);
  if (ctx.cfg.siml.clip_negative) map = map.cwiseMax(0.0);

  json meta = io::estimate_sidecar(est);
  meta["M_selection"] = selection;
  meta["estimator"] = known_sigma ? "known_noise" : "joint";
  std::ostringstream r;
  io::write_complex_matrix_csv(r, est.R_hat);
  io::write_text_file(ctx.out / "estimate.json", meta.dump(2) + "\n");
  io::write_text_file(ctx.out / "r_hat.csv", r.str());
  io::write_text_file(ctx.out / "siml.csv", map_csv(ctx.grid, map));
  std::cout << fmt::format("M={} sigma_hat={} loglik={}\n", est.M(), est.sigma_hat,
                           est.log_likelihood);
  return 0;
}

int cmd_beamform(const CommonArgs& args, std::vector<std::string> methods, double loading) {
  const auto ctx = load_context(args);
  const auto sim = obtain_sample(ctx, args);
  if (methods.empty()) {
    for (const auto& m : ctx.cfg.methods) {
      if (m == "mb" || m == "mvdr" || m == "aar") methods.push_back(m);
    }
    if (methods.empty()) methods = {"mb", "mvdr", "aar"};
  }
  for (const auto& m : methods) {
    BeamformerSpec<double> spec;
    if (m == "mb") spec.kind = BeamformerKind::MB;
    else if (m == "mvdr") spec.kind = BeamformerKind::MVDR;
    else if (m == "aar") spec.kind = BeamformerKind::AAR;
    else throw ConfigError("--method: unknown beamformer '" + m + "'");
    spec.diagonal_loading = loading;
    const auto values = beamform_spectrum(sim.sample, ctx.array, ctx.grid, spec);
    io::write_text_file(ctx.out / ("spectrum_" + m + ".csv"), map_csv(ctx.grid, values));
    const json meta = {{"method", m}, {"diagonal_loading", loading},
                       {"n_snapshots", sim.sample.n_snapshots}};
    io::write_text_file(ctx.out / ("spectrum_" + m + ".json"), meta.dump(2) + "\n");
  }
  return 0;
}

int cmd_bic_scan(const CommonArgs& args) {
  const auto ctx = load_context(args);
  const auto sim = obtain_sample(ctx, args);
  const auto scan = bic_scan(sim.sample, gram_matrix(ctx.array), bic_candidates(ctx.cfg));
  std::ostringstream ss;
  io::write_bic_csv(ss, scan);
  io::write_text_file(ctx.out / "bic.csv", ss.str());
  std::cout << "selected M=" << scan.selected_M << "\n";
  return 0;
}

int cmd_run(const CommonArgs& args) {
  if (args.config.empty()) throw ConfigError("--config is required");
  auto cfg = load_config(args.config);
  if (!args.out.empty()) cfg.output_dir = args.out;
  if (args.seed) cfg.seed_base = *args.seed;
  const auto report = run_experiment(cfg, RunOptions{args.threads});
  compare_summary(report.output_dir);
  std::cout << fmt::format("{} metric rows, {} files, {} failures -> {}\n", report.metrics.size(),
                           report.files.size(), report.failures.size(),
                           report.output_dir.string());
  for (const auto& f : report.failures) {
    std::cerr << fmt::format("failure: {} snr={} repeat={}: {}\n", f.method, f.snr_db, f.repeat,
                             f.error);
  }
  return report.failures.empty() ? 0 : kExitNumerical;
}

int cmd_summarize(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out (report directory) is required");
  const auto rows = compare_summary(dir);
  write_summary_csv(std::cout, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sieved maximum likelihood imaging for sensor arrays"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "Experiment configuration (JSON)");
    sub->add_option("--out", args.out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", args.seed, "Seed (overrides seed_base)");
    sub->add_option("--threads", args.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  auto add_cov = [&](CLI::App* sub) {
    sub->add_option("--cov", args.cov, "Sample covariance CSV (sidecar JSON alongside)");
    sub->add_option("--snr", args.snr, "SNR in dB when simulating (default: first of snr_db_list)");
  };

  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate a sample covariance");
  add_common(simulate_cmd);
  simulate_cmd->add_option("--snr", args.snr, "SNR in dB (default: first of snr_db_list)");

  std::optional<Eigen::Index> m_arg;
  std::optional<double> known_sigma;
  auto* estimate_cmd = app.add_subcommand("estimate", "SiML estimate and intensity map");
  add_common(estimate_cmd);
  add_cov(estimate_cmd);
  estimate_cmd->add_option("--M", m_arg, "Sieve dimension (default: config, else BIC)");
  estimate_cmd->add_option("--known-sigma", known_sigma, "Known noise power");

  std::vector<std::string> bf_methods;
  double loading = 0.0;
  auto* beamform_cmd = app.add_subcommand("beamform", "MB / MVDR / AAR spectra");
  add_common(beamform_cmd);
  add_cov(beamform_cmd);
  beamform_cmd->add_option("--method", bf_methods, "mb, mvdr, aar (repeatable)");
  beamform_cmd->add_option("--loading", loading, "Diagonal loading fraction of Tr/L");

  auto* bic_cmd = app.add_subcommand("bic-scan", "BIC profile over the sieve dimension");
  add_common(bic_cmd);
  add_cov(bic_cmd);

  auto* run_cmd = app.add_subcommand("run", "Full comparison experiment");
  add_common(run_cmd);

  auto* summarize_cmd = app.add_subcommand("summarize", "Aggregate metrics of a report directory");
  summarize_cmd->add_option("--out,--in", args.out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*simulate_cmd) return cmd_simulate(args);
    if (*estimate_cmd) return cmd_estimate(args, m_arg, known_sigma);
    if (*beamform_cmd) return cmd_beamform(args, bf_methods, loading);
    if (*bic_cmd) return cmd_bic_scan(args);
    if (*run_cmd) return cmd_run(args);
    if (*summarize_cmd) return cmd_summarize(args.out);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
