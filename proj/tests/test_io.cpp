#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "siml/io.hpp"

using namespace siml;

TEST_CASE("doubles are written with 17 significant digits") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    CHECK(std::stod(io::format_double(v)) == v);
  }
  CHECK(io::format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("array layout round-trips exactly") {
  const auto a = random_disk_array<double>(25, 0.7, 12.0, 5);
  std::stringstream ss;
  io::write_array_csv(ss, a);
  CHECK(ss.str().rfind("x_m,y_m,z_m\n", 0) == 0);
  const Matrix<double> back = io::read_array_csv(ss);
  CHECK(back == a.positions());
}

TEST_CASE("array layout parse errors") {
  std::stringstream bad_header("x,y,z\n0,0,0\n");
  CHECK_THROWS_AS(io::read_array_csv(bad_header), io::FormatError);
  std::stringstream short_row("x_m,y_m,z_m\n0,0\n");
  CHECK_THROWS_AS(io::read_array_csv(short_row), io::FormatError);
  std::stringstream junk("x_m,y_m,z_m\n0,abc,0\n");
  CHECK_THROWS_AS(io::read_array_csv(junk), io::FormatError);
}

TEST_CASE("complex matrix round-trips exactly") {
  const CMatrix<double> m = testing::random_complex(7, 5, 3);
  std::stringstream ss;
  io::write_complex_matrix_csv(ss, m);
  CHECK(io::read_complex_matrix_csv(ss) == m);
  std::stringstream ragged("1,2,3,4\n1,2\n");
  CHECK_THROWS_AS(io::read_complex_matrix_csv(ragged), io::FormatError);
  std::stringstream odd("1,2,3\n");
  CHECK_THROWS_AS(io::read_complex_matrix_csv(odd), io::FormatError);
}

TEST_CASE("source model JSON round-trip") {
  SourceModel<double> m;
  m.components.push_back(PointSource<double>{Direction<double>::from_spherical(0.3, 1.0), 0.25});
  m.components.push_back(BlobSource<double>{Direction<double>(1, 2, 3), 0.1, 2.0});
  m.components.push_back(PointSource<double>{Direction<double>(0, 1, 0), 1.0});
  m.correlations.push_back({0, 2, Complex<double>(0.3, -0.4)});
  const auto j = io::source_model_to_json(m);
  const auto back = io::source_model_from_json(j);
  CHECK(io::source_model_to_json(back) == j);
  REQUIRE(back.components.size() == 3);
  CHECK(std::get<PointSource<double>>(back.components[0]).direction == std::get<PointSource<double>>(m.components[0]).direction);
  CHECK(back.correlations[0].rho == Complex<double>(0.3, -0.4));

  const auto spherical = io::source_model_from_json(nlohmann::json::parse(
      R"({"components": [{"type": "blob", "center": {"theta": 0.5, "phi": 1.5}, "width": 0.2, "peak_power": 1}],
          "correlations": []})"));
  CHECK(std::get<BlobSource<double>>(spherical.components[0]).center.angle_to(
            Direction<double>::from_spherical(0.5, 1.5)) < 1e-15);

  CHECK_THROWS_AS(io::source_model_from_json(nlohmann::json::parse(R"({"components": [{"type": "ring"}]})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(io::source_model_from_json(nlohmann::json::parse(
                      R"({"components": [{"type": "point", "direction": [0, 0, 1], "power": -1}]})")),
                  std::invalid_argument);
}

TEST_CASE("covariance files") {
  const auto dir = std::filesystem::temp_directory_path() / "siml_test_io";
  std::filesystem::remove_all(dir);
  const CMatrix<double> S = testing::random_psd(6, 2);
  std::stringstream ss;
  io::write_complex_matrix_csv(ss, S);
  io::write_text_file(dir / "cov.csv", ss.str());
  io::CovarianceSidecar meta{1234, 6, 0.5, 3.0, 99};
  io::write_text_file(dir / "cov.json", io::covariance_sidecar_to_json(meta).dump());
  const auto back = io::covariance_sidecar_from_json(io::covariance_sidecar_to_json(meta));
  CHECK(back.n_snapshots == 1234);
  CHECK(back.seed == 99);
  CHECK(back.sigma == 0.5);
  const auto loaded = io::load_sample_covariance(dir / "cov.csv");
  CHECK(loaded.n_snapshots == 1234);
  CHECK(loaded.matrix == S);
  CHECK_THROWS_AS(io::load_sample_covariance(dir / "missing.csv"), std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST_CASE("map, grid and BIC tables") {
  const auto g = make_fibonacci_grid<double>(3);
  std::stringstream grid_csv, map_csv;
  io::write_grid_csv(grid_csv, g);
  io::write_map_csv(map_csv, g, Vector<double>{{1.0, 2.0, 3.0}});
  std::string line;
  std::getline(grid_csv, line);
  CHECK(line == "x,y,z,weight");
  std::getline(map_csv, line);
  CHECK(line == "x,y,z,weight,value");
  int rows = 0;
  while (std::getline(map_csv, line)) ++rows;
  CHECK(rows == 3);

  BicScan<double> scan;
  scan.entries = {{2, -1.5, 10.0, true, ""}, {3, 0.0, 0.0, false, "boom"}};
  scan.selected_M = 2;
  std::stringstream bic;
  io::write_bic_csv(bic, scan);
  CHECK(bic.str() == "M,loglik,bic,selected\n2,-1.5,10,1\n3,nan,nan,0\n");
}

TEST_CASE("metric table round-trip") {
  std::vector<io::MetricRow> rows{{"siml_joint", 17, -5.0, 1001, 0.25, 0.5, 0.125, 0.3},
                                  {"mb", 0, 10.0, 1002, 1.0 / 3.0, 0.75, 2.0, 0.1}};
  std::stringstream ss;
  io::write_metrics_csv(ss, rows);
  const auto back = io::read_metrics_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].method == "siml_joint");
  CHECK(back[0].M == 17);
  CHECK(back[1].rel_mse_fit == 1.0 / 3.0);
  CHECK(back[1].seed == 1002);
  std::stringstream bad("method,M\nmb,0\n");
  CHECK_THROWS_AS(io::read_metrics_csv(bad), io::FormatError);
}

TEST_CASE("sha256") {
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
