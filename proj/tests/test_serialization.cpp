#include <doctest.h>

#include "fixtures.hpp"
#include "wgm/errors.hpp"
#include "wgm/serialization.hpp"

#include <fstream>
#include <random>
#include <sstream>

using namespace wgm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wgm_serial_" + std::to_string(::getpid())) / name;
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

} // namespace

TEST_SUITE("serialization") {

TEST_CASE("shortest round-trip number format") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng) * std::pow(10.0, (i % 40) - 20);
    CHECK(parse_double(format_double(x)) == x);
  }
  CHECK(parse_double(" 1.5\r") == 1.5);
  CHECK_THROWS_AS(parse_double("1.5x"), SchemaError);
  CHECK_THROWS_AS(parse_double(""), SchemaError);
}

TEST_CASE("position headers") {
  CHECK(position_header(ScanKind::LinearZ, 1e-6) == "z=1.00000");
  CHECK(position_header(ScanKind::LinearZ, -3.9e-6) == "z=-3.90000");
  CHECK(position_header(ScanKind::CircularTheta, 0.25) == "theta=0.250000");
}

TEST_CASE("waterfall files round trip exactly") {
  const auto dir = scratch("roundtrip");
  for (const char* name : {"sphere_56um.json", "toroid_scan.json"}) {
    const auto wf = cli::synthesize(fixtures::load(name));
    write_waterfall(wf, dir / "w.json");
    const auto back = read_waterfall(dir / "w.json");
    CHECK(back.traces == wf.traces);
    CHECK(back.plan.positions == wf.plan.positions);
    CHECK(back.plan.grid.start == wf.plan.grid.start);
    CHECK(back.plan.grid.step == wf.plan.grid.step);
    CHECK(back.noise.seed == wf.noise.seed);
    CHECK(back.setup.index() == wf.setup.index());
    write_waterfall(back, dir / "again.json");
    CHECK(slurp(dir / "again.csv") == slurp(dir / "w.csv"));
  }
}

TEST_CASE("damaged waterfall files are rejected") {
  const auto dir = scratch("damaged");
  auto cfg = fixtures::sphere56_noiseless();
  cfg.plan.positions = {-1e-6, 0.0, 1e-6};
  const auto wf = cli::synthesize(cfg);
  write_waterfall(wf, dir / "w.json");
  const std::string csv = slurp(dir / "w.csv");

  write_text_file(dir / "w.csv", csv.substr(0, csv.size() / 2));
  CHECK_THROWS_AS(read_waterfall(dir / "w.json"), SchemaError);

  std::string bad_header = csv;
  bad_header.replace(bad_header.find("z=0.00000"), 9, "z=0.50000");
  write_text_file(dir / "w.csv", bad_header);
  CHECK_THROWS_AS(read_waterfall(dir / "w.json"), SchemaError);

  std::string bad_cell = csv;
  bad_cell.insert(bad_cell.find('\n', bad_cell.find('\n') + 1), "x");
  write_text_file(dir / "w.csv", bad_cell);
  CHECK_THROWS_AS(read_waterfall(dir / "w.json"), SchemaError);

  fs::remove(dir / "w.csv");
  CHECK_THROWS_AS(read_waterfall(dir / "w.json"), IoError);
  CHECK_THROWS_AS(read_waterfall(dir / "nothing.json"), IoError);

  write_text_file(dir / "broken.json", "{ not json");
  CHECK_THROWS_AS(read_json_file(dir / "broken.json"), SchemaError);
}

TEST_CASE("artifact and schema version are enforced") {
  nlohmann::json j = {{"artifact", "fit"}, {"schema_version", kSchemaVersion}};
  CHECK_NOTHROW(expect_artifact(j, "fit"));
  CHECK_THROWS_AS(expect_artifact(j, "profiles"), SchemaError);
  j["schema_version"] = kSchemaVersion + 1;
  CHECK_THROWS_AS(expect_artifact(j, "fit"), SchemaError);
  CHECK_THROWS_AS(expect_artifact(nlohmann::json::object(), "fit"), SchemaError);
}

TEST_CASE("profile bundles round trip") {
  ProfileBundle b;
  b.geometry = FitGeometry{330, 28e-6, 8.5e6};
  b.convention = ProfileConvention::Intrinsic;
  ProfileSeries s;
  s.q = 2;
  s.line_index = 3;
  s.line_frequency = 3.883413e14;
  s.samples = {{-1e-6, 0.25, 3e8, 2e8, 0.1, true}, {0.0, 0.125, 2.5e8, 2e8, 0.05, false}};
  s.gaps = {{0, 1}};
  b.series = {s};
  const auto back = profiles_from_json(nlohmann::json::parse(profiles_to_json(b).dump()));
  REQUIRE(back.geometry);
  CHECK(back.geometry->ell == 330);
  CHECK(back.convention == ProfileConvention::Intrinsic);
  REQUIRE(back.series.size() == 1);
  CHECK(back.series[0].q == 2);
  CHECK(back.series[0].samples[1].normalized_area == 0.125);
  CHECK_FALSE(back.series[0].samples[1].detected);
  CHECK(back.series[0].gaps == s.gaps);
  CHECK(profile_csv(s) == "position,value,gamma_loaded\n-1e-06,0.25,3e+08\n0,0.125,2.5e+08\n");
}

TEST_CASE("fit document carries the non-converged flag") {
  FitResult r;
  r.model.ell = 330;
  r.model.a = 28e-6;
  r.model.kappa = 8.5e6;
  r.model.qs = {0};
  r.model.amplitudes = {1.0};
  r.amplitude_sigma = {0.1};
  r.residual_rms = {0.01};
  r.converged = false;
  const auto j = fit_to_json(r, scale_factor_report(r));
  CHECK(j["non_converged"] == true);
  CHECK(j["artifact"] == "fit");
  CHECK(j["scale_factor_report"]["reliable"] == false);
}

} // TEST_SUITE
