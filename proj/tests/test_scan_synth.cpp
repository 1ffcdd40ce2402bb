#include <doctest.h>

#include "fixtures.hpp"
#include "wgm/errors.hpp"
#include "wgm/scan_synth.hpp"

#include <cmath>
#include <cstdlib>
#include <numbers>

using namespace wgm;
using doctest::Approx;

namespace {

ResonanceState dip(double nu, double C, double width) {
  return {ModeId::from_q(10, 0), nu, width, width, C};
}

FrequencyGrid small_grid() { return {-500e6, 1e6, 1001}; }

ToroidGeometry toroid(double ey, double ez) {
  ToroidGeometry g;
  g.minor_diameter = 6.5e-6;
  g.scan_radius = 3.5e-6;
  g.offset_y = ey;
  g.offset_z = ez;
  g.reference_frequency = 3.8e14;
  g.modes = {{19e9, 0.3, 0, 100e6, 4.3e9}, {7e9, 0.3, 1, 100e6, 4.3e9}};
  return g;
}

TaperCoupling toroid_taper() { return TaperCoupling::with_evanescent_decay(1.4537, 775e-9); }

} // namespace

TEST_SUITE("scan_synth") {

TEST_CASE("spectrum composition") {
  const auto grid = small_grid();
  const auto flat = synth_spectrum({}, grid, 0.9);
  for (double v : flat) CHECK(v == 0.9);

  const std::vector<ResonanceState> one{dip(0.0, 0.4, 20e6)};
  const auto t1 = synth_spectrum(one, grid, 1.0);
  CHECK(*std::min_element(t1.begin(), t1.end()) == Approx(0.6).epsilon(1e-12));
  CHECK(t1[500] == Approx(0.6).epsilon(1e-12));

  const std::vector<ResonanceState> two{dip(-300e6, 0.4, 1e6), dip(300e6, 0.7, 1e6)};
  const auto t2 = synth_spectrum(two, grid, 1.0);
  CHECK(std::abs(t2[200] - 0.6) < 1e-6);
  CHECK(std::abs(t2[800] - 0.3) < 1e-6);

  const std::vector<ResonanceState> zero{dip(0.0, 0.4, 0.0)};
  CHECK_THROWS_AS(synth_spectrum(zero, grid, 1.0), DomainError);
}

TEST_CASE("linear waterfall is deterministic and thread-count independent") {
  const auto cfg = fixtures::load("sphere_56um.json");
  const auto a = cli::synthesize(cfg);
  const auto b = cli::synthesize(cfg);
  CHECK(a.traces == b.traces);

  const char* old = std::getenv("WGM_MAPPER_THREADS");
  const std::string saved = old ? old : "";
  setenv("WGM_MAPPER_THREADS", "1", 1);
  const auto serial = cli::synthesize(cfg);
  setenv("WGM_MAPPER_THREADS", "3", 1);
  const auto threaded = cli::synthesize(cfg);
  if (old)
    setenv("WGM_MAPPER_THREADS", saved.c_str(), 1);
  else
    unsetenv("WGM_MAPPER_THREADS");
  CHECK(serial.traces == threaded.traces);
  CHECK(serial.traces == a.traces);

  auto other = cfg;
  other.noise.seed = 2;
  CHECK(cli::synthesize(other).traces != a.traces);
}

TEST_CASE("noisy traces stay in the clamped range") {
  const auto cfg = fixtures::load("sphere_56um.json");
  const auto wf = cli::synthesize(cfg);
  for (const auto& t : wf.traces)
    for (double v : t) {
      CHECK(v >= 0.0);
      CHECK(v <= cfg.plan.T0 * (1.0 + 5.0 * cfg.noise.sigma_T));
    }
}

TEST_CASE("noiseless traces are bounded by the product of all dips") {
  const auto cfg = fixtures::sphere56_noiseless();
  const auto wf = cli::synthesize(cfg);
  for (std::size_t k = 0; k < wf.traces.size(); ++k) {
    double floor = cfg.plan.T0;
    for (const auto& s : sphere_resonances_at(cfg.sphere, cfg.taper, cfg.multiplet,
                                              cfg.plan.positions[k]))
      floor *= 1.0 - s.dip_depth;
    for (double v : wf.traces[k]) {
      CHECK(v <= cfg.plan.T0);
      CHECK(v >= floor - 1e-12);
    }
  }
}

TEST_CASE("linear scan is symmetric in z") {
  auto cfg = fixtures::sphere56_noiseless();
  cfg.plan.positions.clear();
  for (int i = -20; i <= 20; ++i) cfg.plan.positions.push_back(0.2e-6 * i);
  const auto wf = cli::synthesize(cfg);
  const std::size_t n = wf.traces.size();
  for (std::size_t k = 0; k < n / 2; ++k) CHECK(wf.traces[k] == wf.traces[n - 1 - k]);
}

TEST_CASE("odd modes vanish at the equator") {
  const auto cfg = fixtures::sphere56_noiseless();
  const auto at0 = sphere_resonances_at(cfg.sphere, cfg.taper, cfg.multiplet, 0.0);
  for (const auto& s : at0) {
    if (s.mode.q % 2 == 0) continue;
    double peak = 0.0;
    for (double z = -4e-6; z <= 4e-6; z += 0.05e-6)
      peak = std::max(peak, sphere_resonances_at(cfg.sphere, cfg.taper, cfg.multiplet, z)[s.mode.q].dip_depth);
    CHECK(s.dip_depth < 1e-12 * peak);
  }
}

TEST_CASE("dip minima sit on the multiplet frequencies") {
  auto cfg = fixtures::sphere56_noiseless();
  cfg.plan.positions = {1.0e-6};
  const auto wf = cli::synthesize(cfg);
  const auto& t = wf.traces[0];
  for (const auto& line :
       multiplet_frequencies(cfg.sphere, cfg.multiplet.ell, cfg.multiplet.nu_ref, 5)) {
    const auto i0 = static_cast<std::size_t>((line.frequency - cfg.plan.grid.start) / cfg.plan.grid.step);
    std::size_t best = i0 - 20;
    for (std::size_t i = i0 - 20; i <= i0 + 20; ++i)
      if (t[i] < t[best]) best = i;
    CHECK(std::abs(cfg.plan.grid.at(best) - line.frequency) <= cfg.plan.grid.step);
  }
}

TEST_CASE("plan kind must match the scan") {
  auto cfg = fixtures::sphere56_noiseless();
  cfg.plan.kind = ScanKind::CircularTheta;
  CHECK_THROWS_AS(synth_waterfall_linear(cfg.sphere, cfg.taper, cfg.multiplet, cfg.plan, cfg.noise),
                  UsageError);
  auto lin = fixtures::sphere56_noiseless();
  CHECK_THROWS_AS(synth_waterfall_circular(toroid(0, 0), toroid_taper(), lin.plan, {}), UsageError);
}

TEST_CASE("circular scan gap") {
  const auto centered = toroid(0.0, 0.0);
  for (double th = -3.0; th <= 3.0; th += 0.1)
    CHECK(circular_scan_gap(centered, th) == Approx(0.25e-6).epsilon(1e-12));

  const auto shifted = toroid(0.1e-6, 0.0);
  double gmin = 1.0, gmax = 0.0, th_min = 0.0, th_max = 0.0;
  for (int i = 0; i < 3600; ++i) {
    const double th = -std::numbers::pi + 2.0 * std::numbers::pi * i / 3600.0;
    const double g = circular_scan_gap(shifted, th);
    if (g < gmin) { gmin = g; th_min = th; }
    if (g > gmax) { gmax = g; th_max = th; }
  }
  CHECK(std::abs(std::abs(th_min) - std::numbers::pi) < 1e-9);
  CHECK(std::abs(th_max) < 1e-9);

  for (double eps : {1e-8, 2e-8, 4e-8}) {
    const auto g = toroid(eps, -0.5 * eps);
    double worst = 0.0;
    for (double th = -1.5; th <= 1.5; th += 0.1) {
      const double first = 0.25e-6 + eps * std::cos(th) - 0.5 * eps * std::sin(th);
      worst = std::max(worst, std::abs(circular_scan_gap(g, th) - first));
    }
    CHECK(worst < 2.0 * eps * eps / 3.5e-6);
  }

  CHECK_THROWS_AS(circular_scan_gap(toroid(0.0, 0.4e-6), -std::numbers::pi / 2), DomainError);
}

TEST_CASE("toroid linewidths: symmetric when centered, broader on the smaller-gap side") {
  const auto taper = toroid_taper();
  for (double th = 0.05; th < 1.5; th += 0.1) {
    const auto p = toroid_resonances_at(toroid(0, 0), taper, th);
    const auto m = toroid_resonances_at(toroid(0, 0), taper, -th);
    for (std::size_t k = 0; k < p.size(); ++k)
      CHECK(p[k].gamma_loaded == Approx(m[k].gamma_loaded).epsilon(1e-3));
  }
  // The lower half (theta < 0) is closer to the tube for a path shifted upward.
  const auto up = toroid(0.0, 0.1e-6);
  double lower = 0.0, upper = 0.0;
  for (double th = 0.05; th < 1.5; th += 0.1) {
    lower += toroid_resonances_at(up, taper, -th)[0].gamma_loaded;
    upper += toroid_resonances_at(up, taper, th)[0].gamma_loaded;
  }
  CHECK(lower > upper);
  // A horizontal offset enters through cos(theta) and keeps the halves equal.
  const auto side = toroid(-0.1e-6, 0.0);
  for (double th = 0.05; th < 1.5; th += 0.1)
    CHECK(toroid_resonances_at(side, taper, -th)[0].gamma_loaded ==
          Approx(toroid_resonances_at(side, taper, th)[0].gamma_loaded).epsilon(1e-12));
}

TEST_CASE("circular waterfall positions are limited to the half circle") {
  ScanPlan plan{ScanKind::CircularTheta, {-2.0, 0.0}, {3.8e14, 20e6, 100}, 1.0};
  CHECK_THROWS_AS(synth_waterfall_circular(toroid(0, 0), toroid_taper(), plan, {}), UsageError);
}

TEST_CASE("toroid fundamental is single-lobed at theta = 0") {
  const auto cfg = fixtures::load("toroid_scan.json");
  auto g = cfg.toroid;
  g.offset_y = g.offset_z = 0.0;
  double best = 0.0, at = 1.0;
  for (double th = -1.2; th <= 1.2; th += 0.01) {
    const double c = toroid_resonances_at(g, cfg.taper, th)[0].dip_depth;
    if (c > best) { best = c; at = th; }
  }
  CHECK(std::abs(at) < 0.011);
  CHECK(cfg.toroid.modes[0].frequency_offset == 19e9);
}

TEST_CASE("scan kind strings") {
  CHECK(scan_kind_from_string("linear_z") == ScanKind::LinearZ);
  CHECK(to_string(ScanKind::CircularTheta) == "circular_theta");
  CHECK_THROWS_AS(scan_kind_from_string("spiral"), UsageError);
}

} // TEST_SUITE
