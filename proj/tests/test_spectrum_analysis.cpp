#include <doctest.h>

#include "fixtures.hpp"
#include "wgm/errors.hpp"
#include "wgm/spectrum_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace wgm;
using doctest::Approx;

namespace {

FrequencyGrid grid_1mhz() { return {-400e6, 1e6, 801}; }

std::vector<double> single_dip(double C, double gamma, double sigma = 0.0, unsigned seed = 7) {
  const auto grid = grid_1mhz();
  const std::vector<ResonanceState> m{{ModeId::from_q(10, 0), 3.3e6, gamma, gamma, C}};
  auto t = synth_spectrum(m, grid, 1.0);
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    for (double& v : t) v += g(rng);
  }
  return t;
}

const ProfileSeries& series_for_q(const AnalysisReport& r, int q) {
  for (const auto& s : r.profiles)
    if (s.q == q) return s;
  throw std::runtime_error("missing q");
}

std::vector<double> values_of(const ProfileSeries& s) {
  std::vector<double> v;
  for (const auto& x : s.samples) v.push_back(x.normalized_area);
  return v;
}

} // namespace

TEST_SUITE("spectrum_analysis") {

TEST_CASE("baseline from the upper quartile") {
  std::vector<double> t(100, 0.95);
  for (int i = 0; i < 30; ++i) t[i] = 0.2;
  CHECK(estimate_baseline(t) == 0.95);
  CHECK_THROWS_AS(estimate_baseline(std::vector<double>{}), UsageError);
}

TEST_CASE("dip detection") {
  const auto grid = grid_1mhz();
  CHECK(detect_dips(std::vector<double>(grid.count, 1.0), grid, 0.05).candidates.empty());

  const auto one = detect_dips(single_dip(0.4, 20e6), grid, 0.05);
  REQUIRE(one.candidates.size() == 1);
  CHECK(std::abs(grid.at(one.candidates[0].min_index) - 3.3e6) <= grid.step);

  const std::vector<ResonanceState> two{{ModeId::from_q(10, 0), -100e6, 20e6, 20e6, 0.4},
                                        {ModeId::from_q(10, 0), 100e6, 20e6, 20e6, 0.4}};
  CHECK(detect_dips(synth_spectrum(two, grid, 1.0), grid, 0.05).candidates.size() == 2);
  CHECK_THROWS_AS(detect_dips(std::vector<double>{}, grid, 0.05), UsageError);
}

TEST_CASE("Lorentzian fit recovers a noiseless dip exactly") {
  const auto grid = grid_1mhz();
  const auto t = single_dip(0.3, 30e6);
  const auto det = detect_dips(t, grid, 0.05);
  REQUIRE(det.candidates.size() == 1);
  const auto rec = fit_lorentzian_dip(t, grid, det.candidates[0], det.baseline);
  CHECK(rec.converged);
  CHECK(rec.center == Approx(3.3e6).epsilon(1e-6));
  CHECK(rec.fwhm == Approx(30e6).epsilon(1e-6));
  CHECK(rec.depth == Approx(0.3).epsilon(1e-6));
  CHECK(rec.area == Approx(0.3 * 30e6 * M_PI / 2).epsilon(1e-6));
}

TEST_CASE("Lorentzian fit under noise") {
  const auto grid = grid_1mhz();
  const auto t = single_dip(0.3, 30e6, 0.005);
  const auto det = detect_dips(t, grid, 0.05);
  REQUIRE(det.candidates.size() == 1);
  const auto rec = fit_lorentzian_dip(t, grid, det.candidates[0], det.baseline);
  CHECK(rec.converged);
  CHECK(rec.depth == Approx(0.3).epsilon(0.05));
}

TEST_CASE("window without a dip is flagged") {
  const auto grid = grid_1mhz();
  const std::vector<double> flat(grid.count, 1.0);
  DipCandidate c{400, 350, 451, 0.0, 10e6};
  CHECK_FALSE(fit_lorentzian_dip(flat, grid, c, 1.0).converged);
  std::vector<double> noisy(grid.count);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(1.0, 0.005);
  for (double& v : noisy) v = g(rng);
  CHECK_FALSE(fit_lorentzian_dip(noisy, grid, c, 1.0).converged);
}

TEST_CASE("fixed-shape fit is linear in depth") {
  const auto grid = grid_1mhz();
  const auto t = single_dip(0.2, 30e6);
  const auto rec = fit_fixed_shape_dip(t, grid, 3.3e6, 30e6, 200, 600);
  CHECK(rec.depth == Approx(0.2).epsilon(1e-12));
  CHECK(rec.baseline == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("missing-line labeling") {
  const std::vector<double> lines{0, -14e9, -28e9, -42e9, -56e9, -70e9};
  const auto a = label_multiplet(lines);
  CHECK(a.q_of_line == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(a.spacing_hat == Approx(14e9));
  CHECK(a.q0_frequency == 0.0);
  CHECK(a.missing_line_frequency == Approx(14e9));

  std::vector<double> rev(lines.rbegin(), lines.rend());
  const auto b = label_multiplet(rev);
  CHECK(b.q_of_line == std::vector<int>{5, 4, 3, 2, 1, 0});
  CHECK(b.lines_by_q == a.lines_by_q);
  CHECK(b.spacing_hat == a.spacing_hat);

  CHECK_THROWS_AS(label_multiplet(std::vector<double>{0, -10e9, -25e9}), AnalysisError);
  CHECK_THROWS_AS(label_multiplet(std::vector<double>{0, -10e9}), AnalysisError);
}

TEST_CASE("labeling is invariant under permutation and global shift") {
  const auto cfg = fixtures::sphere56_noiseless();
  std::vector<double> lines;
  for (const auto& l : multiplet_frequencies(cfg.sphere, cfg.multiplet.ell, cfg.multiplet.nu_ref, 5))
    lines.push_back(l.frequency);
  const auto ref = label_multiplet(lines);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto perm = lines;
    std::shuffle(perm.begin(), perm.end(), rng);
    const double shift = (trial - 10) * 3.7e9;
    for (double& f : perm) f += shift;
    const auto a = label_multiplet(perm);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      const auto it = std::find(lines.begin(), lines.end(), perm[i] - shift);
      CHECK(a.q_of_line[i] == ref.q_of_line[std::size_t(it - lines.begin())]);
    }
    CHECK(a.spacing_hat == Approx(ref.spacing_hat).epsilon(1e-9));
  }
}

TEST_CASE("56 um sphere round trip: lines, labels and lobes") {
  const auto cfg = fixtures::load("sphere_56um.json");
  const auto wf = cli::synthesize(cfg);
  const auto report = analyze_waterfall(wf, cfg.analysis);
  REQUIRE(report.multiplet);
  REQUIRE(report.lines.size() == 6);
  const auto truth =
      multiplet_frequencies(cfg.sphere, cfg.multiplet.ell, cfg.multiplet.nu_ref, 5);
  for (const auto& line : report.lines) {
    REQUIRE(line.q >= 0);
    CHECK(std::abs(line.frequency - truth[std::size_t(line.q)].frequency) <= cfg.plan.grid.step);
  }
  for (int q = 0; q <= 5; ++q) {
    const auto nc = count_antinodes(series_for_q(report, q));
    CAPTURE(q);
    CHECK(nc.antinodes == q + 1);
    CHECK(nc.interior_nodes == q);
  }
  for (const auto& s : report.profiles)
    for (const auto& x : s.samples) CHECK(x.normalized_area >= 0.0);
}

TEST_CASE("q = 1 profile has two lobes and a deep central minimum") {
  const auto cfg = fixtures::sphere56_noiseless();
  const auto report = analyze_waterfall(cli::synthesize(cfg), cfg.analysis);
  const auto v = values_of(series_for_q(report, 1));
  const double peak = *std::max_element(v.begin(), v.end());
  const auto mid = std::find(cfg.plan.positions.begin(), cfg.plan.positions.end(), 0.0);
  REQUIRE(mid != cfg.plan.positions.end());
  CHECK(v[std::size_t(mid - cfg.plan.positions.begin())] < 0.05 * peak);
  CHECK(count_antinodes(v).antinodes == 2);
}

TEST_CASE("odd profiles vanish at z = 0 and lost lines leave flagged gaps") {
  const auto cfg = fixtures::sphere56_noiseless();
  const auto report = analyze_waterfall(cli::synthesize(cfg), cfg.analysis);
  const std::size_t mid =
      std::size_t(std::find(cfg.plan.positions.begin(), cfg.plan.positions.end(), 0.0) -
                  cfg.plan.positions.begin());
  for (int q : {1, 3, 5}) {
    const auto& s = series_for_q(report, q);
    const auto v = values_of(s);
    const double peak = *std::max_element(v.begin(), v.end());
    CHECK(v[mid] < 1e-3 * peak);
  }
  const auto& s1 = series_for_q(report, 1);
  CHECK_FALSE(s1.samples[mid].detected);
  CHECK(s1.samples[mid - 1].detected);
  // A single missed position at the node is not a gap; the faded tails are.
  CHECK_FALSE(std::any_of(s1.gaps.begin(), s1.gaps.end(),
                          [&](const auto& g) { return g.first <= mid && mid < g.second; }));
  REQUIRE(s1.gaps.size() == 2);
  CHECK(s1.gaps.front().first == 0);
  CHECK(s1.gaps.back().second == s1.samples.size());
  for (const auto& g : s1.gaps) {
    CHECK(g.second - g.first > 2);
    for (std::size_t i = g.first; i < g.second; ++i) CHECK_FALSE(s1.samples[i].detected);
  }
}

TEST_CASE("undercoupled: both conventions agree and P_0 follows the Hermite-Gauss profile") {
  auto cfg = fixtures::sphere56_undercoupled();
  const auto wf = cli::synthesize(cfg);
  auto opts = cfg.analysis;
  opts.convention = ProfileConvention::Loaded;
  const auto loaded = analyze_waterfall(wf, opts);
  opts.convention = ProfileConvention::Intrinsic;
  const auto text = analyze_waterfall(wf, opts);
  for (int q = 0; q <= 5; ++q) {
    const auto a = values_of(series_for_q(loaded, q));
    const auto b = values_of(series_for_q(text, q));
    const double pa = *std::max_element(a.begin(), a.end());
    const double pb = *std::max_element(b.begin(), b.end());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] / pa - b[i] / pb) < 0.01);
  }
  const auto p0 = values_of(series_for_q(loaded, 0));
  const double peak = *std::max_element(p0.begin(), p0.end());
  for (std::size_t i = 0; i < p0.size(); ++i) {
    const double z = cfg.plan.positions[i];
    const double model = hg_profile(0, cfg.multiplet.ell, cfg.sphere.radius, cfg.taper.kappa, z);
    CHECK(std::abs(p0[i] / peak - model) < 0.01);
  }
}

TEST_CASE("intrinsic width estimate is the narrowest fitted line") {
  const auto cfg = fixtures::sphere56_noiseless();
  const auto report = analyze_waterfall(cli::synthesize(cfg), cfg.analysis);
  for (const auto& l : report.lines) {
    CHECK(l.gamma_intrinsic_hat >= cfg.taper.gamma0 * 0.999);
    CHECK(l.gamma_intrinsic_hat < cfg.taper.gamma0 * 1.05);
  }
}

TEST_CASE("two-line waterfall is rejected") {
  auto cfg = fixtures::sphere56_noiseless();
  cfg.multiplet.q_max = 1;
  CHECK_THROWS_AS(analyze_waterfall(cli::synthesize(cfg), cfg.analysis), AnalysisError);
}

TEST_CASE("antinode counting") {
  CHECK(count_antinodes(std::vector<double>{0, 1, 2, 1, 0}).antinodes == 1);
  const std::vector<double> two{0, 2, 4, 2, 0.1, 2, 4, 2, 0};
  const auto nc = count_antinodes(two);
  CHECK(nc.antinodes == 2);
  CHECK(nc.interior_nodes == 1);
  // a shallow notch is not a node and the ripple is not a lobe
  const std::vector<double> ripple{0, 2, 4, 3.5, 3.9, 2, 0};
  CHECK(count_antinodes(ripple).antinodes == 1);
  CHECK(count_antinodes(std::vector<double>(5, 0.0)).antinodes == 0);
}

TEST_CASE("convention strings") {
  CHECK(profile_convention_from_string("intrinsic") == ProfileConvention::Intrinsic);
  CHECK(to_string(ProfileConvention::Loaded) == "loaded");
  CHECK_THROWS_AS(profile_convention_from_string("area"), UsageError);
}

} // TEST_SUITE
