#include <doctest.h>

#include "wgm/errors.hpp"
#include "wgm/overlap.hpp"
#include "wgm/physics.hpp"

#include <cmath>

using namespace wgm;
using doctest::Approx;

namespace {

OverlapConfig base() {
  OverlapConfig c;
  c.kappa = 1.0 / evanescent_depth(1.4537, 775e-9);
  c.ell = 330;
  c.a = 28e-6;
  c.gap_g0 = 0.0;
  return c;
}

std::vector<double> z_grid() { return linspace(-6e-6, 6e-6, 121); }

} // namespace

TEST_SUITE("overlap") {

TEST_CASE("thin taper samples the intensity profile") {
  const auto c = base().with_waist(0.01 / base().kappa);
  for (int q : {0, 2, 3}) {
    double ref = 0.0;
    for (double z = -3e-6; z <= 3e-6; z += 0.25e-6) {
      const double h = hg_profile(q, c.ell, c.a, c.kappa, z);
      if (h < 1e-3 * hg_profile(q, c.ell, c.a, c.kappa, 0.7e-6) || h < 1e-6) continue;
      const double ratio = overlap_coupling(c, z, q) / h;
      if (ref == 0.0) ref = ratio;
      CHECK(ratio == Approx(ref).epsilon(5e-3));
    }
  }
}

TEST_CASE("odd modes give zero overlap at the center") {
  for (double w : {0.1e-6, 1e-6}) {
    const auto c = base().with_waist(w);
    const double peak = overlap_coupling(c, 1e-6, 1);
    CHECK(overlap_coupling(c, 0.0, 1) < 1e-20 * peak);
  }
}

TEST_CASE("finite taper broadens the fundamental profile") {
  const auto c = base().with_waist(1e-6);
  const double ov = overlap_coupling(c, 1e-6, 0) / overlap_coupling(c, 0.0, 0);
  const double point = hg_profile(0, c.ell, c.a, c.kappa, 1e-6);
  CHECK(ov > point);
}

TEST_CASE("quadrature converges on panel doubling") {
  const auto c = base().with_waist(0.5e-6);
  for (int q = 0; q <= 5; ++q)
    for (double z : {0.0, 0.7e-6, 2e-6}) {
      const auto v = overlap_coupling_detail(c, z, q);
      CHECK(v.relative_change <= 1e-8);
      auto finer = c;
      finer.panels = 2 * v.panels;
      const double f = overlap_coupling(finer, z, q);
      const double scale = overlap_coupling(c, 1e-6, q) + overlap_coupling(c, 0.0, q);
      CHECK(std::abs(f - v.value) <= 1e-6 * scale);
    }
}

TEST_CASE("overlap profiles are even in the taper position") {
  const auto c = base().with_waist(0.8e-6);
  for (int q = 0; q <= 5; ++q)
    for (double z : {0.3e-6, 1.1e-6, 2.5e-6}) {
      const double p = overlap_coupling(c, z, q);
      const double m = overlap_coupling(c, -z, q);
      CHECK(std::abs(p - m) <= 1e-9 * std::max(p, 1e-300) + 1e-30);
    }
}

TEST_CASE("unconverged quadrature is an error") {
  auto c = base().with_waist(1e-9);
  c.panels = 64;
  c.max_panels = 64;
  CHECK_THROWS_AS(overlap_coupling(c, 0.3e-6, 0), NumericalError);
}

TEST_CASE("configuration checks") {
  auto c = base();
  c.panels = 63;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = base();
  c.kappa = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  CHECK(base().waist() == Approx(0.7e-6));
  CHECK(taper_mode_field(1e-6, 0.0) == Approx(std::pow(2.0 / (M_PI * 1e-12), 0.25)));
}

TEST_CASE("effective scale: thin limit, monotone sweep, bracket of 1.4") {
  const auto c = base();
  CHECK(std::abs(effective_scale_factor(c.with_waist(0.01 / c.kappa), 5, z_grid()) - 1.0) < 0.01);

  const auto waists = linspace(0.05e-6, 2e-6, 10);
  const auto rows = sweep_scale_factor(c, waists, 5, z_grid());
  REQUIRE(rows.size() == 10);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].s_hat >= rows[i - 1].s_hat);

  std::optional<double> w;
  for (std::size_t i = 1; i < rows.size() && !w; ++i)
    if (rows[i - 1].s_hat <= 1.4 && 1.4 <= rows[i].s_hat)
      w = find_waist_for_scale(c, 1.4, rows[i - 1].waist, rows[i].waist, 5, z_grid(), 1e-9);
  REQUIRE(w);
  CHECK(*w >= 0.2e-6);
  CHECK(*w <= 2e-6);
  const double s = effective_scale_factor(c.with_waist(*w), 5, z_grid());
  CHECK(s >= 1.35);
  CHECK(s <= 1.45);
  CHECK_FALSE(find_waist_for_scale(c, 5.0, 0.1e-6, 0.5e-6, 5, z_grid()).has_value());
}

TEST_CASE("linspace endpoints") {
  const auto v = linspace(-1.0, 1.0, 5);
  CHECK(v.front() == -1.0);
  CHECK(v.back() == 1.0);
  CHECK(v[2] == 0.0);
  CHECK(linspace(3.0, 4.0, 1) == std::vector<double>{3.0});
}

} // TEST_SUITE
