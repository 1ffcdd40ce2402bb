#include "wgm/overlap.hpp"

#include "wgm/errors.hpp"
#include "wgm/parallel.hpp"
#include "wgm/physics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace wgm {

OverlapConfig OverlapConfig::with_waist(double waist) const {
  OverlapConfig c = *this;
  c.taper_mode_waist = waist;
  c.taper_diameter = waist / 0.7;
  return c;
}

void OverlapConfig::validate() const {
  if (!(taper_diameter > 0.0) || !(waist() > 0.0)) throw DomainError("taper size must be positive");
  if (!(kappa > 0.0)) throw DomainError("kappa must be positive");
  if (!(a > 0.0)) throw DomainError("sphere radius must be positive");
  if (ell < 1) throw DomainError("l must be positive");
  if (!(gap_g0 >= 0.0)) throw DomainError("gap must be non-negative");
  if (panels < 64 || panels % 2 != 0) throw DomainError("panel count must be even and >= 64");
  if (!(integration_halfwidth > 0.0)) throw DomainError("integration half-width must be positive");
}

double wgm_meridian_field(const OverlapConfig& c, int q, double z) {
  const double h = hermite_polynomial(q, std::sqrt(double(c.ell)) * z / c.a);
  return h * std::exp(-c.ell * z * z / (2.0 * c.a * c.a) -
                      c.kappa * (c.gap_g0 + z * z / (2.0 * c.a)));
}

double taper_mode_field(double waist, double offset) {
  const double norm = std::pow(2.0 / (std::numbers::pi * waist * waist), 0.25);
  return norm * std::exp(-offset * offset / (waist * waist));
}

namespace {

struct SimpsonSums {
  double integral;
  double magnitude; // same rule applied to |integrand|
};

SimpsonSums simpson(const OverlapConfig& c, double z_center, int q, double lo, double hi,
                    int panels) {
  const double h = (hi - lo) / panels;
  const double waist = c.waist();
  double sum = 0.0, mag = 0.0;
  for (int k = 0; k <= panels; ++k) {
    const double z = lo + k * h;
    const double f = wgm_meridian_field(c, q, z) * taper_mode_field(waist, z - z_center);
    const double w = (k == 0 || k == panels) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    sum += w * f;
    mag += w * std::abs(f);
  }
  return {sum * h / 3.0, mag * h / 3.0};
}

} // namespace

OverlapValue overlap_coupling_detail(const OverlapConfig& config, double z_center, int q) {
  config.validate();
  if (q < 0) throw DomainError("q must be non-negative");
  const double half = config.integration_halfwidth * std::max(config.waist(), 1.0 / config.kappa);
  const double lo = z_center - half;
  const double hi = z_center + half;

  int panels = config.panels;
  auto prev = simpson(config, z_center, q, lo, hi, panels);
  double change = 0.0;
  while (true) {
    panels *= 2;
    const auto cur = simpson(config, z_center, q, lo, hi, panels);
    const double scale = std::max(cur.magnitude, 1e-300);
    change = std::abs(cur.integral - prev.integral) / scale;
    prev = cur;
    if (change <= 1e-8 || panels >= config.max_panels) break;
  }
  if (change > 1e-6)
    throw NumericalError("overlap quadrature not converged: relative change " +
                         std::to_string(change) + " at " + std::to_string(panels) + " panels");
  return {prev.integral * prev.integral, panels, change};
}

double overlap_coupling(const OverlapConfig& config, double z_center, int q) {
  return overlap_coupling_detail(config, z_center, q).value;
}

EffectiveScale effective_scale_detail(const OverlapConfig& config, int q_max,
                                      const std::vector<double>& z_grid) {
  config.validate();
  if (q_max < 0) throw DomainError("q_max must be non-negative");
  if (z_grid.size() < 3) throw UsageError("z grid too short");

  const std::size_t nz = z_grid.size();
  const std::size_t nq = static_cast<std::size_t>(q_max) + 1;
  std::vector<double> values(nq * nz);
  parallel_for(nq * nz, [&](std::size_t idx) {
    values[idx] = overlap_coupling(config, z_grid[idx % nz], static_cast<int>(idx / nz));
  });

  std::vector<ProfilePoint> data;
  data.reserve(nq * nz);
  for (std::size_t k = 0; k < nq; ++k) {
    const double peak = *std::max_element(values.begin() + k * nz, values.begin() + (k + 1) * nz);
    if (!(peak > 0.0)) throw NumericalError("overlap profile vanishes on the z grid");
    for (std::size_t i = 0; i < nz; ++i)
      data.push_back({static_cast<int>(k), z_grid[i], values[k * nz + i] / peak, 1.0});
  }

  FitModel init;
  init.ell = config.ell;
  init.a = config.a;
  init.kappa = config.kappa;
  for (int q = 0; q <= q_max; ++q) init.qs.push_back(q);
  init.z0 = 0.0;
  // Start s from the RMS width of the q = 0 profile against the thin-taper width.
  double m0 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < nz; ++i) {
    m0 += values[i];
    m2 += values[i] * z_grid[i] * z_grid[i];
  }
  const double b = config.ell / (config.a * config.a) + config.kappa / config.a;
  const double thin_rms = std::sqrt(1.0 / (2.0 * b));
  init.s = std::clamp(std::sqrt(m2 / m0) / thin_rms, 0.3, 3.0);

  auto fit = global_fit(data, init);
  return {fit.model.s, std::move(fit)};
}

double effective_scale_factor(const OverlapConfig& config, int q_max,
                              const std::vector<double>& z_grid) {
  return effective_scale_detail(config, q_max, z_grid).s_hat;
}

std::vector<SweepRow> sweep_scale_factor(const OverlapConfig& config,
                                         const std::vector<double>& waists, int q_max,
                                         const std::vector<double>& z_grid) {
  std::vector<SweepRow> rows;
  rows.reserve(waists.size());
  for (double w : waists)
    rows.push_back({w, effective_scale_factor(config.with_waist(w), q_max, z_grid)});
  return rows;
}

std::optional<double> find_waist_for_scale(const OverlapConfig& config, double target,
                                           double lo, double hi, int q_max,
                                           const std::vector<double>& z_grid,
                                           double waist_tolerance) {
  auto s_of = [&](double w) { return effective_scale_factor(config.with_waist(w), q_max, z_grid); };
  double s_lo = s_of(lo);
  double s_hi = s_of(hi);
  if (!(s_lo <= target && target <= s_hi)) return std::nullopt;
  while (hi - lo > waist_tolerance) {
    const double mid = 0.5 * (lo + hi);
    const double s_mid = s_of(mid);
    if (s_mid < target) {
      lo = mid;
      s_lo = s_mid;
    } else {
      hi = mid;
      s_hi = s_mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::vector<double> linspace(double from, double to, std::size_t count) {
  std::vector<double> v(count);
  if (count == 1) {
    v[0] = from;
    return v;
  }
  for (std::size_t i = 0; i < count; ++i)
    v[i] = from + (to - from) * double(i) / double(count - 1);
  return v;
}

} // namespace wgm
