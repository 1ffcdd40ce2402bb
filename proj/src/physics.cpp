#include "wgm/physics.hpp"

#include "wgm/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace wgm {

namespace {

constexpr double pi = std::numbers::pi;

// ln of the normalized sectoral Legendre value Pbar_m^m without the sin^m
// factor: 0.5 ln[(2m+1)/(4 pi) * (2m)! / (4^m (m!)^2)].
double log_sectoral_norm(int m) {
  const double dm = m;
  return 0.5 * (std::log((2.0 * dm + 1.0) / (4.0 * pi)) +
                std::lgamma(2.0 * dm + 1.0) - 2.0 * std::lgamma(dm + 1.0) -
                dm * std::log(4.0));
}

// ln |Pbar_l^m(x)|^2 where Pbar is normalized so that
// 2 pi * int Pbar^2 sin(theta) dtheta = 1. x = cos(theta), s = sin(theta) >= 0.
double log_normalized_legendre_sq(int ell, int m, double x, double s) {
  m = std::abs(m);
  double log_scale = log_sectoral_norm(m);
  if (m > 0) {
    if (s == 0.0) return -std::numeric_limits<double>::infinity();
    log_scale += m * std::log(s);
  }
  // Mantissas of Pbar_{l-1}^m and Pbar_l^m, both scaled by exp(log_scale).
  double prev = 0.0;
  double cur = 1.0;
  double a_prev = 0.0;
  constexpr double big = 1e150;
  for (int l = m + 1; l <= ell; ++l) {
    const double dl = l;
    const double a_l = std::sqrt((4.0 * dl * dl - 1.0) / (dl * dl - double(m) * m));
    const double next = (l == m + 1) ? a_l * x * cur : a_l * (x * cur - prev / a_prev);
    prev = cur;
    cur = next;
    a_prev = a_l;
    if (std::abs(cur) > big) {
      cur /= big;
      prev /= big;
      log_scale += std::log(big);
    }
  }
  if (cur == 0.0) return -std::numeric_limits<double>::infinity();
  return 2.0 * (std::log(std::abs(cur)) + log_scale);
}

void check_degree(int ell, int m) {
  if (ell < 0 || std::abs(m) > ell)
    throw DomainError("spherical harmonic requires |m| <= l, got l=" +
                      std::to_string(ell) + " m=" + std::to_string(m));
}

} // namespace

std::string_view to_string(Polarization p) {
  return p == Polarization::TE ? "TE" : "TM";
}

Polarization polarization_from_string(std::string_view s) {
  if (s == "TE") return Polarization::TE;
  if (s == "TM") return Polarization::TM;
  throw UsageError("unknown polarization '" + std::string(s) + "'");
}

ModeId ModeId::from_q(int ell, int q, int n, Polarization pol) {
  ModeId id{n, ell, ell - q, q, pol};
  id.validate();
  return id;
}

void ModeId::validate() const {
  if (n < 1) throw DomainError("radial order n must be positive");
  if (ell == 0 && m == 0) {
    // Toroid modes: no angular momentum number, only the polar order.
    if (q < 0) throw DomainError("polar order q must be non-negative");
    return;
  }
  if (ell < 1) throw DomainError("angular order l must be positive");
  if (std::abs(m) > ell) throw DomainError("|m| must not exceed l");
  if (q != ell - std::abs(m))
    throw DomainError("polar order q disagrees with l - |m|");
}

void SphereGeometry::validate() const {
  if (!(radius > 0.0)) throw DomainError("sphere radius must be positive");
  if (!(refractive_index > 1.0))
    throw DomainError("refractive index must exceed 1");
  if (!(std::abs(ellipticity) < 0.1))
    throw DomainError("|ellipticity| must stay below 0.1");
}

double TaperCoupling::scale_for(int q) const {
  if (q >= 0 && static_cast<std::size_t>(q) < Kq.size()) return Kq[q];
  return 1.0;
}

void TaperCoupling::validate() const {
  if (!(gamma0 > 0.0) || !(gammaC0 > 0.0))
    throw DomainError("linewidths must be positive");
  if (!(kappa > 0.0)) throw DomainError("kappa must be positive");
  if (!(gap_g0 >= 0.0)) throw DomainError("gap g0 must be non-negative");
  for (double k : Kq)
    if (!(k >= 0.0)) throw DomainError("Kq entries must be non-negative");
}

TaperCoupling TaperCoupling::with_evanescent_decay(double refractive_index,
                                                   double wavelength) {
  TaperCoupling t;
  t.wavelength = wavelength;
  t.kappa = 1.0 / evanescent_depth(refractive_index, wavelength);
  return t;
}

void ResonanceState::validate() const {
  if (!(gamma_loaded >= gamma_intrinsic))
    throw DomainError("loaded linewidth below intrinsic linewidth");
  if (!(dip_depth >= 0.0 && dip_depth <= 1.0))
    throw DomainError("dip depth outside [0, 1]");
}

double free_spectral_range(const SphereGeometry& geom) {
  if (!(geom.radius > 0.0)) throw DomainError("sphere radius must be positive");
  if (!(geom.refractive_index > 0.0))
    throw DomainError("refractive index must be positive");
  return kSpeedOfLight / (2.0 * pi * geom.refractive_index * geom.radius);
}

int estimate_ell(const SphereGeometry& geom, double wavelength) {
  if (!(wavelength > 0.0)) throw DomainError("wavelength must be positive");
  geom.validate();
  const auto ell = std::lround(2.0 * pi * geom.refractive_index * geom.radius /
                               wavelength);
  if (ell < 1) throw DomainError("cavity too small for a WGM at this wavelength");
  return static_cast<int>(ell);
}

double ellipticity_shift_exact(int ell, int m, double e) {
  check_degree(ell, m);
  const double dl = ell;
  const double dm = m;
  return -(e / 6.0) * (1.0 - 3.0 * dm * dm / (dl * (dl + 1.0)));
}

double ellipticity_shift_exact(const ModeId& mode, double e) {
  mode.validate();
  return ellipticity_shift_exact(mode.ell, mode.m, e);
}

double ellipticity_shift_approx(int q, int ell, double e) {
  if (q < 0 || q > ell) throw DomainError("q must lie in [0, l]");
  return e / 3.0 - (e / ell) * q;
}

std::vector<MultipletLine> multiplet_frequencies(const SphereGeometry& geom,
                                                 int ell, double nu_ref,
                                                 int q_max) {
  geom.validate();
  if (!(nu_ref > 0.0)) throw DomainError("reference frequency must be positive");
  if (q_max < 0 || q_max >= ell)
    throw DomainError("q_max must lie in [0, l)");
  std::vector<MultipletLine> lines;
  lines.reserve(q_max + 1);
  for (int q = 0; q <= q_max; ++q)
    lines.push_back(
        {q, nu_ref * (1.0 + ellipticity_shift_exact(ell, ell - q, geom.ellipticity))});
  return lines;
}

std::vector<MultipletLine> multiplet_frequencies(const SphereGeometry& geom,
                                                 double nu_ref, int q_max) {
  if (!(nu_ref > 0.0)) throw DomainError("reference frequency must be positive");
  return multiplet_frequencies(geom, estimate_ell(geom, kSpeedOfLight / nu_ref),
                               nu_ref, q_max);
}

double evanescent_depth(double refractive_index, double wavelength) {
  if (!(refractive_index > 1.0))
    throw DomainError("no evanescent decay for n_S <= 1");
  if (!(wavelength > 0.0)) throw DomainError("wavelength must be positive");
  return wavelength /
         (2.0 * pi * std::sqrt(refractive_index * refractive_index - 1.0));
}

double hermite_polynomial(int q, double x) {
  if (q < 0) throw DomainError("Hermite order must be non-negative");
  if (q == 0) return 1.0;
  double prev = 1.0;
  double cur = 2.0 * x;
  for (int k = 1; k < q; ++k) {
    const double next = 2.0 * x * cur - 2.0 * k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

double log_spherical_harmonic_intensity_at_elevation(int ell, int m,
                                                     double elevation) {
  check_degree(ell, m);
  return log_normalized_legendre_sq(ell, m, std::sin(elevation),
                                    std::abs(std::cos(elevation)));
}

double spherical_harmonic_intensity_at_elevation(int ell, int m,
                                                 double elevation) {
  return std::exp(log_spherical_harmonic_intensity_at_elevation(ell, m, elevation));
}

double spherical_harmonic_intensity(int ell, int m, double theta) {
  check_degree(ell, m);
  return std::exp(log_normalized_legendre_sq(ell, m, std::cos(theta),
                                             std::abs(std::sin(theta))));
}

double hg_profile(int q, int ell, double a, double kappa, double z) {
  const double h = hermite_polynomial(q, std::sqrt(double(ell)) * z / a);
  return h * h * std::exp(-(ell / (a * a) + kappa / a) * z * z);
}

double dip_depth_from_rates(double gamma_intrinsic, double gamma_coupling) {
  const double total = gamma_intrinsic + gamma_coupling;
  if (!(total > 0.0)) return 0.0;
  return 4.0 * gamma_intrinsic * gamma_coupling / (total * total);
}

namespace {

CouplingResult coupling_from_log_intensity(const ModeId& mode,
                                           const TaperCoupling& taper,
                                           double gap, double log_intensity) {
  if (!(gap >= 0.0)) throw DomainError("gap must be non-negative");
  const double log_ref = log_normalized_legendre_sq(mode.ell, mode.ell, 0.0, 1.0);
  const double gamma_c = taper.scale_for(mode.q) * taper.gammaC0 *
                         std::exp(log_intensity - log_ref - 2.0 * taper.kappa * gap);
  return {dip_depth_from_rates(taper.gamma0, gamma_c), taper.gamma0 + gamma_c,
          gamma_c};
}

} // namespace

CouplingResult coupling_efficiency(const ModeId& mode, const TaperCoupling& taper,
                                   double gap, double theta) {
  mode.validate();
  const double log_i = log_normalized_legendre_sq(
      mode.ell, mode.m, std::cos(theta), std::abs(std::sin(theta)));
  return coupling_from_log_intensity(mode, taper, gap, log_i);
}

CouplingResult coupling_efficiency_at_elevation(const ModeId& mode,
                                                const TaperCoupling& taper,
                                                double gap, double elevation) {
  mode.validate();
  return coupling_from_log_intensity(
      mode, taper, gap,
      log_spherical_harmonic_intensity_at_elevation(mode.ell, mode.m, elevation));
}

} // namespace wgm
