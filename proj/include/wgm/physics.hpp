#pragma once

// Closed-form WGM physics: mode indices, ellipticity splitting, evanescent
// coupling and polar intensity profiles of a microsphere.

#include <cstdint>
#include <string_view>
#include <vector>

namespace wgm {

inline constexpr double kSpeedOfLight = 299792458.0; // m/s, exact
inline constexpr double kDefaultSilicaIndex = 1.4537; // fused silica near 775 nm

enum class Polarization { TE, TM };

std::string_view to_string(Polarization p);
Polarization polarization_from_string(std::string_view s);

/// Identity of a sphere WGM. `q = ell - |m|` is stored alongside `m`; the
/// two must agree. The radial order `n` is carried as an opaque tag.
/// ell == m == 0 marks a mode with no angular momentum number (toroid), for
/// which only `q` is meaningful.
struct ModeId {
  int n = 1;
  int ell = 1;
  int m = 1;
  int q = 0;
  Polarization polarization = Polarization::TE;

  /// Builds the mode with m = +(ell - q). Throws DomainError on bad indices.
  static ModeId from_q(int ell, int q, int n = 1,
                       Polarization pol = Polarization::TE);

  bool is_fundamental() const { return q == 0; }
  void validate() const;
};

struct SphereGeometry {
  double radius = 0.0;      // m
  double ellipticity = 0.0; // > 0 prolate
  double refractive_index = kDefaultSilicaIndex;

  void validate() const;
};

/// Taper/cavity coupling parameters. Linewidths are FWHM in Hz.
struct TaperCoupling {
  double wavelength = 775e-9; // m
  double kappa = 0.0;         // 1/m, evanescent decay rate of the WGM field
  double gap_g0 = 0.0;        // m, air gap at the scan apex
  double gamma0 = 0.0;        // intrinsic linewidth
  double gammaC0 = 0.0;       // coupling linewidth at zero gap, fundamental at the equator
  std::vector<double> Kq;     // per-q multipliers of gammaC0; missing entries mean 1

  double scale_for(int q) const;
  void validate() const;

  /// Convenience: kappa from the cavity index and wavelength.
  static TaperCoupling with_evanescent_decay(double refractive_index,
                                             double wavelength);
};

struct ResonanceState {
  ModeId mode;
  double frequency = 0.0;       // Hz
  double gamma_intrinsic = 0.0; // Hz
  double gamma_loaded = 0.0;    // Hz
  double dip_depth = 0.0;       // C = 1 - T_res/T0

  void validate() const;
};

/// c / (2 pi n_S a).
double free_spectral_range(const SphereGeometry& geom);

/// round(2 pi n_S a / lambda).
int estimate_ell(const SphereGeometry& geom, double wavelength);

/// Relative frequency shift -(e/6)(1 - 3 m^2 / (l(l+1))) of a slightly
/// spheroidal cavity.
double ellipticity_shift_exact(const ModeId& mode, double e);
double ellipticity_shift_exact(int ell, int m, double e);

/// First-order form e/3 - (e/l) q, valid for q << l.
double ellipticity_shift_approx(int q, int ell, double e);

struct MultipletLine {
  int q = 0;
  double frequency = 0.0;
};

/// Members q = 0..q_max of one (n, l) multiplet:
/// nu_q = nu_ref (1 + shift_exact(l, l - q, e)).
std::vector<MultipletLine> multiplet_frequencies(const SphereGeometry& geom,
                                                 int ell, double nu_ref,
                                                 int q_max);
/// Same, with l estimated from the geometry at lambda = c / nu_ref.
std::vector<MultipletLine> multiplet_frequencies(const SphereGeometry& geom,
                                                 double nu_ref, int q_max);

/// Evanescent depth 1/kappa = lambda / (2 pi sqrt(n_S^2 - 1)).
double evanescent_depth(double refractive_index, double wavelength);

/// Physicists' Hermite polynomial H_q(x).
double hermite_polynomial(int q, double x);

/// |Y_l^m(theta)|^2 for the orthonormal spherical harmonic. Evaluated with a
/// normalized Legendre recurrence carried in log scale, so l in the
/// thousands is fine.
double spherical_harmonic_intensity(int ell, int m, double theta);

/// Same quantity parameterized by the elevation above the equator,
/// theta = pi/2 - elevation. Exactly even in the elevation.
double spherical_harmonic_intensity_at_elevation(int ell, int m,
                                                 double elevation);

/// Natural log of |Y_l^m|^2 at the given elevation; -inf at a node.
double log_spherical_harmonic_intensity_at_elevation(int ell, int m,
                                                     double elevation);

/// H_q^2(sqrt(l) z / a) exp[-(l/a^2 + kappa/a) z^2], unnormalized.
double hg_profile(int q, int ell, double a, double kappa, double z);

struct CouplingResult {
  double dip_depth = 0.0;      // C
  double gamma_loaded = 0.0;   // gamma0 + gamma_c
  double gamma_coupling = 0.0; // gamma_c
};

/// Coupled-mode dip depth 4 g0 gc / (g0 + gc)^2.
double dip_depth_from_rates(double gamma_intrinsic, double gamma_coupling);

/// Coupling of `mode` to the taper at air gap `gap` and polar angle `theta`.
/// gamma_c = Kq gammaC0 |Y_l^{l-q}(theta)|^2 / |Y_l^l(pi/2)|^2 exp(-2 kappa gap).
CouplingResult coupling_efficiency(const ModeId& mode,
                                   const TaperCoupling& taper, double gap,
                                   double theta);

/// Same, with the polar position given as elevation above the equator.
CouplingResult coupling_efficiency_at_elevation(const ModeId& mode,
                                                const TaperCoupling& taper,
                                                double gap, double elevation);

} // namespace wgm
