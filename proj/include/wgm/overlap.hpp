#pragma once

// One-dimensional overlap model of a finite taper sampling the WGM field
// along the meridian. A finite taper mode averages the field over its waist,
// which widens the measured profiles relative to the point-coupler model.

#include "wgm/profile_fit.hpp"

#include <optional>
#include <vector>

namespace wgm {

struct OverlapConfig {
  double taper_diameter = 1e-6; // m
  double taper_mode_waist = 0.0; // m, intensity 1/e^2 radius; 0: 0.7 * diameter
  double kappa = 0.0;           // 1/m
  int ell = 0;
  double a = 0.0;     // m
  double gap_g0 = 0.0; // m
  int panels = 512;   // initial Simpson panel count, even, >= 64
  double integration_halfwidth = 6.0; // in units of max(waist, 1/kappa)
  int max_panels = 1 << 18;

  double waist() const { return taper_mode_waist > 0.0 ? taper_mode_waist : 0.7 * taper_diameter; }
  /// Copy with the waist set explicitly (diameter follows the default ratio).
  OverlapConfig with_waist(double waist) const;
  void validate() const;
};

/// WGM field amplitude along the meridian,
/// H_q(sqrt(l) z / a) exp(-l z^2 / 2a^2) exp(-kappa (g0 + z^2 / 2a)).
double wgm_meridian_field(const OverlapConfig& config, int q, double z);

/// Taper mode field, Gaussian of the configured waist with unit L2 norm.
double taper_mode_field(double waist, double offset);

struct OverlapValue {
  double value = 0.0;
  int panels = 0;
  double relative_change = 0.0; // last doubling, relative to the integral scale
};

/// |int psi_q(z) w(z - z_center) dz|^2 by composite Simpson, doubling the
/// panel count until successive values agree to 1e-8 of the integral scale.
/// Throws NumericalError if the best change is still above 1e-6.
OverlapValue overlap_coupling_detail(const OverlapConfig& config, double z_center, int q);
double overlap_coupling(const OverlapConfig& config, double z_center, int q);

struct EffectiveScale {
  double s_hat = 0.0;
  FitResult fit;
};

/// Fits overlap-based profiles for q = 0..q_max on z_grid with the thin-taper
/// model and returns the fitted horizontal scale.
EffectiveScale effective_scale_detail(const OverlapConfig& config, int q_max,
                                      const std::vector<double>& z_grid);
double effective_scale_factor(const OverlapConfig& config, int q_max,
                              const std::vector<double>& z_grid);

struct SweepRow {
  double waist = 0.0;
  double s_hat = 0.0;
};

std::vector<SweepRow> sweep_scale_factor(const OverlapConfig& config,
                                         const std::vector<double>& waists, int q_max,
                                         const std::vector<double>& z_grid);

/// Bisection for the waist where s_hat(waist) = target, given a bracket
/// [lo, hi] with s_hat(lo) <= target <= s_hat(hi). Empty if not bracketed.
std::optional<double> find_waist_for_scale(const OverlapConfig& config, double target,
                                           double lo, double hi, int q_max,
                                           const std::vector<double>& z_grid,
                                           double waist_tolerance = 1e-9);

/// Evenly spaced grid of `count` points on [from, to].
std::vector<double> linspace(double from, double to, std::size_t count);

} // namespace wgm
