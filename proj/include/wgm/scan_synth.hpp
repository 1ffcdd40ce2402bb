#pragma once

// Synthetic taper transmission spectra and position-scan waterfalls.
//
// Linear z-scans model a sphere with the taper moved along the revolution
// axis; circular theta-scans model a toroid with the taper moved on a circle
// around the tube cross-section. Noise is additive white Gaussian with one
// PRNG substream per scan position, so output is independent of threading.

#include "wgm/physics.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace wgm {

enum class ScanKind { LinearZ, CircularTheta };

std::string_view to_string(ScanKind kind);
ScanKind scan_kind_from_string(std::string_view s);

/// Uniform ascending frequency axis; sample i sits at start + i * step.
struct FrequencyGrid {
  double start = 0.0; // Hz
  double step = 0.0;  // Hz
  std::size_t count = 0;

  double at(std::size_t i) const { return start + static_cast<double>(i) * step; }
  double stop() const { return at(count == 0 ? 0 : count - 1); }
  std::vector<double> values() const;
  void validate() const;
};

struct ScanPlan {
  ScanKind kind = ScanKind::LinearZ;
  std::vector<double> positions; // m for z, rad for theta
  FrequencyGrid grid;
  double T0 = 1.0;

  void validate() const;
};

/// Which sphere modes are present: one (n, l) multiplet with q = 0..q_max.
struct MultipletSpec {
  int ell = 0;         // 0: estimate from geometry and wavelength
  double nu_ref = 0.0; // Hz; 0: c / wavelength
  int q_max = 5;
  int n = 1;
  Polarization polarization = Polarization::TE;
};

struct ToroidMode {
  double frequency_offset = 0.0; // Hz, relative to ToroidGeometry::reference_frequency
  double polar_width = 0.0;      // rad
  int q = 0;
  double gamma0 = 0.0;  // Hz
  double gammaC0 = 0.0; // Hz, at zero gap and profile value 1
};

struct ToroidGeometry {
  double minor_diameter = 0.0;      // m
  double scan_radius = 0.0;         // m, radius of the taper path
  double offset_y = 0.0;            // m, path center minus tube center (outward)
  double offset_z = 0.0;            // m, path center minus tube center (up)
  double reference_frequency = 0.0; // Hz; 0: c / taper wavelength
  std::vector<ToroidMode> modes;

  void validate() const;
};

struct NoiseModel {
  double sigma_T = 0.0;
  std::uint64_t seed = 0;
};

struct SphereSetup {
  SphereGeometry geometry;
  TaperCoupling taper;
  MultipletSpec multiplet;
};

struct ToroidSetup {
  ToroidGeometry geometry;
  TaperCoupling taper;
};

struct Waterfall {
  ScanPlan plan;
  std::vector<std::vector<double>> traces; // one per position
  std::variant<SphereSetup, ToroidSetup> setup;
  NoiseModel noise;

  void validate() const;
};

/// Unit-peak Lorentzian of full width `fwhm`.
double lorentzian(double nu, double center, double fwhm);

/// T(nu) = T0 * prod_k [1 - C_k L(nu; nu_k, gamma_L,k)].
std::vector<double> synth_spectrum(std::span<const ResonanceState> modes,
                                   const FrequencyGrid& grid, double T0 = 1.0);

/// Resolves l and nu_ref defaults of a multiplet against the geometry.
MultipletSpec resolve_multiplet(const SphereGeometry& geom,
                                const TaperCoupling& taper, MultipletSpec spec);

/// Air gap g0 + z^2 / (2a) of the linear scan.
double linear_scan_gap(const SphereGeometry& geom, const TaperCoupling& taper,
                       double z);

/// Resonance states of every multiplet member with the taper at height z.
std::vector<ResonanceState> sphere_resonances_at(const SphereGeometry& geom,
                                                 const TaperCoupling& taper,
                                                 const MultipletSpec& multiplet,
                                                 double z);

Waterfall synth_waterfall_linear(const SphereGeometry& geom,
                                 const TaperCoupling& taper,
                                 const MultipletSpec& multiplet,
                                 const ScanPlan& plan, const NoiseModel& noise);

/// Exact taper-to-tube gap |p(theta)| - d/2 for the path
/// p(theta) = (eps_y + rho cos theta, eps_z + rho sin theta).
/// Throws DomainError if the path would cut into the toroid.
double circular_scan_gap(const ToroidGeometry& toroid, double theta);

/// H_q^2(theta/w) exp(-theta^2 / w^2).
double toroid_polar_profile(int q, double width, double theta);

std::vector<ResonanceState> toroid_resonances_at(const ToroidGeometry& toroid,
                                                 const TaperCoupling& taper,
                                                 double theta);

Waterfall synth_waterfall_circular(const ToroidGeometry& toroid,
                                   const TaperCoupling& taper,
                                   const ScanPlan& plan, const NoiseModel& noise);

} // namespace wgm
