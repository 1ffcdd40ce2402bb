#include "wgm/scan_synth.hpp"

#include "wgm/errors.hpp"
#include "wgm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace wgm {

std::string_view to_string(ScanKind kind) {
  return kind == ScanKind::LinearZ ? "linear_z" : "circular_theta";
}

ScanKind scan_kind_from_string(std::string_view s) {
  if (s == "linear_z") return ScanKind::LinearZ;
  if (s == "circular_theta") return ScanKind::CircularTheta;
  throw UsageError("unknown scan kind '" + std::string(s) + "'");
}

std::vector<double> FrequencyGrid::values() const {
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = at(i);
  return v;
}

void FrequencyGrid::validate() const {
  if (count < 2) throw UsageError("frequency grid needs at least two samples");
  if (!(step > 0.0)) throw UsageError("frequency grid must be ascending");
  if (!std::isfinite(start)) throw UsageError("frequency grid start is not finite");
}

void ScanPlan::validate() const {
  if (positions.empty()) throw UsageError("scan plan has no positions");
  if (positions.size() > 1) {
    const bool up = positions[1] > positions[0];
    for (std::size_t i = 1; i < positions.size(); ++i) {
      if (up ? !(positions[i] > positions[i - 1]) : !(positions[i] < positions[i - 1]))
        throw UsageError("scan positions must be strictly monotone");
    }
  }
  grid.validate();
  if (!(T0 > 0.0)) throw UsageError("baseline transmission T0 must be positive");
}

void ToroidGeometry::validate() const {
  if (!(minor_diameter > 0.0)) throw DomainError("minor diameter must be positive");
  if (!(scan_radius > minor_diameter / 2.0))
    throw DomainError("scan radius must exceed the minor radius");
  for (const auto& m : modes) {
    if (!(m.polar_width > 0.0)) throw DomainError("toroid mode width must be positive");
    if (m.q < 0) throw DomainError("toroid mode q must be non-negative");
    if (!(m.gamma0 > 0.0) || !(m.gammaC0 >= 0.0))
      throw DomainError("toroid mode linewidths must be positive");
  }
}

void Waterfall::validate() const {
  plan.validate();
  if (traces.size() != plan.positions.size())
    throw UsageError("trace count differs from position count");
  for (const auto& t : traces)
    if (t.size() != plan.grid.count)
      throw UsageError("trace length differs from frequency grid length");
}

double lorentzian(double nu, double center, double fwhm) {
  const double u = 2.0 * (nu - center) / fwhm;
  return 1.0 / (1.0 + u * u);
}

std::vector<double> synth_spectrum(std::span<const ResonanceState> modes,
                                   const FrequencyGrid& grid, double T0) {
  for (const auto& m : modes)
    if (!(m.gamma_loaded > 0.0)) throw DomainError("loaded linewidth must be positive");
  std::vector<double> trace(grid.count, T0);
  for (std::size_t i = 0; i < grid.count; ++i) {
    const double nu = grid.at(i);
    double t = T0;
    for (const auto& m : modes)
      t *= 1.0 - m.dip_depth * lorentzian(nu, m.frequency, m.gamma_loaded);
    trace[i] = t;
  }
  return trace;
}

MultipletSpec resolve_multiplet(const SphereGeometry& geom,
                                const TaperCoupling& taper, MultipletSpec spec) {
  if (spec.nu_ref <= 0.0) spec.nu_ref = kSpeedOfLight / taper.wavelength;
  if (spec.ell <= 0) spec.ell = estimate_ell(geom, taper.wavelength);
  if (spec.q_max < 0 || spec.q_max >= spec.ell)
    throw DomainError("q_max must lie in [0, l)");
  return spec;
}

double linear_scan_gap(const SphereGeometry& geom, const TaperCoupling& taper,
                       double z) {
  return taper.gap_g0 + z * z / (2.0 * geom.radius);
}

std::vector<ResonanceState> sphere_resonances_at(const SphereGeometry& geom,
                                                 const TaperCoupling& taper,
                                                 const MultipletSpec& multiplet,
                                                 double z) {
  const auto lines =
      multiplet_frequencies(geom, multiplet.ell, multiplet.nu_ref, multiplet.q_max);
  const double gap = linear_scan_gap(geom, taper, z);
  // Elevation of the taper above the equator along the meridian arc.
  const double elevation = z / geom.radius;
  std::vector<ResonanceState> out;
  out.reserve(lines.size());
  for (const auto& line : lines) {
    const auto mode =
        ModeId::from_q(multiplet.ell, line.q, multiplet.n, multiplet.polarization);
    const auto c = coupling_efficiency_at_elevation(mode, taper, gap, elevation);
    out.push_back({mode, line.frequency, taper.gamma0, c.gamma_loaded, c.dip_depth});
  }
  return out;
}

namespace {

void add_noise(std::vector<double>& trace, const NoiseModel& noise,
               std::size_t position_index, double T0) {
  if (noise.sigma_T <= 0.0) return;
  std::seed_seq seq{static_cast<std::uint32_t>(noise.seed),
                    static_cast<std::uint32_t>(noise.seed >> 32),
                    static_cast<std::uint32_t>(position_index),
                    static_cast<std::uint32_t>(std::uint64_t(position_index) >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, noise.sigma_T);
  const double hi = T0 * (1.0 + 5.0 * noise.sigma_T);
  for (double& v : trace) v = std::clamp(v + T0 * gauss(rng), 0.0, hi);
}

} // namespace

Waterfall synth_waterfall_linear(const SphereGeometry& geom,
                                 const TaperCoupling& taper,
                                 const MultipletSpec& multiplet,
                                 const ScanPlan& plan, const NoiseModel& noise) {
  if (plan.kind != ScanKind::LinearZ)
    throw UsageError("linear waterfall requires a linear_z scan plan");
  plan.validate();
  geom.validate();
  taper.validate();
  if (noise.sigma_T < 0.0) throw UsageError("noise sigma must be non-negative");
  const auto spec = resolve_multiplet(geom, taper, multiplet);

  Waterfall wf{plan, {}, SphereSetup{geom, taper, spec}, noise};
  wf.traces.resize(plan.positions.size());
  parallel_for(plan.positions.size(), [&](std::size_t i) {
    const auto modes = sphere_resonances_at(geom, taper, spec, plan.positions[i]);
    auto trace = synth_spectrum(modes, plan.grid, plan.T0);
    add_noise(trace, noise, i, plan.T0);
    wf.traces[i] = std::move(trace);
  });
  return wf;
}

double circular_scan_gap(const ToroidGeometry& toroid, double theta) {
  const double py = toroid.offset_y + toroid.scan_radius * std::cos(theta);
  const double pz = toroid.offset_z + toroid.scan_radius * std::sin(theta);
  const double gap = std::hypot(py, pz) - toroid.minor_diameter / 2.0;
  if (gap < 0.0)
    throw DomainError("taper path intersects the toroid at theta=" +
                      std::to_string(theta));
  return gap;
}

double toroid_polar_profile(int q, double width, double theta) {
  const double x = theta / width;
  const double h = hermite_polynomial(q, x);
  return h * h * std::exp(-x * x);
}

std::vector<ResonanceState> toroid_resonances_at(const ToroidGeometry& toroid,
                                                 const TaperCoupling& taper,
                                                 double theta) {
  const double nu_ref = toroid.reference_frequency > 0.0
                            ? toroid.reference_frequency
                            : kSpeedOfLight / taper.wavelength;
  const double gap = circular_scan_gap(toroid, theta);
  const double decay = std::exp(-2.0 * taper.kappa * gap);
  std::vector<ResonanceState> out;
  out.reserve(toroid.modes.size());
  for (std::size_t k = 0; k < toroid.modes.size(); ++k) {
    const auto& tm = toroid.modes[k];
    const double gamma_c =
        tm.gammaC0 * toroid_polar_profile(tm.q, tm.polar_width, theta) * decay;
    ModeId id{static_cast<int>(k) + 1, 0, 0, tm.q, Polarization::TE};
    out.push_back({id, nu_ref + tm.frequency_offset, tm.gamma0, tm.gamma0 + gamma_c,
                   dip_depth_from_rates(tm.gamma0, gamma_c)});
  }
  return out;
}

Waterfall synth_waterfall_circular(const ToroidGeometry& toroid,
                                   const TaperCoupling& taper,
                                   const ScanPlan& plan, const NoiseModel& noise) {
  if (plan.kind != ScanKind::CircularTheta)
    throw UsageError("circular waterfall requires a circular_theta scan plan");
  plan.validate();
  toroid.validate();
  if (!(taper.kappa > 0.0)) throw DomainError("kappa must be positive");
  if (noise.sigma_T < 0.0) throw UsageError("noise sigma must be non-negative");
  for (double th : plan.positions)
    if (th < -M_PI / 2.0 - 1e-12 || th > M_PI / 2.0 + 1e-12)
      throw UsageError("circular scan positions must lie in [-pi/2, pi/2]");

  Waterfall wf{plan, {}, ToroidSetup{toroid, taper}, noise};
  wf.traces.resize(plan.positions.size());
  parallel_for(plan.positions.size(), [&](std::size_t i) {
    const auto modes = toroid_resonances_at(toroid, taper, plan.positions[i]);
    auto trace = synth_spectrum(modes, plan.grid, plan.T0);
    add_noise(trace, noise, i, plan.T0);
    wf.traces[i] = std::move(trace);
  });
  return wf;
}

} // namespace wgm
