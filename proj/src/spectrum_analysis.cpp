#include "wgm/spectrum_analysis.hpp"

#include "wgm/errors.hpp"
#include "wgm/least_squares.hpp"
#include "wgm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace wgm {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

} // namespace

double estimate_baseline(std::span<const double> trace) {
  if (trace.empty()) throw UsageError("empty trace");
  std::vector<double> sorted(trace.begin(), trace.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t from = (3 * sorted.size()) / 4;
  return median_of(std::vector<double>(sorted.begin() + from, sorted.end()));
}

DipDetection detect_dips(std::span<const double> trace, const FrequencyGrid& grid,
                         double min_depth, double window_fwhm) {
  if (trace.empty()) throw UsageError("empty trace");
  if (!(min_depth > 0.0 && min_depth < 1.0))
    throw UsageError("min_depth must lie in (0, 1)");
  if (trace.size() != grid.count) throw UsageError("trace and grid lengths differ");

  DipDetection out;
  out.baseline = estimate_baseline(trace);
  const double threshold = out.baseline * (1.0 - min_depth);
  const std::size_t n = trace.size();

  std::vector<DipCandidate> raw;
  std::size_t i = 0;
  while (i < n) {
    if (!(trace[i] < threshold)) {
      ++i;
      continue;
    }
    std::size_t run_end = i;
    while (run_end < n && trace[run_end] < threshold) ++run_end;
    const auto it = std::min_element(trace.begin() + i, trace.begin() + run_end);
    const std::size_t k = static_cast<std::size_t>(it - trace.begin());

    const double depth = out.baseline - trace[k];
    const double half_level = out.baseline - 0.5 * depth;
    std::size_t left = k;
    while (left > 0 && trace[left - 1] < half_level) --left;
    std::size_t right = k;
    while (right + 1 < n && trace[right + 1] < half_level) ++right;
    const double width_samples = std::max<double>(double(right - left + 1), 2.0);

    const auto half_window =
        static_cast<std::size_t>(std::ceil(window_fwhm * width_samples / 2.0)) + 2;
    DipCandidate c;
    c.min_index = k;
    c.window_begin = k > half_window ? k - half_window : 0;
    c.window_end = std::min(n, k + half_window + 1);
    c.depth_guess = depth / out.baseline;
    c.fwhm_guess = width_samples * grid.step;
    raw.push_back(c);
    i = run_end;
  }

  // Deepest first; drop any candidate within half a window of a deeper one.
  std::sort(raw.begin(), raw.end(), [](const DipCandidate& a, const DipCandidate& b) {
    return a.depth_guess > b.depth_guess;
  });
  for (const auto& c : raw) {
    const double half = 0.5 * double(c.window_end - c.window_begin);
    const bool crowded = std::any_of(
        out.candidates.begin(), out.candidates.end(), [&](const DipCandidate& a) {
          const double half_a = 0.5 * double(a.window_end - a.window_begin);
          return std::abs(double(a.min_index) - double(c.min_index)) <
                 0.5 * std::max(half, half_a);
        });
    if (!crowded) out.candidates.push_back(c);
  }
  std::sort(out.candidates.begin(), out.candidates.end(),
            [](const DipCandidate& a, const DipCandidate& b) {
              return a.min_index < b.min_index;
            });
  return out;
}

DipRecord fit_lorentzian_dip(std::span<const double> trace, const FrequencyGrid& grid,
                             const DipCandidate& candidate, double baseline_guess,
                             double position) {
  const std::size_t begin = candidate.window_begin;
  const std::size_t end = std::min(candidate.window_end, trace.size());
  if (end <= begin + 4) throw UsageError("fit window too short");

  // Parameters: T0, C, center offset and width, the last two in units of the
  // initial width guess around the initial center.
  const double nu_guess = grid.at(candidate.min_index);
  const double gamma_guess = std::max(candidate.fwhm_guess, grid.step);
  const std::size_t m = end - begin;

  auto unpack = [&](const Eigen::VectorXd& p, double& T0, double& C, double& nu0,
                    double& gamma) {
    T0 = p[0];
    C = p[1];
    nu0 = nu_guess + p[2] * gamma_guess;
    gamma = p[3] * gamma_guess;
  };

  LeastSquaresProblem problem;
  problem.residuals = [&](const Eigen::VectorXd& p) {
    double T0, C, nu0, gamma;
    unpack(p, T0, C, nu0, gamma);
    Eigen::VectorXd r(m);
    for (std::size_t j = 0; j < m; ++j) {
      const double nu = grid.at(begin + j);
      r[j] = T0 * (1.0 - C * lorentzian(nu, nu0, gamma)) - trace[begin + j];
    }
    return r;
  };
  problem.jacobian = [&](const Eigen::VectorXd& p) {
    double T0, C, nu0, gamma;
    unpack(p, T0, C, nu0, gamma);
    Eigen::MatrixXd J(m, 4);
    for (std::size_t j = 0; j < m; ++j) {
      const double nu = grid.at(begin + j);
      const double u = 2.0 * (nu - nu0) / gamma;
      const double den = 1.0 + u * u;
      const double L = 1.0 / den;
      const double dL_dnu0 = 4.0 * u / (gamma * den * den);
      const double dL_dgamma = 2.0 * u * u / (gamma * den * den);
      J(j, 0) = 1.0 - C * L;
      J(j, 1) = -T0 * L;
      J(j, 2) = -T0 * C * dL_dnu0 * gamma_guess;
      J(j, 3) = -T0 * C * dL_dgamma * gamma_guess;
    }
    return J;
  };
  problem.project = [](Eigen::VectorXd& p) {
    p[3] = std::max(p[3], 1e-6); // width stays positive
  };

  Eigen::VectorXd init(4);
  init << baseline_guess, std::max(candidate.depth_guess, 0.0), 0.0, 1.0;
  LevenbergMarquardtOptions opts;
  opts.max_iterations = 100;
  opts.cost_tolerance = 1e-15;
  opts.step_tolerance = 1e-12;
  const auto fit = levenberg_marquardt(problem, init, opts);

  DipRecord rec;
  double T0, C, nu0, gamma;
  unpack(fit.parameters, T0, C, nu0, gamma);
  rec.center = nu0;
  rec.fwhm = gamma;
  rec.depth = C;
  rec.area = C * gamma * M_PI / 2.0;
  rec.baseline = T0;
  rec.position = position;
  rec.residual_rms = std::sqrt(2.0 * fit.cost / double(m));
  rec.iterations = fit.iterations;

  const bool inside = nu0 >= grid.at(begin) && nu0 <= grid.at(end - 1);
  const bool sane_width = gamma >= grid.step && gamma <= grid.step * double(m);
  const bool sane_depth = C > 0.0 && C <= 1.0 + 1e-9 && T0 > 0.0;
  const bool significant = C * T0 > 3.0 * rec.residual_rms;
  rec.converged = fit.converged && inside && sane_width && sane_depth && significant;
  return rec;
}

DipRecord fit_fixed_shape_dip(std::span<const double> trace, const FrequencyGrid& grid,
                              double center, double fwhm, std::size_t begin,
                              std::size_t end, double position) {
  end = std::min(end, trace.size());
  if (end <= begin + 2) throw UsageError("fit window too short");
  // T = a + b L with a = T0, b = -T0 C.
  double s1 = 0, sL = 0, sLL = 0, sT = 0, sTL = 0;
  for (std::size_t j = begin; j < end; ++j) {
    const double L = lorentzian(grid.at(j), center, fwhm);
    s1 += 1.0;
    sL += L;
    sLL += L * L;
    sT += trace[j];
    sTL += trace[j] * L;
  }
  const double det = s1 * sLL - sL * sL;
  DipRecord rec;
  rec.center = center;
  rec.fwhm = fwhm;
  rec.position = position;
  if (!(std::abs(det) > 0.0)) return rec;
  const double a = (sLL * sT - sL * sTL) / det;
  const double b = (s1 * sTL - sL * sT) / det;
  double ss = 0.0;
  for (std::size_t j = begin; j < end; ++j) {
    const double r = a + b * lorentzian(grid.at(j), center, fwhm) - trace[j];
    ss += r * r;
  }
  rec.baseline = a;
  rec.depth = a > 0.0 ? -b / a : 0.0;
  rec.area = rec.depth * fwhm * M_PI / 2.0;
  rec.residual_rms = std::sqrt(ss / double(end - begin));
  rec.converged = a > 0.0;
  return rec;
}

std::vector<PositionDips> analyze_positions(const Waterfall& wf, double min_depth,
                                            double window_fwhm) {
  wf.validate();
  std::vector<PositionDips> out(wf.traces.size());
  parallel_for(wf.traces.size(), [&](std::size_t i) {
    const auto& trace = wf.traces[i];
    const auto det = detect_dips(trace, wf.plan.grid, min_depth, window_fwhm);
    PositionDips pd;
    pd.position = wf.plan.positions[i];
    pd.baseline = det.baseline;
    for (const auto& c : det.candidates)
      pd.dips.push_back(
          fit_lorentzian_dip(trace, wf.plan.grid, c, det.baseline, pd.position));
    out[i] = std::move(pd);
  });
  return out;
}

MultipletAssignment label_multiplet(std::span<const double> line_frequencies,
                                    double max_dispersion) {
  const std::size_t n = line_frequencies.size();
  if (n < 3)
    throw AnalysisError("insufficient data: " + std::to_string(n) +
                        " lines, a multiplet needs at least 3");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return line_frequencies[a] > line_frequencies[b];
  });

  std::vector<double> gaps(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k)
    gaps[k] = line_frequencies[order[k]] - line_frequencies[order[k + 1]];
  const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / double(gaps.size());
  double var = 0.0;
  for (double g : gaps) var += (g - mean) * (g - mean);
  var /= double(gaps.size() > 1 ? gaps.size() - 1 : 1);
  const double dispersion = mean > 0.0 ? std::sqrt(var) / mean
                                       : std::numeric_limits<double>::infinity();
  if (!(dispersion <= max_dispersion))
    throw AnalysisError("not a recognizable multiplet: spacing dispersion " +
                        std::to_string(dispersion) + " exceeds " +
                        std::to_string(max_dispersion));

  MultipletAssignment out;
  out.spacing_hat = median_of(gaps);
  out.spacing_dispersion = dispersion;
  out.q_of_line.assign(n, 0);
  out.lines_by_q.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.q_of_line[order[k]] = static_cast<int>(k);
    out.lines_by_q[k] = line_frequencies[order[k]];
  }
  out.q0_frequency = out.lines_by_q.front();
  out.missing_line_frequency = out.q0_frequency + out.spacing_hat;
  return out;
}

std::vector<double> cluster_lines(const std::vector<PositionDips>& positions,
                                  double tolerance, std::size_t min_support) {
  struct Hit {
    double center;
    std::size_t position;
  };
  std::vector<Hit> hits;
  for (std::size_t i = 0; i < positions.size(); ++i)
    for (const auto& d : positions[i].dips)
      if (d.converged) hits.push_back({d.center, i});
  std::sort(hits.begin(), hits.end(),
            [](const Hit& a, const Hit& b) { return a.center < b.center; });

  std::vector<double> lines;
  std::size_t k = 0;
  while (k < hits.size()) {
    std::size_t e = k + 1;
    while (e < hits.size() && hits[e].center - hits[e - 1].center <= tolerance) ++e;
    std::vector<double> centers;
    std::vector<std::size_t> where;
    for (std::size_t j = k; j < e; ++j) {
      centers.push_back(hits[j].center);
      where.push_back(hits[j].position);
    }
    std::sort(where.begin(), where.end());
    const auto support =
        static_cast<std::size_t>(std::unique(where.begin(), where.end()) - where.begin());
    if (support >= std::min(min_support, positions.size()))
      lines.push_back(median_of(centers));
    k = e;
  }
  std::sort(lines.begin(), lines.end(), std::greater<>());
  return lines;
}

std::string_view to_string(ProfileConvention c) {
  return c == ProfileConvention::Loaded ? "loaded" : "intrinsic";
}

ProfileConvention profile_convention_from_string(std::string_view s) {
  if (s == "loaded") return ProfileConvention::Loaded;
  if (s == "intrinsic") return ProfileConvention::Intrinsic;
  throw UsageError("unknown profile convention '" + std::string(s) + "'");
}

std::vector<ProfileSeries> extract_profiles(const Waterfall& wf,
                                            const std::vector<PositionDips>& positions,
                                            std::vector<TrackedLine>& lines,
                                            double track_tolerance,
                                            ProfileConvention convention,
                                            double window_fwhm) {
  const auto& grid = wf.plan.grid;
  const std::size_t np = positions.size();
  std::vector<ProfileSeries> out;
  out.reserve(lines.size());

  for (std::size_t li = 0; li < lines.size(); ++li) {
    auto& line = lines[li];
    std::vector<const DipRecord*> match(np, nullptr);
    double gamma0_hat = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < np; ++i) {
      double best = track_tolerance;
      for (const auto& d : positions[i].dips) {
        if (!d.converged) continue;
        const double dist = std::abs(d.center - line.frequency);
        if (dist <= best) {
          best = dist;
          match[i] = &d;
        }
      }
      if (match[i]) gamma0_hat = std::min(gamma0_hat, match[i]->fwhm);
    }
    if (!std::isfinite(gamma0_hat)) continue;
    line.gamma_intrinsic_hat = gamma0_hat;

    // Window for fixed-shape fits: stay clear of neighbouring lines.
    double half_window = window_fwhm * gamma0_hat;
    for (std::size_t lj = 0; lj < lines.size(); ++lj)
      if (lj != li)
        half_window =
            std::min(half_window, 0.45 * std::abs(lines[lj].frequency - line.frequency));
    const auto index_of = [&](double nu) {
      const double x = std::round((nu - grid.start) / grid.step);
      return static_cast<std::size_t>(std::clamp(x, 0.0, double(grid.count)));
    };
    const std::size_t wb = index_of(line.frequency - half_window);
    const std::size_t we = std::min(grid.count, index_of(line.frequency + half_window) + 1);

    ProfileSeries series;
    series.q = line.q;
    series.line_index = li;
    series.line_frequency = line.frequency;
    std::size_t missing_run = 0;
    for (std::size_t i = 0; i < np; ++i) {
      ProfileSample s;
      s.position = positions[i].position;
      s.gamma_intrinsic_hat = gamma0_hat;
      if (match[i]) {
        s.detected = true;
        s.depth = match[i]->depth;
        s.gamma_loaded = match[i]->fwhm;
        missing_run = 0;
      } else {
        const auto rec = fit_fixed_shape_dip(wf.traces[i], grid, line.frequency,
                                             gamma0_hat, wb, we, s.position);
        s.depth = rec.depth;
        s.gamma_loaded = gamma0_hat;
        ++missing_run;
        if (missing_run == 3) series.gaps.emplace_back(i - 2, i + 1);
        else if (missing_run > 3) series.gaps.back().second = i + 1;
      }
      const double ratio = convention == ProfileConvention::Loaded
                               ? s.gamma_loaded / gamma0_hat
                               : gamma0_hat / s.gamma_loaded;
      s.normalized_area = std::max(0.0, s.depth * ratio);
      series.samples.push_back(s);
    }
    out.push_back(std::move(series));
  }
  return out;
}

AnalysisReport analyze_waterfall(const Waterfall& wf, const AnalysisOptions& options) {
  wf.validate();
  AnalysisReport report;
  report.convention = options.convention;
  report.positions = analyze_positions(wf, options.min_depth, options.window_fwhm);

  std::vector<double> widths;
  for (const auto& p : report.positions)
    for (const auto& d : p.dips)
      if (d.converged) widths.push_back(d.fwhm);
  if (widths.empty()) throw AnalysisError("no resonances detected in the waterfall");
  const double typical_width = median_of(widths);
  const double cluster_tol = std::max(3.0 * typical_width, 3.0 * wf.plan.grid.step);
  const auto freqs = cluster_lines(report.positions, cluster_tol);

  const bool label = options.label_multiplet.value_or(wf.plan.kind == ScanKind::LinearZ);
  report.lines.resize(freqs.size());
  for (std::size_t k = 0; k < freqs.size(); ++k) report.lines[k].frequency = freqs[k];

  if (label) {
    report.multiplet = label_multiplet(freqs, options.max_dispersion);
    for (std::size_t k = 0; k < freqs.size(); ++k)
      report.lines[k].q = report.multiplet->q_of_line[k];
    report.track_tolerance = report.multiplet->spacing_hat / 4.0;
  } else {
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < freqs.size(); ++k)
      min_gap = std::min(min_gap, freqs[k] - freqs[k + 1]);
    report.track_tolerance =
        std::isfinite(min_gap) ? min_gap / 4.0 : 10.0 * typical_width;
  }
  report.profiles = extract_profiles(wf, report.positions, report.lines,
                                     report.track_tolerance, options.convention,
                                     options.window_fwhm);
  return report;
}

NodeCount count_antinodes(std::span<const double> v, double node_fraction,
                          double min_lobe_fraction) {
  NodeCount out;
  const std::size_t n = v.size();
  if (n == 0) return out;
  const double peak = *std::max_element(v.begin(), v.end());
  if (!(peak > 0.0)) return out;
  auto at = [&](std::ptrdiff_t i) {
    return (i < 0 || i >= std::ptrdiff_t(n)) ? 0.0 : v[std::size_t(i)];
  };

  std::vector<std::size_t> lobes;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = v[i];
    if (h < min_lobe_fraction * peak) continue;
    // Plateaus: only the leftmost sample of a flat top is a candidate.
    if (!(h > at(std::ptrdiff_t(i) - 1) && h >= at(std::ptrdiff_t(i) + 1))) continue;
    double left_base = h;
    std::ptrdiff_t j = std::ptrdiff_t(i) - 1;
    for (; j >= -1; --j) {
      const double x = at(j);
      if (x > h) break;
      left_base = std::min(left_base, x);
    }
    double right_base = h;
    for (std::ptrdiff_t k = std::ptrdiff_t(i) + 1; k <= std::ptrdiff_t(n); ++k) {
      const double x = at(k);
      if (x > h) break;
      right_base = std::min(right_base, x);
    }
    const double prominence = h - std::max(left_base, right_base);
    if (prominence >= 0.5 * h) lobes.push_back(i);
  }
  out.antinodes = static_cast<int>(lobes.size());
  for (std::size_t k = 0; k + 1 < lobes.size(); ++k) {
    const double valley =
        *std::min_element(v.begin() + lobes[k], v.begin() + lobes[k + 1] + 1);
    if (valley < node_fraction * peak) ++out.interior_nodes;
  }
  return out;
}

NodeCount count_antinodes(const ProfileSeries& series, double node_fraction,
                          double min_lobe_fraction) {
  std::vector<double> v;
  v.reserve(series.samples.size());
  for (const auto& s : series.samples) v.push_back(s.normalized_area);
  return count_antinodes(v, node_fraction, min_lobe_fraction);
}

} // namespace wgm
