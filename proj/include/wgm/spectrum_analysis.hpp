#pragma once

// Inverse pipeline: find transmission dips, fit Lorentzians, label the
// ellipticity multiplet and turn the waterfall into per-line profiles.

#include "wgm/scan_synth.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace wgm {

struct DipCandidate {
  std::size_t min_index = 0;
  std::size_t window_begin = 0; // inclusive
  std::size_t window_end = 0;   // exclusive
  double depth_guess = 0.0;
  double fwhm_guess = 0.0; // Hz
};

struct DipDetection {
  double baseline = 0.0; // T0 estimate
  std::vector<DipCandidate> candidates;
};

struct DipRecord {
  double center = 0.0;       // Hz
  double fwhm = 0.0;         // Hz
  double depth = 0.0;        // C
  double area = 0.0;         // depth * fwhm * pi / 2, Hz
  double baseline = 0.0;     // fitted T0
  double position = 0.0;     // scan coordinate
  double residual_rms = 0.0; // transmission units
  int iterations = 0;
  bool converged = false;
};

/// Median of the upper transmission quartile.
double estimate_baseline(std::span<const double> trace);

/// Local minima below T0 (1 - min_depth), one per dip, each with a fit
/// window of `window_fwhm` estimated half-widths on either side.
DipDetection detect_dips(std::span<const double> trace, const FrequencyGrid& grid,
                         double min_depth, double window_fwhm = 5.0);

/// Least-squares fit of T0 (1 - C L(nu; nu0, gamma)) over the candidate
/// window. A fit that does not settle on a genuine dip comes back with
/// converged == false rather than throwing.
DipRecord fit_lorentzian_dip(std::span<const double> trace, const FrequencyGrid& grid,
                             const DipCandidate& candidate, double baseline_guess,
                             double position = 0.0);

/// Depth-only fit with the center and width held fixed: a linear least-squares
/// estimate of (T0, C) over [begin, end). Used to measure a known line at
/// positions where it is too weak to be detected.
DipRecord fit_fixed_shape_dip(std::span<const double> trace, const FrequencyGrid& grid,
                              double center, double fwhm, std::size_t begin,
                              std::size_t end, double position = 0.0);

struct PositionDips {
  double position = 0.0;
  double baseline = 0.0;
  std::vector<DipRecord> dips;
};

std::vector<PositionDips> analyze_positions(const Waterfall& wf, double min_depth,
                                            double window_fwhm = 5.0);

struct MultipletAssignment {
  std::vector<int> q_of_line;          // aligned with the input line order
  std::vector<double> lines_by_q;      // frequencies, index = q
  double spacing_hat = 0.0;            // Hz, median adjacent gap
  double spacing_dispersion = 0.0;     // sample std / mean of adjacent gaps
  double q0_frequency = 0.0;           // highest line
  double missing_line_frequency = 0.0; // one spacing above q = 0, where no line exists
};

/// Labels a prolate multiplet. The line one spacing above the highest
/// detected line is absent, so the highest line is q = 0 and the rest follow
/// in decreasing frequency. Throws AnalysisError for fewer than three lines
/// or a spacing dispersion above `max_dispersion`.
MultipletAssignment label_multiplet(std::span<const double> line_frequencies,
                                    double max_dispersion = 0.2);

/// Groups dip centers across positions into lines (single linkage with
/// tolerance `tolerance`; at least `min_support` positions per line).
/// Returned frequencies are cluster medians, descending.
std::vector<double> cluster_lines(const std::vector<PositionDips>& positions,
                                  double tolerance, std::size_t min_support = 2);

enum class ProfileConvention {
  Loaded,    // C * gamma_L / gamma_0, proportional to the coupling geometry factor
  Intrinsic, // C * gamma_0 / gamma_L
};

std::string_view to_string(ProfileConvention c);
ProfileConvention profile_convention_from_string(std::string_view s);

struct ProfileSample {
  double position = 0.0;
  double normalized_area = 0.0;
  double gamma_loaded = 0.0;
  double gamma_intrinsic_hat = 0.0;
  double depth = 0.0;
  bool detected = false; // false: measured by a fixed-shape fit at the line frequency
};

struct ProfileSeries {
  int q = -1; // -1 when the line carries no multiplet label
  std::size_t line_index = 0;
  double line_frequency = 0.0;
  std::vector<ProfileSample> samples;
  // Runs [begin, end) of more than two consecutive positions without a detection.
  std::vector<std::pair<std::size_t, std::size_t>> gaps;
};

struct TrackedLine {
  double frequency = 0.0;
  int q = -1;
  double gamma_intrinsic_hat = 0.0;
};

/// Builds one profile per line. A position's dip belongs to a line when its
/// center lies within `track_tolerance`; positions without one are measured
/// with a fixed-shape fit at the line frequency and intrinsic width.
std::vector<ProfileSeries> extract_profiles(const Waterfall& wf,
                                            const std::vector<PositionDips>& positions,
                                            std::vector<TrackedLine>& lines,
                                            double track_tolerance,
                                            ProfileConvention convention,
                                            double window_fwhm = 5.0);

struct AnalysisOptions {
  double min_depth = 0.03;
  double window_fwhm = 5.0;
  double max_dispersion = 0.2;
  ProfileConvention convention = ProfileConvention::Loaded;
  // Multiplet labeling runs for linear (sphere) scans; toroid lines are left unlabeled.
  std::optional<bool> label_multiplet;
};

struct AnalysisReport {
  std::vector<PositionDips> positions;
  std::optional<MultipletAssignment> multiplet;
  std::vector<TrackedLine> lines;
  std::vector<ProfileSeries> profiles;
  ProfileConvention convention = ProfileConvention::Loaded;
  double track_tolerance = 0.0;
};

AnalysisReport analyze_waterfall(const Waterfall& wf, const AnalysisOptions& options = {});

struct NodeCount {
  int antinodes = 0;
  int interior_nodes = 0; // minima between adjacent antinodes below node_fraction * peak
};

/// Counts lobes of a profile. A local maximum is an antinode when it reaches
/// `min_lobe_fraction` of the global peak and its prominence is at least half
/// its height (profile ends count as zero).
NodeCount count_antinodes(std::span<const double> values, double node_fraction = 0.2,
                          double min_lobe_fraction = 0.01);
NodeCount count_antinodes(const ProfileSeries& series, double node_fraction = 0.2,
                          double min_lobe_fraction = 0.01);

} // namespace wgm
