#pragma once

// Global fit of per-q excitation profiles to the Hermite-Gauss model
//
//   P_q(z) = A_q H_q^2(sqrt(l) u / a) exp[-(l/a^2 + kappa/a) u^2],  u = (z - z0) / s
//
// with one amplitude per q and a single horizontal scale s shared by all
// series. s = 1 is the thin-taper prediction.

#include "wgm/least_squares.hpp"
#include "wgm/spectrum_analysis.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace wgm {

struct FitModel {
  int ell = 0;
  double a = 0.0;     // m
  double kappa = 0.0; // 1/m
  std::vector<int> qs;            // one entry per fitted series
  std::vector<double> amplitudes; // aligned with qs; empty: estimate linearly
  double z0 = 0.0;                // m
  double s = 1.0;

  double value(int q, double z) const;
  double amplitude_for(int q) const;
  /// Natural length a / sqrt(l) of the Hermite argument.
  double length_unit() const;
  void validate() const;
};

/// One observation: profile value of series q at position z.
struct ProfilePoint {
  int q = 0;
  double z = 0.0;
  double value = 0.0;
  double weight = 1.0;
};

/// Flattens profile series into fit points. Series without a q label are skipped.
std::vector<ProfilePoint> to_profile_points(const std::vector<ProfileSeries>& series);

/// residual_i = model(z_i; q_i) - value_i (times sqrt(weight_i)).
Eigen::VectorXd model_residuals(const FitModel& model, const std::vector<ProfilePoint>& data);

/// Columns: A_q in model.qs order, then z0 (m), then s.
Eigen::MatrixXd model_jacobian(const FitModel& model, const std::vector<ProfilePoint>& data);

struct FitOptions {
  LevenbergMarquardtOptions solver;
  bool inverse_variance_weighting = false;
};

struct FitResult {
  FitModel model;
  std::vector<double> amplitude_sigma; // aligned with model.qs
  double z0_sigma = 0.0;
  double s_sigma = 0.0;
  std::vector<double> residual_rms; // aligned with model.qs
  double cost = 0.0;
  int iterations = 0;
  double final_step_norm = 0.0;
  bool converged = false;
  std::vector<IterationRecord> log;
  std::vector<std::string> warnings;

  double scale_factor() const { return model.s; }
};

/// Damped least squares from `init`. Amplitudes are kept non-negative by
/// projection. If init.amplitudes is empty they are first solved linearly at
/// the initial (z0, s). Throws NumericalError naming the parameter when the
/// Jacobian has a zero or dependent column.
FitResult global_fit(const std::vector<ProfilePoint>& data, FitModel init,
                     const FitOptions& options = {});

/// Model profiles of `truth` sampled at `positions`, one series per q, with
/// additive Gaussian noise of standard deviation relative_noise * series peak.
/// Each q draws from its own seeded substream.
std::vector<ProfileSeries> synth_profiles(const FitModel& truth,
                                          const std::vector<double>& positions,
                                          double relative_noise, std::uint64_t seed);

/// Centroid of the q = 0 series (or of all data without q = 0); a start value for z0.
double estimate_center(const std::vector<ProfilePoint>& data);

struct ScaleFactorReport {
  double s = 0.0;
  double sigma = 0.0;
  bool reliable = false;
  bool consistent_with_thin_taper = false;
  std::optional<double> oracle_prediction;
  bool consistent_with_oracle = false;
  std::string classification;
};

/// Compares the fitted scale with the thin-taper value 1 and, if given, with
/// the overlap-model prediction. Agreement means |s - ref| <= max(2 sigma, 0.02 ref).
ScaleFactorReport scale_factor_report(const FitResult& result,
                                      std::optional<double> oracle_prediction = {});

} // namespace wgm
