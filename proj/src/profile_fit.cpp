#include "wgm/profile_fit.hpp"

#include "wgm/errors.hpp"
#include "wgm/physics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

namespace wgm {

namespace {

std::size_t index_of_q(const FitModel& model, int q) {
  const auto it = std::find(model.qs.begin(), model.qs.end(), q);
  if (it == model.qs.end())
    throw UsageError("profile series q=" + std::to_string(q) + " is not in the fit model");
  return static_cast<std::size_t>(it - model.qs.begin());
}

// Shape and its derivative with respect to u = (z - z0)/s.
struct Shape {
  double value;
  double d_du;
};

Shape shape_at(const FitModel& m, int q, double u) {
  const double root_l = std::sqrt(double(m.ell));
  const double x = root_l * u / m.a;
  const double b = m.ell / (m.a * m.a) + m.kappa / m.a;
  const double h = hermite_polynomial(q, x);
  const double dh = q == 0 ? 0.0 : 2.0 * q * hermite_polynomial(q - 1, x);
  const double e = std::exp(-b * u * u);
  return {h * h * e, e * (2.0 * h * dh * root_l / m.a - 2.0 * b * u * h * h)};
}

} // namespace

double FitModel::amplitude_for(int q) const { return amplitudes.at(index_of_q(*this, q)); }

double FitModel::length_unit() const { return a / std::sqrt(double(ell)); }

double FitModel::value(int q, double z) const {
  return amplitude_for(q) * shape_at(*this, q, (z - z0) / s).value;
}

void FitModel::validate() const {
  if (ell < 1) throw DomainError("fit model needs l >= 1");
  if (!(a > 0.0)) throw DomainError("fit model needs a > 0");
  if (!(kappa >= 0.0)) throw DomainError("fit model needs kappa >= 0");
  if (!(s > 0.0)) throw DomainError("scale factor s must be positive");
  if (qs.empty()) throw UsageError("fit model has no series");
  if (!amplitudes.empty() && amplitudes.size() != qs.size())
    throw UsageError("amplitude count differs from series count");
  std::set<int> seen(qs.begin(), qs.end());
  if (seen.size() != qs.size()) throw UsageError("duplicate q in fit model");
}

std::vector<ProfilePoint> to_profile_points(const std::vector<ProfileSeries>& series) {
  std::vector<ProfilePoint> out;
  for (const auto& s : series) {
    if (s.q < 0) continue;
    for (const auto& smp : s.samples) out.push_back({s.q, smp.position, smp.normalized_area, 1.0});
  }
  return out;
}

Eigen::VectorXd model_residuals(const FitModel& model, const std::vector<ProfilePoint>& data) {
  Eigen::VectorXd r(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data[i];
    r[i] = std::sqrt(p.weight) * (model.value(p.q, p.z) - p.value);
  }
  return r;
}

Eigen::MatrixXd model_jacobian(const FitModel& model, const std::vector<ProfilePoint>& data) {
  const std::size_t nq = model.qs.size();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(data.size(), nq + 2);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data[i];
    const std::size_t k = index_of_q(model, p.q);
    const double u = (p.z - model.z0) / model.s;
    const auto sh = shape_at(model, p.q, u);
    const double A = model.amplitudes[k];
    const double w = std::sqrt(p.weight);
    J(i, k) = w * sh.value;
    J(i, nq) = w * A * sh.d_du * (-1.0 / model.s);
    J(i, nq + 1) = w * A * sh.d_du * (-u / model.s);
  }
  return J;
}

double estimate_center(const std::vector<ProfilePoint>& data) {
  const bool has_q0 =
      std::any_of(data.begin(), data.end(), [](const ProfilePoint& p) { return p.q == 0; });
  double sw = 0.0, swz = 0.0;
  for (const auto& p : data) {
    if (has_q0 && p.q != 0) continue;
    const double w = std::max(p.value, 0.0);
    sw += w;
    swz += w * p.z;
  }
  return sw > 0.0 ? swz / sw : 0.0;
}

namespace {

std::string parameter_name(const FitModel& m, Eigen::Index col) {
  const auto nq = static_cast<Eigen::Index>(m.qs.size());
  if (col < nq) return "amplitude A_" + std::to_string(m.qs[std::size_t(col)]);
  return col == nq ? "z0" : "s";
}

void linear_amplitudes(FitModel& m, const std::vector<ProfilePoint>& data) {
  std::vector<double> num(m.qs.size(), 0.0), den(m.qs.size(), 0.0);
  for (const auto& p : data) {
    const std::size_t k = index_of_q(m, p.q);
    const double f = shape_at(m, p.q, (p.z - m.z0) / m.s).value;
    num[k] += p.weight * f * p.value;
    den[k] += p.weight * f * f;
  }
  m.amplitudes.resize(m.qs.size());
  for (std::size_t k = 0; k < m.qs.size(); ++k)
    m.amplitudes[k] = den[k] > 0.0 ? std::max(0.0, num[k] / den[k]) : 0.0;
}

void check_identifiable(const FitModel& m, const Eigen::MatrixXd& J) {
  const double scale = J.colwise().norm().maxCoeff();
  for (Eigen::Index c = 0; c < J.cols(); ++c)
    if (!(J.col(c).norm() > 1e-12 * scale) || scale == 0.0)
      throw NumericalError("degenerate Jacobian: parameter " + parameter_name(m, c) +
                           " is not identifiable from the data");
  // Column-normalized rank check.
  Eigen::MatrixXd Jn = J;
  for (Eigen::Index c = 0; c < J.cols(); ++c) Jn.col(c) /= J.col(c).norm();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Jn);
  qr.setThreshold(1e-10);
  if (qr.rank() < J.cols()) {
    const Eigen::Index culprit = qr.colsPermutation().indices()[J.cols() - 1];
    throw NumericalError("degenerate Jacobian: parameter " + parameter_name(m, culprit) +
                         " is not identifiable from the data");
  }
}

struct FitRun {
  FitModel model;
  LeastSquaresResult ls;
};

FitRun run_fit(const std::vector<ProfilePoint>& data, FitModel init,
               const LevenbergMarquardtOptions& solver) {
  const std::size_t nq = init.qs.size();
  const double L = init.length_unit();

  // Internal vector: amplitudes, z0 / L, s.
  auto to_model = [&](const Eigen::VectorXd& p) {
    FitModel m = init;
    m.amplitudes.assign(p.data(), p.data() + nq);
    m.z0 = p[Eigen::Index(nq)] * L;
    m.s = p[Eigen::Index(nq) + 1];
    return m;
  };
  LeastSquaresProblem problem;
  problem.residuals = [&](const Eigen::VectorXd& p) { return model_residuals(to_model(p), data); };
  problem.jacobian = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd J = model_jacobian(to_model(p), data);
    J.col(Eigen::Index(nq)) *= L;
    return J;
  };
  problem.project = [&](Eigen::VectorXd& p) {
    for (std::size_t k = 0; k < nq; ++k) p[Eigen::Index(k)] = std::max(0.0, p[Eigen::Index(k)]);
    p[Eigen::Index(nq) + 1] = std::max(p[Eigen::Index(nq) + 1], 1e-6);
  };

  Eigen::VectorXd x(nq + 2);
  for (std::size_t k = 0; k < nq; ++k) x[Eigen::Index(k)] = init.amplitudes[k];
  x[Eigen::Index(nq)] = init.z0 / L;
  x[Eigen::Index(nq) + 1] = init.s;
  auto ls = levenberg_marquardt(problem, x, solver);
  return {to_model(ls.parameters), std::move(ls)};
}

} // namespace

FitResult global_fit(const std::vector<ProfilePoint>& data_in, FitModel init,
                     const FitOptions& options) {
  init.validate();
  if (data_in.empty()) throw UsageError("no profile data to fit");
  if (!(init.s >= 0.3 && init.s <= 3.0))
    throw UsageError("initial scale factor must lie in [0.3, 3]");
  for (const auto& p : data_in) (void)index_of_q(init, p.q);

  FitResult result;
  std::set<int> present;
  for (const auto& p : data_in) present.insert(p.q);
  if (present.size() < 2)
    result.warnings.push_back("only one q series: the scale factor and the mode width are "
                              "degenerate, s is fixed by the assumed l, a and kappa only");
  if (!present.count(0)) result.warnings.push_back("no q = 0 series in the data");

  std::vector<ProfilePoint> data = data_in;
  if (init.amplitudes.empty() ||
      std::all_of(init.amplitudes.begin(), init.amplitudes.end(),
                  [](double a) { return !(a > 0.0); }))
    linear_amplitudes(init, data);
  check_identifiable(init, model_jacobian(init, data));

  auto run = run_fit(data, init, options.solver);

  if (options.inverse_variance_weighting) {
    const Eigen::VectorXd r = model_residuals(run.model, data);
    std::map<int, std::pair<double, std::size_t>> acc;
    for (std::size_t i = 0; i < data.size(); ++i) {
      acc[data[i].q].first += r[Eigen::Index(i)] * r[Eigen::Index(i)];
      acc[data[i].q].second += 1;
    }
    for (auto& p : data) {
      const auto [ss, n] = acc[p.q];
      const double var = ss / double(n);
      p.weight = var > 0.0 ? 1.0 / var : 1.0;
    }
    run = run_fit(data, run.model, options.solver);
  }

  result.model = run.model;
  result.cost = run.ls.cost;
  result.iterations = run.ls.iterations;
  result.final_step_norm = run.ls.final_step_norm;
  result.converged = run.ls.converged;
  result.log = run.ls.log;

  const Eigen::MatrixXd J = model_jacobian(result.model, data);
  check_identifiable(result.model, J);
  const auto P = J.cols();
  const auto N = J.rows();
  const std::size_t nq = result.model.qs.size();
  result.amplitude_sigma.assign(nq, 0.0);
  if (N > P) {
    const double sigma2 = 2.0 * result.cost / double(N - P);
    const Eigen::MatrixXd cov =
        sigma2 * (J.transpose() * J).ldlt().solve(Eigen::MatrixXd::Identity(P, P));
    for (std::size_t k = 0; k < nq; ++k)
      result.amplitude_sigma[k] = std::sqrt(std::max(0.0, cov(Eigen::Index(k), Eigen::Index(k))));
    result.z0_sigma = std::sqrt(std::max(0.0, cov(P - 2, P - 2)));
    result.s_sigma = std::sqrt(std::max(0.0, cov(P - 1, P - 1)));
  } else {
    result.warnings.push_back("no residual degrees of freedom: uncertainties unavailable");
  }

  const Eigen::VectorXd r = model_residuals(result.model, data_in);
  std::vector<double> ss(nq, 0.0);
  std::vector<std::size_t> cnt(nq, 0);
  for (std::size_t i = 0; i < data_in.size(); ++i) {
    const std::size_t k = index_of_q(result.model, data_in[i].q);
    ss[k] += r[Eigen::Index(i)] * r[Eigen::Index(i)];
    cnt[k] += 1;
  }
  result.residual_rms.resize(nq);
  for (std::size_t k = 0; k < nq; ++k)
    result.residual_rms[k] = cnt[k] ? std::sqrt(ss[k] / double(cnt[k])) : 0.0;
  return result;
}

std::vector<ProfileSeries> synth_profiles(const FitModel& truth,
                                          const std::vector<double>& positions,
                                          double relative_noise, std::uint64_t seed) {
  truth.validate();
  if (truth.amplitudes.size() != truth.qs.size())
    throw UsageError("synthetic profiles need one amplitude per q");
  if (relative_noise < 0.0) throw UsageError("noise level must be non-negative");
  if (positions.empty()) throw UsageError("no positions");
  std::vector<ProfileSeries> out;
  for (std::size_t k = 0; k < truth.qs.size(); ++k) {
    const int q = truth.qs[k];
    ProfileSeries s;
    s.q = q;
    s.line_index = k;
    double peak = 0.0;
    for (double z : positions) {
      ProfileSample p;
      p.position = z;
      p.normalized_area = truth.value(q, z);
      p.detected = true;
      peak = std::max(peak, p.normalized_area);
      s.samples.push_back(p);
    }
    if (relative_noise > 0.0) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(q), 0u};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> gauss(0.0, relative_noise * peak);
      for (auto& p : s.samples) p.normalized_area += gauss(rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

ScaleFactorReport scale_factor_report(const FitResult& result,
                                      std::optional<double> oracle_prediction) {
  ScaleFactorReport rep;
  rep.s = result.model.s;
  rep.sigma = result.s_sigma;
  rep.reliable = result.converged;
  rep.oracle_prediction = oracle_prediction;
  auto agrees = [&](double ref) {
    return std::abs(rep.s - ref) <= std::max(2.0 * rep.sigma, 0.02 * ref);
  };
  rep.consistent_with_thin_taper = agrees(1.0);
  if (oracle_prediction) rep.consistent_with_oracle = agrees(*oracle_prediction);

  if (!rep.reliable) {
    rep.classification = "unreliable: fit did not converge";
  } else if (rep.consistent_with_thin_taper) {
    rep.classification = "consistent with thin-taper theory";
  } else if (rep.consistent_with_oracle) {
    rep.classification = "consistent with finite-taper overlap";
  } else if (oracle_prediction) {
    rep.classification = "inconsistent with both thin-taper theory and the overlap prediction";
  } else {
    rep.classification = "inconsistent with thin-taper theory";
  }
  return rep;
}

} // namespace wgm
