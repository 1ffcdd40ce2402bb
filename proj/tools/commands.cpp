#include "commands.hpp"

#include "wgm/errors.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

namespace wgm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
T get(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw SchemaError(std::string("config: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: bad field '") + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return get<T>(j, key);
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw SchemaError(std::string("config: '") + key + "' must be an object");
  return j.at(key);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

ConfigKind kind_from_string(const std::string& s) {
  if (s == "sphere") return ConfigKind::Sphere;
  if (s == "toroid") return ConfigKind::Toroid;
  if (s == "profiles") return ConfigKind::Profiles;
  if (s == "oracle") return ConfigKind::Oracle;
  throw SchemaError("config: unknown kind '" + s + "'");
}

std::vector<double> parse_positions(const json& scan) {
  if (scan.contains("positions")) return get<std::vector<double>>(scan, "positions");
  const auto count = get<std::size_t>(scan, "count");
  if (count < 1) throw SchemaError("config: scan count must be positive");
  return linspace(get<double>(scan, "from"), get<double>(scan, "to"), count);
}

// Frequencies the grid has to cover, for the automatic and offset forms.
std::vector<double> line_frequencies(const RunConfig& c) {
  std::vector<double> f;
  if (c.kind == ConfigKind::Sphere) {
    for (const auto& l : multiplet_frequencies(c.sphere, c.multiplet.ell, c.multiplet.nu_ref,
                                               c.multiplet.q_max))
      f.push_back(l.frequency);
  } else {
    const double ref = c.toroid.reference_frequency > 0.0 ? c.toroid.reference_frequency
                                                          : kSpeedOfLight / c.taper.wavelength;
    for (const auto& m : c.toroid.modes) f.push_back(ref + m.frequency_offset);
  }
  return f;
}

double reference_frequency(const RunConfig& c) {
  if (c.kind == ConfigKind::Sphere) return c.multiplet.nu_ref;
  return c.toroid.reference_frequency > 0.0 ? c.toroid.reference_frequency
                                            : kSpeedOfLight / c.taper.wavelength;
}

FrequencyGrid parse_grid(const json& g, const RunConfig& c) {
  FrequencyGrid grid;
  grid.step = get<double>(g, "step_hz");
  if (!(grid.step > 0.0)) throw SchemaError("config: step_hz must be positive");
  if (g.contains("start_hz")) {
    grid.start = get<double>(g, "start_hz");
    grid.count = get<std::size_t>(g, "count");
    return grid;
  }
  double lo = 0.0, hi = 0.0;
  if (g.contains("start_offset_hz")) {
    const double ref = reference_frequency(c);
    lo = ref + get<double>(g, "start_offset_hz");
    hi = ref + get<double>(g, "stop_offset_hz");
  } else {
    const auto f = line_frequencies(c);
    if (f.empty()) throw SchemaError("config: no resonances to place the frequency grid around");
    const double margin = get<double>(g, "margin_hz");
    lo = *std::min_element(f.begin(), f.end()) - margin;
    hi = *std::max_element(f.begin(), f.end()) + margin;
  }
  if (!(hi > lo)) throw SchemaError("config: empty frequency window");
  grid.start = lo;
  grid.count = static_cast<std::size_t>(std::floor((hi - lo) / grid.step)) + 1;
  return grid;
}

FitGeometry parse_fit_geometry(const json& g) {
  return {get<int>(g, "ell"), get<double>(g, "a_m"), get<double>(g, "kappa_per_m")};
}

ProfileBundle bundle_from_document(const json& j) {
  const auto artifact = get<std::string>(j, "artifact");
  if (artifact == "profiles") return profiles_from_json(j);
  if (artifact == "analysis") {
    expect_artifact(j, "analysis");
    json p = {{"artifact", "profiles"},
              {"schema_version", kSchemaVersion},
              {"convention", j.value("convention", "loaded")},
              {"fit_geometry", j.value("fit_geometry", json(nullptr))},
              {"series", get<json>(j, "profiles")}};
    return profiles_from_json(p);
  }
  throw SchemaError("expected a profiles or analysis file, got '" + artifact + "'");
}

fs::path output_dir(const Invocation& inv, const std::optional<RunConfig>& cfg) {
  if (inv.out) return *inv.out;
  if (cfg) return cfg->output_dir;
  return ".";
}

std::string series_name(const ProfileSeries& s) {
  return s.q >= 0 ? "profile_q" + std::to_string(s.q) : "profile_line" + std::to_string(s.line_index);
}

void write_profile_files(const ProfileBundle& bundle, const fs::path& dir) {
  write_text_file(dir / "profiles.json", profiles_to_json(bundle).dump(2) + "\n");
  for (const auto& s : bundle.series) write_text_file(dir / (series_name(s) + ".csv"), profile_csv(s));
}

std::string dips_csv(const AnalysisReport& report) {
  std::string out = "position,center_hz,fwhm_hz,depth_C,area_hz,baseline_T0,residual_rms,converged\n";
  for (const auto& p : report.positions)
    for (const auto& d : p.dips)
      out += format_double(p.position) + ',' + format_double(d.center) + ',' +
             format_double(d.fwhm) + ',' + format_double(d.depth) + ',' + format_double(d.area) +
             ',' + format_double(d.baseline) + ',' + format_double(d.residual_rms) + ',' +
             (d.converged ? "1" : "0") + '\n';
  return out;
}

RunConfig require_config(const Invocation& inv) {
  if (!inv.config) throw UsageError(inv.command + " needs --config");
  auto cfg = load_run_config(*inv.config);
  if (inv.seed) cfg.noise.seed = *inv.seed;
  if (inv.convention) cfg.analysis.convention = *inv.convention;
  return cfg;
}

std::optional<RunConfig> optional_config(const Invocation& inv) {
  if (!inv.config) return std::nullopt;
  return require_config(inv);
}

int cmd_synth(const Invocation& inv, std::ostream& out) {
  const auto cfg = require_config(inv);
  const fs::path dir = output_dir(inv, cfg);
  if (cfg.kind == ConfigKind::Oracle) throw UsageError("oracle configs are run with the oracle command");
  if (cfg.kind == ConfigKind::Profiles) {
    const auto bundle = synthesize_profiles(cfg);
    write_profile_files(bundle, dir);
    out << "synth: " << bundle.series.size() << " profile series, s = " << cfg.profiles.s
        << ", written to " << (dir / "profiles.json").string() << "\n";
    return kOk;
  }
  const auto wf = synthesize(cfg);
  const fs::path path = dir / "waterfall.json";
  write_waterfall(wf, path);
  out << "synth: " << wf.plan.positions.size() << " positions x " << wf.plan.grid.count
      << " samples, " << line_frequencies(cfg).size() << " resonances, written to "
      << path.string() << "\n";
  return kOk;
}

int cmd_analyze(const Invocation& inv, std::ostream& out) {
  if (!inv.input) throw UsageError("analyze needs a waterfall file");
  const auto cfg = optional_config(inv);
  AnalysisOptions opts = cfg ? cfg->analysis : AnalysisOptions{};
  if (inv.convention) opts.convention = *inv.convention;

  const auto wf = read_waterfall(*inv.input);
  const auto report = analyze_waterfall(wf, opts);
  const auto geometry = fit_geometry_of(wf);
  const fs::path dir = output_dir(inv, cfg);
  write_text_file(dir / "analysis.json", analysis_to_json(report, geometry).dump(2) + "\n");
  write_text_file(dir / "dips.csv", dips_csv(report));
  write_profile_files({geometry, report.convention, report.profiles}, dir);

  out << "analyze: " << report.lines.size() << " lines";
  if (report.multiplet) {
    const auto& m = *report.multiplet;
    out << ", q = 0.." << m.lines_by_q.size() - 1 << ", spacing "
        << fmt("%.4f", m.spacing_hat / 1e9) << " GHz (dispersion "
        << fmt("%.4f", m.spacing_dispersion) << ")";
  } else {
    out << " (unlabeled)";
  }
  out << "\n";
  return kOk;
}

int cmd_fit(const Invocation& inv, std::ostream& out, std::ostream& err) {
  if (!inv.input) throw UsageError("fit needs a profiles file");
  const auto cfg = optional_config(inv);
  const FitSettings settings = cfg ? cfg->fit : FitSettings{};
  const auto bundle = bundle_from_document(read_json_file(*inv.input));
  const auto result = fit_bundle(bundle, settings);
  const auto report = scale_factor_report(result, settings.oracle_prediction);

  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& s : bundle.series)
    for (const auto& p : s.samples) {
      lo = first ? p.position : std::min(lo, p.position);
      hi = first ? p.position : std::max(hi, p.position);
      first = false;
    }
  json doc = fit_to_json(result, report);
  doc["data_range_m"] = {lo, hi};
  const fs::path dir = output_dir(inv, cfg);
  write_text_file(dir / "fit.json", doc.dump(2) + "\n");
  write_text_file(dir / "fitted_curves.csv",
                  fitted_curves_csv(result.model, lo, hi, std::max<std::size_t>(settings.curve_points, 2)));

  for (const auto& w : result.warnings) err << "warning: " << w << "\n";
  out << "fit: s = " << fmt("%.5f", result.model.s) << " +/- " << fmt("%.5f", result.s_sigma)
      << " (" << report.classification << "), " << result.iterations << " iterations\n";
  if (!result.converged) {
    err << "error: fit did not converge; best-so-far parameters written with non_converged\n";
    return kFitNotConverged;
  }
  return kOk;
}

int cmd_oracle(const Invocation& inv, std::ostream& out) {
  const auto cfg = require_config(inv);
  const auto base = oracle_config(cfg);
  const auto& o = cfg.oracle;
  std::vector<double> waists;
  if (o.thin_limit_row) waists.push_back(1.0 / (100.0 * base.kappa));
  for (double w : linspace(o.waist_from, o.waist_to, o.waist_count)) waists.push_back(w);
  const auto z_grid = linspace(o.z_from, o.z_to, o.z_count);
  const auto rows = sweep_scale_factor(base, waists, o.q_max, z_grid);

  bool monotone = true;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].s_hat < rows[i - 1].s_hat) monotone = false;

  json bracket = nullptr, at_target = nullptr;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i - 1].s_hat <= o.target_s && o.target_s <= rows[i].s_hat) {
      bracket = {{"waist_lo_m", rows[i - 1].waist}, {"waist_hi_m", rows[i].waist},
                 {"s_lo", rows[i - 1].s_hat},      {"s_hi", rows[i].s_hat}};
      if (auto w = find_waist_for_scale(base, o.target_s, rows[i - 1].waist, rows[i].waist,
                                        o.q_max, z_grid, o.waist_tolerance))
        at_target = *w;
      break;
    }
  }

  json jrows = json::array();
  for (const auto& r : rows) jrows.push_back({{"waist_m", r.waist}, {"s_hat", r.s_hat}});
  const json doc = {{"artifact", "oracle_sweep"},
                    {"schema_version", kSchemaVersion},
                    {"ell", base.ell},
                    {"a_m", base.a},
                    {"kappa_per_m", base.kappa},
                    {"gap_g0_m", base.gap_g0},
                    {"q_max", o.q_max},
                    {"target_s", o.target_s},
                    {"rows", jrows},
                    {"monotone", monotone},
                    {"bracket", bracket},
                    {"waist_at_target_m", at_target}};
  const fs::path dir = output_dir(inv, cfg);
  write_text_file(dir / "oracle_sweep.json", doc.dump(2) + "\n");
  write_text_file(dir / "oracle_sweep.csv", sweep_csv(rows));

  out << "oracle: " << rows.size() << " waists, s_hat " << fmt("%.5f", rows.front().s_hat)
      << " .. " << fmt("%.5f", rows.back().s_hat) << (monotone ? ", monotone" : ", NOT monotone");
  if (!bracket.is_null()) {
    out << "; s_hat = " << o.target_s << " between waist "
        << fmt("%.4g", bracket["waist_lo_m"].get<double>()) << " and "
        << fmt("%.4g", bracket["waist_hi_m"].get<double>()) << " m";
    if (!at_target.is_null()) out << " (bisection: " << fmt("%.4g", at_target.get<double>()) << " m)";
  } else {
    out << "; s_hat = " << o.target_s << " not reached in the sweep";
  }
  out << "\n";
  return kOk;
}

std::string profile_plot_csv(const std::vector<ProfileSeries>& series) {
  double peak = 0.0;
  for (const auto& s : series)
    for (const auto& p : s.samples) peak = std::max(peak, p.normalized_area);
  const double step = 1.2 * (peak > 0.0 ? peak : 1.0);
  std::string out = "series,q,position,value,offset,plotted\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double offset = step * double(k);
    for (const auto& p : series[k].samples)
      out += std::to_string(k) + ',' + std::to_string(series[k].q) + ',' +
             format_double(p.position) + ',' + format_double(p.normalized_area) + ',' +
             format_double(offset) + ',' + format_double(p.normalized_area + offset) + '\n';
  }
  return out;
}

std::string waterfall_plot_csv(const Waterfall& wf) {
  const auto& pos = wf.plan.positions;
  double spacing = 0.0;
  for (std::size_t i = 1; i < pos.size(); ++i) {
    const double d = std::abs(pos[i] - pos[i - 1]);
    spacing = spacing == 0.0 ? d : std::min(spacing, d);
  }
  const double per_unit = spacing > 0.0 ? 0.05 * wf.plan.T0 / spacing : 0.0;
  std::string out = "position,offset,frequency_Hz,transmission,plotted\n";
  for (std::size_t k = 0; k < pos.size(); ++k) {
    const double offset = per_unit * pos[k];
    const std::string head = format_double(pos[k]) + ',' + format_double(offset) + ',';
    for (std::size_t i = 0; i < wf.plan.grid.count; ++i)
      out += head + format_double(wf.plan.grid.at(i)) + ',' + format_double(wf.traces[k][i]) +
             ',' + format_double(wf.traces[k][i] + offset) + '\n';
  }
  return out;
}

FitModel model_from_fit_document(const json& j) {
  FitModel m;
  const auto& model = get<json>(j, "model");
  m.ell = get<int>(model, "ell");
  m.a = get<double>(model, "a_m");
  m.kappa = get<double>(model, "kappa_per_m");
  const auto& par = get<json>(j, "parameters");
  for (const auto& a : get<json>(par, "amplitudes")) {
    m.qs.push_back(get<int>(a, "q"));
    m.amplitudes.push_back(get<double>(a, "value"));
  }
  m.z0 = get<double>(par, "z0_m");
  m.s = get<double>(par, "s");
  return m;
}

int cmd_plotdata(const Invocation& inv, std::ostream& out) {
  if (!inv.input) throw UsageError("plotdata needs an artifact file");
  const auto cfg = optional_config(inv);
  const json doc = read_json_file(*inv.input);
  const auto artifact = get<std::string>(doc, "artifact");
  const fs::path dest = output_dir(inv, cfg) / (inv.input->stem().string() + "_plot.csv");
  std::size_t traces = 0;
  if (artifact == "waterfall") {
    const auto wf = read_waterfall(*inv.input);
    write_text_file(dest, waterfall_plot_csv(wf));
    traces = wf.traces.size();
  } else if (artifact == "profiles" || artifact == "analysis") {
    const auto bundle = bundle_from_document(doc);
    write_text_file(dest, profile_plot_csv(bundle.series));
    traces = bundle.series.size();
  } else if (artifact == "fit") {
    expect_artifact(doc, "fit");
    const auto model = model_from_fit_document(doc);
    auto range = get_or<std::vector<double>>(doc, "data_range_m", {});
    if (range.size() != 2) {
      const double half = 4.0 * model.length_unit() * model.s;
      range = {model.z0 - half, model.z0 + half};
    }
    std::vector<ProfileSeries> curves;
    for (int q : model.qs) {
      ProfileSeries s;
      s.q = q;
      for (double z : linspace(range[0], range[1], 401))
        s.samples.push_back({z, model.value(q, z), 0.0, 0.0, 0.0, true});
      curves.push_back(std::move(s));
    }
    write_text_file(dest, profile_plot_csv(curves));
    traces = curves.size();
  } else if (artifact == "oracle_sweep") {
    expect_artifact(doc, "oracle_sweep");
    std::vector<SweepRow> rows;
    for (const auto& r : get<json>(doc, "rows"))
      rows.push_back({get<double>(r, "waist_m"), get<double>(r, "s_hat")});
    write_text_file(dest, sweep_csv(rows));
    traces = 1;
  } else {
    throw SchemaError("plotdata: unknown artifact '" + artifact + "'");
  }
  out << "plotdata: " << traces << " offset series from " << artifact << " written to "
      << dest.string() << "\n";
  return kOk;
}

} // namespace

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw SchemaError("config: top level must be an object");
  RunConfig c;
  c.schema_version = get<int>(j, "schema_version");
  if (c.schema_version != kSchemaVersion)
    throw SchemaError("config: unsupported schema_version " + std::to_string(c.schema_version));
  c.kind = kind_from_string(get<std::string>(j, "kind"));
  c.output_dir = get_or<std::string>(j, "output_dir", ".");

  try {
    if (c.kind == ConfigKind::Toroid)
      c.toroid = get<ToroidGeometry>(j, "geometry");
    else
      c.sphere = get<SphereGeometry>(j, "geometry");
    c.taper = get<TaperCoupling>(j, "taper");
    if (!(c.taper.kappa > 0.0)) {
      const double n = c.kind == ConfigKind::Toroid
                           ? get_or<double>(section(j, "taper"), "refractive_index", kDefaultSilicaIndex)
                           : c.sphere.refractive_index;
      c.taper.kappa = 1.0 / evanescent_depth(n, c.taper.wavelength);
    }
    if (c.kind != ConfigKind::Toroid) {
      c.multiplet = get_or<MultipletSpec>(j, "multiplet", MultipletSpec{});
      c.multiplet = resolve_multiplet(c.sphere, c.taper, c.multiplet);
    }

    const json& scan = section(j, "scan");
    c.plan.kind = c.kind == ConfigKind::Toroid ? ScanKind::CircularTheta : ScanKind::LinearZ;
    if (scan.contains("kind") && scan_kind_from_string(get<std::string>(scan, "kind")) != c.plan.kind)
      throw SchemaError("config: scan kind does not match the config kind");
    if (c.kind != ConfigKind::Oracle) c.plan.positions = parse_positions(scan);
    c.plan.T0 = get_or<double>(j, "T0", 1.0);
    if (c.kind == ConfigKind::Sphere || c.kind == ConfigKind::Toroid) {
      c.plan.grid = parse_grid(get<json>(j, "frequency_grid"), c);
      c.plan.validate();
    }
    c.noise = get_or<NoiseModel>(j, "noise", NoiseModel{});

    const json& an = section(j, "analysis");
    c.analysis.min_depth = get_or<double>(an, "min_depth", c.analysis.min_depth);
    c.analysis.window_fwhm = get_or<double>(an, "window_fwhm", c.analysis.window_fwhm);
    c.analysis.max_dispersion = get_or<double>(an, "max_dispersion", c.analysis.max_dispersion);
    c.analysis.convention =
        profile_convention_from_string(get_or<std::string>(an, "profile_convention", "loaded"));
    if (an.contains("label_multiplet")) c.analysis.label_multiplet = get<bool>(an, "label_multiplet");

    const json& fit = section(j, "fit");
    c.fit.initial_s = get_or<double>(fit, "initial_s", c.fit.initial_s);
    c.fit.inverse_variance_weighting = get_or<bool>(fit, "inverse_variance_weighting", false);
    c.fit.max_iterations = get_or<int>(fit, "max_iterations", c.fit.max_iterations);
    if (fit.contains("oracle_prediction") && !fit.at("oracle_prediction").is_null())
      c.fit.oracle_prediction = get<double>(fit, "oracle_prediction");
    if (fit.contains("geometry")) c.fit.geometry = parse_fit_geometry(fit.at("geometry"));
    c.fit.curve_points = get_or<std::size_t>(fit, "curve_points", c.fit.curve_points);

    if (c.kind == ConfigKind::Profiles) {
      const json& p = get<json>(j, "profiles");
      c.profiles.s = get<double>(p, "s");
      c.profiles.z0 = get_or<double>(p, "z0_m", 0.0);
      c.profiles.qs = get<std::vector<int>>(p, "qs");
      c.profiles.amplitudes = get<std::vector<double>>(p, "amplitudes");
      c.profiles.relative_noise = get_or<double>(p, "relative_noise", 0.0);
      if (c.profiles.amplitudes.size() != c.profiles.qs.size())
        throw SchemaError("config: profiles need one amplitude per q");
    }

    const json& o = section(j, "oracle");
    c.oracle.waist_from = get_or<double>(o, "waist_from_m", c.oracle.waist_from);
    c.oracle.waist_to = get_or<double>(o, "waist_to_m", c.oracle.waist_to);
    c.oracle.waist_count = get_or<std::size_t>(o, "waist_count", c.oracle.waist_count);
    c.oracle.thin_limit_row = get_or<bool>(o, "thin_limit_row", c.oracle.thin_limit_row);
    c.oracle.target_s = get_or<double>(o, "target_s", c.oracle.target_s);
    c.oracle.q_max = get_or<int>(o, "q_max", c.oracle.q_max);
    c.oracle.z_from = get_or<double>(o, "z_from_m", c.oracle.z_from);
    c.oracle.z_to = get_or<double>(o, "z_to_m", c.oracle.z_to);
    c.oracle.z_count = get_or<std::size_t>(o, "z_count", c.oracle.z_count);
    c.oracle.waist_tolerance = get_or<double>(o, "waist_tolerance_m", c.oracle.waist_tolerance);

    switch (c.kind) {
      case ConfigKind::Sphere:
        c.sphere.validate();
        c.taper.validate();
        break;
      case ConfigKind::Toroid:
        c.toroid.validate();
        break;
      case ConfigKind::Profiles:
      case ConfigKind::Oracle:
        c.sphere.validate();
        break;
    }
  } catch (const DomainError& e) {
    throw SchemaError(std::string("config: ") + e.what());
  } catch (const UsageError& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_json_file(path)); }

Waterfall synthesize(const RunConfig& c) {
  switch (c.kind) {
    case ConfigKind::Sphere:
      return synth_waterfall_linear(c.sphere, c.taper, c.multiplet, c.plan, c.noise);
    case ConfigKind::Toroid:
      return synth_waterfall_circular(c.toroid, c.taper, c.plan, c.noise);
    default:
      throw UsageError("config does not describe a waterfall");
  }
}

ProfileBundle synthesize_profiles(const RunConfig& c) {
  if (c.kind != ConfigKind::Profiles) throw UsageError("config does not describe profiles");
  FitModel truth;
  truth.ell = c.multiplet.ell;
  truth.a = c.sphere.radius;
  truth.kappa = c.taper.kappa;
  truth.qs = c.profiles.qs;
  truth.amplitudes = c.profiles.amplitudes;
  truth.z0 = c.profiles.z0;
  truth.s = c.profiles.s;
  ProfileBundle b;
  b.geometry = FitGeometry{truth.ell, truth.a, truth.kappa};
  b.convention = c.analysis.convention;
  b.series = synth_profiles(truth, c.plan.positions, c.profiles.relative_noise, c.noise.seed);
  return b;
}

OverlapConfig oracle_config(const RunConfig& c) {
  OverlapConfig o;
  o.kappa = c.taper.kappa;
  o.ell = c.multiplet.ell;
  o.a = c.sphere.radius;
  o.gap_g0 = c.taper.gap_g0;
  return o.with_waist(c.oracle.waist_from);
}

FitModel initial_model(const FitGeometry& geometry, const std::vector<ProfilePoint>& data,
                       double initial_s) {
  FitModel m;
  m.ell = geometry.ell;
  m.a = geometry.a;
  m.kappa = geometry.kappa;
  std::set<int> qs;
  for (const auto& p : data) qs.insert(p.q);
  m.qs.assign(qs.begin(), qs.end());
  m.z0 = estimate_center(data);
  m.s = initial_s;
  return m;
}

FitResult fit_bundle(const ProfileBundle& bundle, const FitSettings& settings) {
  const auto geometry = settings.geometry ? settings.geometry : bundle.geometry;
  if (!geometry)
    throw SchemaError("profiles carry no cavity geometry; set fit.geometry in the config");
  const auto data = to_profile_points(bundle.series);
  if (data.empty()) throw AnalysisError("no profile series with a q label to fit");
  FitOptions opts;
  opts.solver.max_iterations = settings.max_iterations;
  opts.inverse_variance_weighting = settings.inverse_variance_weighting;
  return global_fit(data, initial_model(*geometry, data, settings.initial_s), opts);
}

int run(const Invocation& inv, std::ostream& out, std::ostream& err) {
  try {
    if (inv.command == "synth") return cmd_synth(inv, out);
    if (inv.command == "analyze") return cmd_analyze(inv, out);
    if (inv.command == "fit") return cmd_fit(inv, out, err);
    if (inv.command == "oracle") return cmd_oracle(inv, out);
    if (inv.command == "plotdata") return cmd_plotdata(inv, out);
    err << "error: unknown command '" << inv.command << "'\n";
    return kConfigError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const AnalysisError& e) {
    err << "analysis rejected: " << e.what() << "\n";
    return kAnalysisRejected;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kFitNotConverged;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::domain_error& e) {
    err << "invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    err << "schema error: " << e.what() << "\n";
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  }
}

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Whispering-gallery-mode excitation mapping: synthesize, analyze and fit "
               "taper-scan spectra"};
  app.require_subcommand(1);

  Invocation inv;
  std::string config, out_dir, input, convention;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool takes_input) {
    sub->add_option("--config", config, "run configuration (JSON)");
    sub->add_option("--seed", seed, "noise seed, overrides the config");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--profile-convention", convention, "normalized area convention")
        ->check(CLI::IsMember({"loaded", "intrinsic"}));
    if (takes_input) sub->add_option("input", input, "input artifact file")->required();
  };
  add_common(app.add_subcommand("synth", "generate a waterfall or profile set"), false);
  add_common(app.add_subcommand("analyze", "detect dips, label lines, extract profiles"), true);
  add_common(app.add_subcommand("fit", "global Hermite-Gauss fit of profiles"), true);
  add_common(app.add_subcommand("oracle", "finite-taper overlap sweep"), false);
  add_common(app.add_subcommand("plotdata", "plot-ready offset series"), true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kConfigError;
  }

  const auto* sub = app.get_subcommands().front();
  inv.command = sub->get_name();
  if (sub->count("--config")) inv.config = config;
  if (sub->count("--seed")) inv.seed = seed;
  if (sub->count("--out")) inv.out = out_dir;
  if (sub->count("--profile-convention")) inv.convention = profile_convention_from_string(convention);
  if (!input.empty()) inv.input = input;
  return run(inv, out, err);
}

} // namespace wgm::cli
