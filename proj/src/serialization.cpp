#include "wgm/serialization.hpp"

#include "wgm/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace wgm {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t'))
    s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw SchemaError("not a number: '" + std::string(s) + "'");
  return v;
}

std::string position_header(ScanKind kind, double position) {
  char buf[64];
  if (kind == ScanKind::LinearZ)
    std::snprintf(buf, sizeof(buf), "z=%#.6g", position * 1e6);
  else
    std::snprintf(buf, sizeof(buf), "theta=%#.6g", position);
  return buf;
}

namespace {

template <typename T>
T req(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw SchemaError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad field '") + key + "': " + e.what());
  }
}

template <typename T>
T opt(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad field '") + key + "': " + e.what());
  }
}

} // namespace

void to_json(json& j, const SphereGeometry& g) {
  j = {{"radius_m", g.radius},
       {"ellipticity", g.ellipticity},
       {"refractive_index", g.refractive_index}};
}

void from_json(const json& j, SphereGeometry& g) {
  if (j.contains("diameter_m") && !j.contains("radius_m"))
    g.radius = req<double>(j, "diameter_m") / 2.0;
  else
    g.radius = req<double>(j, "radius_m");
  g.ellipticity = req<double>(j, "ellipticity");
  g.refractive_index = opt<double>(j, "refractive_index", kDefaultSilicaIndex);
}

void to_json(json& j, const TaperCoupling& t) {
  j = {{"wavelength_m", t.wavelength}, {"kappa_per_m", t.kappa},
       {"gap_g0_m", t.gap_g0},         {"gamma0_hz", t.gamma0},
       {"gammaC0_hz", t.gammaC0},      {"Kq", t.Kq}};
}

void from_json(const json& j, TaperCoupling& t) {
  t.wavelength = req<double>(j, "wavelength_m");
  t.kappa = opt<double>(j, "kappa_per_m", 0.0);
  t.gap_g0 = opt<double>(j, "gap_g0_m", 0.0);
  t.gamma0 = opt<double>(j, "gamma0_hz", 0.0);
  t.gammaC0 = opt<double>(j, "gammaC0_hz", 0.0);
  t.Kq = opt<std::vector<double>>(j, "Kq", {});
}

void to_json(json& j, const MultipletSpec& m) {
  j = {{"ell", m.ell},  {"nu_ref_hz", m.nu_ref},
       {"q_max", m.q_max}, {"n", m.n},
       {"polarization", std::string(to_string(m.polarization))}};
}

void from_json(const json& j, MultipletSpec& m) {
  m.ell = opt<int>(j, "ell", 0);
  m.nu_ref = opt<double>(j, "nu_ref_hz", 0.0);
  m.q_max = opt<int>(j, "q_max", 5);
  m.n = opt<int>(j, "n", 1);
  m.polarization = polarization_from_string(opt<std::string>(j, "polarization", "TE"));
}

void to_json(json& j, const ToroidMode& m) {
  j = {{"frequency_offset_hz", m.frequency_offset},
       {"polar_width_rad", m.polar_width},
       {"q", m.q},
       {"gamma0_hz", m.gamma0},
       {"gammaC0_hz", m.gammaC0}};
}

void from_json(const json& j, ToroidMode& m) {
  m.frequency_offset = req<double>(j, "frequency_offset_hz");
  m.polar_width = req<double>(j, "polar_width_rad");
  m.q = req<int>(j, "q");
  m.gamma0 = req<double>(j, "gamma0_hz");
  m.gammaC0 = req<double>(j, "gammaC0_hz");
}

void to_json(json& j, const ToroidGeometry& g) {
  j = {{"minor_diameter_m", g.minor_diameter},
       {"scan_radius_m", g.scan_radius},
       {"center_offset_m", {g.offset_y, g.offset_z}},
       {"reference_frequency_hz", g.reference_frequency},
       {"modes", g.modes}};
}

void from_json(const json& j, ToroidGeometry& g) {
  g.minor_diameter = req<double>(j, "minor_diameter_m");
  g.scan_radius = req<double>(j, "scan_radius_m");
  const auto off = opt<std::vector<double>>(j, "center_offset_m", {0.0, 0.0});
  if (off.size() != 2) throw SchemaError("center_offset_m must have two entries");
  g.offset_y = off[0];
  g.offset_z = off[1];
  g.reference_frequency = opt<double>(j, "reference_frequency_hz", 0.0);
  g.modes = req<std::vector<ToroidMode>>(j, "modes");
}

void to_json(json& j, const FrequencyGrid& g) {
  j = {{"start_hz", g.start}, {"step_hz", g.step}, {"count", g.count}};
}

void from_json(const json& j, FrequencyGrid& g) {
  g.start = req<double>(j, "start_hz");
  g.step = req<double>(j, "step_hz");
  g.count = req<std::size_t>(j, "count");
}

void to_json(json& j, const ScanPlan& p) {
  j = {{"kind", std::string(to_string(p.kind))},
       {"positions", p.positions},
       {"frequency_grid", p.grid},
       {"T0", p.T0}};
}

void from_json(const json& j, ScanPlan& p) {
  try {
    p.kind = scan_kind_from_string(req<std::string>(j, "kind"));
  } catch (const UsageError& e) {
    throw SchemaError(e.what());
  }
  p.positions = req<std::vector<double>>(j, "positions");
  p.grid = req<FrequencyGrid>(j, "frequency_grid");
  p.T0 = opt<double>(j, "T0", 1.0);
}

void to_json(json& j, const NoiseModel& n) { j = {{"sigma_T", n.sigma_T}, {"seed", n.seed}}; }

void from_json(const json& j, NoiseModel& n) {
  n.sigma_T = opt<double>(j, "sigma_T", 0.0);
  n.seed = opt<std::uint64_t>(j, "seed", 0);
}

void to_json(json& j, const DipRecord& d) {
  j = {{"center_hz", d.center},      {"fwhm_hz", d.fwhm},
       {"depth_C", d.depth},         {"area_hz", d.area},
       {"baseline_T0", d.baseline},  {"position", d.position},
       {"fit_residual_rms", d.residual_rms}, {"iterations", d.iterations},
       {"converged", d.converged}};
}

void from_json(const json& j, DipRecord& d) {
  d.center = req<double>(j, "center_hz");
  d.fwhm = req<double>(j, "fwhm_hz");
  d.depth = req<double>(j, "depth_C");
  d.area = req<double>(j, "area_hz");
  d.baseline = opt<double>(j, "baseline_T0", 1.0);
  d.position = req<double>(j, "position");
  d.residual_rms = opt<double>(j, "fit_residual_rms", 0.0);
  d.iterations = opt<int>(j, "iterations", 0);
  d.converged = opt<bool>(j, "converged", true);
}

void to_json(json& j, const ProfileSeries& s) {
  json samples = json::array();
  for (const auto& x : s.samples)
    samples.push_back({{"position", x.position},
                       {"normalized_area", x.normalized_area},
                       {"gamma_loaded_hz", x.gamma_loaded},
                       {"gamma_intrinsic_hat_hz", x.gamma_intrinsic_hat},
                       {"depth_C", x.depth},
                       {"detected", x.detected}});
  json gaps = json::array();
  for (const auto& [b, e] : s.gaps) gaps.push_back({b, e});
  j = {{"q", s.q < 0 ? json(nullptr) : json(s.q)},
       {"line_index", s.line_index},
       {"line_frequency_hz", s.line_frequency},
       {"samples", samples},
       {"gaps", gaps}};
}

void from_json(const json& j, ProfileSeries& s) {
  s.q = opt<int>(j, "q", -1);
  s.line_index = opt<std::size_t>(j, "line_index", 0);
  s.line_frequency = opt<double>(j, "line_frequency_hz", 0.0);
  s.samples.clear();
  for (const auto& x : req<json>(j, "samples")) {
    ProfileSample p;
    p.position = req<double>(x, "position");
    p.normalized_area = req<double>(x, "normalized_area");
    p.gamma_loaded = opt<double>(x, "gamma_loaded_hz", 0.0);
    p.gamma_intrinsic_hat = opt<double>(x, "gamma_intrinsic_hat_hz", 0.0);
    p.depth = opt<double>(x, "depth_C", 0.0);
    p.detected = opt<bool>(x, "detected", true);
    s.samples.push_back(p);
  }
  s.gaps.clear();
  for (const auto& g : opt<json>(j, "gaps", json::array()))
    s.gaps.emplace_back(g.at(0).get<std::size_t>(), g.at(1).get<std::size_t>());
}

std::optional<FitGeometry> fit_geometry_of(const Waterfall& wf) {
  if (const auto* sphere = std::get_if<SphereSetup>(&wf.setup))
    return FitGeometry{sphere->multiplet.ell, sphere->geometry.radius, sphere->taper.kappa};
  return std::nullopt;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void expect_artifact(const json& j, std::string_view expected) {
  const auto kind = req<std::string>(j, "artifact");
  if (kind != expected)
    throw SchemaError("expected a '" + std::string(expected) + "' file, got '" + kind + "'");
  const int version = req<int>(j, "schema_version");
  if (version != kSchemaVersion)
    throw SchemaError("unsupported schema_version " + std::to_string(version));
}

std::string waterfall_csv(const Waterfall& wf) {
  std::string out = "frequency_Hz";
  for (double p : wf.plan.positions) {
    out += ',';
    out += position_header(wf.plan.kind, p);
  }
  out += '\n';
  for (std::size_t i = 0; i < wf.plan.grid.count; ++i) {
    out += format_double(wf.plan.grid.at(i));
    for (const auto& t : wf.traces) {
      out += ',';
      out += format_double(t[i]);
    }
    out += '\n';
  }
  return out;
}

void write_waterfall(const Waterfall& wf, const fs::path& json_path) {
  wf.validate();
  const fs::path csv_path = fs::path(json_path).replace_extension(".csv");
  json setup;
  if (const auto* s = std::get_if<SphereSetup>(&wf.setup))
    setup = {{"type", "sphere"},
             {"geometry", s->geometry},
             {"taper", s->taper},
             {"multiplet", s->multiplet}};
  else {
    const auto& t = std::get<ToroidSetup>(wf.setup);
    setup = {{"type", "toroid"}, {"geometry", t.geometry}, {"taper", t.taper}};
  }
  const json meta = {{"artifact", "waterfall"},
                     {"schema_version", kSchemaVersion},
                     {"csv", csv_path.filename().string()},
                     {"plan", wf.plan},
                     {"noise", wf.noise},
                     {"setup", setup}};
  write_text_file(json_path, meta.dump(2) + "\n");
  write_text_file(csv_path, waterfall_csv(wf));
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t from = 0;
  while (true) {
    const auto comma = line.find(',', from);
    cells.push_back(line.substr(from, comma == std::string_view::npos ? comma : comma - from));
    if (comma == std::string_view::npos) break;
    from = comma + 1;
  }
  return cells;
}

} // namespace

Waterfall read_waterfall(const fs::path& json_path) {
  const json meta = read_json_file(json_path);
  expect_artifact(meta, "waterfall");

  Waterfall wf;
  wf.plan = req<ScanPlan>(meta, "plan");
  wf.noise = opt<NoiseModel>(meta, "noise", NoiseModel{});
  const json setup = req<json>(meta, "setup");
  const auto type = req<std::string>(setup, "type");
  if (type == "sphere")
    wf.setup = SphereSetup{req<SphereGeometry>(setup, "geometry"),
                           req<TaperCoupling>(setup, "taper"),
                           req<MultipletSpec>(setup, "multiplet")};
  else if (type == "toroid")
    wf.setup = ToroidSetup{req<ToroidGeometry>(setup, "geometry"),
                           req<TaperCoupling>(setup, "taper")};
  else
    throw SchemaError("unknown setup type '" + type + "'");
  try {
    wf.plan.validate();
  } catch (const UsageError& e) {
    throw SchemaError(std::string("invalid scan plan: ") + e.what());
  }

  const fs::path csv_path = json_path.parent_path() / req<std::string>(meta, "csv");
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(csv_path.string() + ": empty file");
  const auto header = split_commas(line);
  const std::size_t np = wf.plan.positions.size();
  if (header.size() != np + 1 || header[0] != "frequency_Hz")
    throw SchemaError(csv_path.string() + ": header does not match the scan plan");
  for (std::size_t k = 0; k < np; ++k) {
    std::string_view cell = header[k + 1];
    if (!cell.empty() && cell.back() == '\r') cell.remove_suffix(1);
    if (cell != position_header(wf.plan.kind, wf.plan.positions[k]))
      throw SchemaError(csv_path.string() + ": column " + std::to_string(k + 1) +
                        " header does not match position");
  }

  wf.traces.assign(np, std::vector<double>(wf.plan.grid.count));
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (row >= wf.plan.grid.count) throw SchemaError(csv_path.string() + ": too many rows");
    const auto cells = split_commas(line);
    if (cells.size() != np + 1)
      throw SchemaError(csv_path.string() + ": row " + std::to_string(row + 2) +
                        " has the wrong number of columns");
    const double nu = parse_double(cells[0]);
    const double expected = wf.plan.grid.at(row);
    if (std::abs(nu - expected) > 1e-9 * std::abs(expected) + 1e-9)
      throw SchemaError(csv_path.string() + ": frequency column departs from the grid at row " +
                        std::to_string(row + 2));
    for (std::size_t k = 0; k < np; ++k) wf.traces[k][row] = parse_double(cells[k + 1]);
    ++row;
  }
  if (row != wf.plan.grid.count)
    throw SchemaError(csv_path.string() + ": expected " + std::to_string(wf.plan.grid.count) +
                      " rows, found " + std::to_string(row));
  return wf;
}

json analysis_to_json(const AnalysisReport& report, const std::optional<FitGeometry>& geometry) {
  json positions = json::array();
  for (const auto& p : report.positions)
    positions.push_back({{"position", p.position}, {"baseline_T0", p.baseline}, {"dips", p.dips}});
  json multiplet = nullptr;
  if (report.multiplet) {
    const auto& m = *report.multiplet;
    multiplet = {{"q_of_line", m.q_of_line},
                 {"lines_by_q_hz", m.lines_by_q},
                 {"spacing_hat_hz", m.spacing_hat},
                 {"spacing_dispersion", m.spacing_dispersion},
                 {"q0_frequency_hz", m.q0_frequency},
                 {"missing_line_frequency_hz", m.missing_line_frequency}};
  }
  json lines = json::array();
  for (const auto& l : report.lines)
    lines.push_back({{"frequency_hz", l.frequency},
                     {"q", l.q < 0 ? json(nullptr) : json(l.q)},
                     {"gamma_intrinsic_hat_hz", l.gamma_intrinsic_hat}});
  json geo = nullptr;
  if (geometry) geo = {{"ell", geometry->ell}, {"a_m", geometry->a}, {"kappa_per_m", geometry->kappa}};
  return {{"artifact", "analysis"},
          {"schema_version", kSchemaVersion},
          {"convention", std::string(to_string(report.convention))},
          {"track_tolerance_hz", report.track_tolerance},
          {"positions", positions},
          {"multiplet", multiplet},
          {"lines", lines},
          {"profiles", report.profiles},
          {"fit_geometry", geo}};
}

json profiles_to_json(const ProfileBundle& bundle) {
  json geo = nullptr;
  if (bundle.geometry)
    geo = {{"ell", bundle.geometry->ell},
           {"a_m", bundle.geometry->a},
           {"kappa_per_m", bundle.geometry->kappa}};
  return {{"artifact", "profiles"},
          {"schema_version", kSchemaVersion},
          {"convention", std::string(to_string(bundle.convention))},
          {"fit_geometry", geo},
          {"series", bundle.series}};
}

ProfileBundle profiles_from_json(const json& j) {
  expect_artifact(j, "profiles");
  ProfileBundle b;
  try {
    b.convention = profile_convention_from_string(opt<std::string>(j, "convention", "loaded"));
  } catch (const UsageError& e) {
    throw SchemaError(e.what());
  }
  if (j.contains("fit_geometry") && !j.at("fit_geometry").is_null()) {
    const auto& g = j.at("fit_geometry");
    b.geometry = FitGeometry{req<int>(g, "ell"), req<double>(g, "a_m"), req<double>(g, "kappa_per_m")};
  }
  b.series = req<std::vector<ProfileSeries>>(j, "series");
  return b;
}

std::string profile_csv(const ProfileSeries& series) {
  std::string out = "position,value,gamma_loaded\n";
  for (const auto& s : series.samples)
    out += format_double(s.position) + ',' + format_double(s.normalized_area) + ',' +
           format_double(s.gamma_loaded) + '\n';
  return out;
}

json fit_to_json(const FitResult& fit, const ScaleFactorReport& report) {
  json amps = json::array();
  json rms = json::array();
  for (std::size_t k = 0; k < fit.model.qs.size(); ++k) {
    amps.push_back({{"q", fit.model.qs[k]},
                    {"value", fit.model.amplitudes[k]},
                    {"sigma", fit.amplitude_sigma[k]}});
    rms.push_back({{"q", fit.model.qs[k]}, {"rms", fit.residual_rms[k]}});
  }
  json log = json::array();
  for (const auto& r : fit.log)
    log.push_back({{"iteration", r.iteration},
                   {"cost", r.cost},
                   {"damping", r.damping},
                   {"step_norm", r.step_norm},
                   {"accepted", r.accepted}});
  json rep = {{"s", report.s},
              {"sigma", report.sigma},
              {"reliable", report.reliable},
              {"consistent_with_thin_taper", report.consistent_with_thin_taper},
              {"classification", report.classification}};
  if (report.oracle_prediction) {
    rep["oracle_prediction"] = *report.oracle_prediction;
    rep["consistent_with_oracle"] = report.consistent_with_oracle;
  }
  return {{"artifact", "fit"},
          {"schema_version", kSchemaVersion},
          {"converged", fit.converged},
          {"non_converged", !fit.converged},
          {"model", {{"ell", fit.model.ell}, {"a_m", fit.model.a}, {"kappa_per_m", fit.model.kappa}}},
          {"parameters",
           {{"amplitudes", amps},
            {"z0_m", fit.model.z0},
            {"z0_sigma_m", fit.z0_sigma},
            {"s", fit.model.s},
            {"s_sigma", fit.s_sigma}}},
          {"residual_rms", rms},
          {"convergence",
           {{"iterations", fit.iterations},
            {"final_step_norm", fit.final_step_norm},
            {"cost", fit.cost}}},
          {"iteration_log", log},
          {"warnings", fit.warnings},
          {"scale_factor_report", rep}};
}

std::string fitted_curves_csv(const FitModel& model, double z_from, double z_to,
                              std::size_t count) {
  std::string out = "position";
  for (int q : model.qs) out += ",fit_q" + std::to_string(q);
  out += '\n';
  for (double z : linspace(z_from, z_to, count)) {
    out += format_double(z);
    for (int q : model.qs) out += ',' + format_double(model.value(q, z));
    out += '\n';
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "waist_m,s_hat\n";
  for (const auto& r : rows) out += format_double(r.waist) + ',' + format_double(r.s_hat) + '\n';
  return out;
}

} // namespace wgm
