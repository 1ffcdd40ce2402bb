#pragma once

// File formats. Every JSON document carries "artifact" and "schema_version".
// Floating-point values are written in shortest round-trip form so a file
// read back reproduces the in-memory doubles exactly.

#include "wgm/overlap.hpp"
#include "wgm/profile_fit.hpp"
#include "wgm/scan_synth.hpp"
#include "wgm/spectrum_analysis.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace wgm {

inline constexpr int kSchemaVersion = 1;

std::string format_double(double x);
double parse_double(std::string_view s);

/// "z=<micrometres>" or "theta=<rad>", 6 significant digits.
std::string position_header(ScanKind kind, double position);

void to_json(nlohmann::json& j, const SphereGeometry& g);
void from_json(const nlohmann::json& j, SphereGeometry& g);
void to_json(nlohmann::json& j, const TaperCoupling& t);
void from_json(const nlohmann::json& j, TaperCoupling& t);
void to_json(nlohmann::json& j, const MultipletSpec& m);
void from_json(const nlohmann::json& j, MultipletSpec& m);
void to_json(nlohmann::json& j, const ToroidMode& m);
void from_json(const nlohmann::json& j, ToroidMode& m);
void to_json(nlohmann::json& j, const ToroidGeometry& g);
void from_json(const nlohmann::json& j, ToroidGeometry& g);
void to_json(nlohmann::json& j, const FrequencyGrid& g);
void from_json(const nlohmann::json& j, FrequencyGrid& g);
void to_json(nlohmann::json& j, const ScanPlan& p);
void from_json(const nlohmann::json& j, ScanPlan& p);
void to_json(nlohmann::json& j, const NoiseModel& n);
void from_json(const nlohmann::json& j, NoiseModel& n);
void to_json(nlohmann::json& j, const DipRecord& d);
void from_json(const nlohmann::json& j, DipRecord& d);
void to_json(nlohmann::json& j, const ProfileSeries& s);
void from_json(const nlohmann::json& j, ProfileSeries& s);

/// Geometry the profile fit needs; present for sphere scans.
struct FitGeometry {
  int ell = 0;
  double a = 0.0;
  double kappa = 0.0;
};

std::optional<FitGeometry> fit_geometry_of(const Waterfall& wf);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Writes <json_path> (metadata) and <json_path stem>.csv (traces).
void write_waterfall(const Waterfall& wf, const std::filesystem::path& json_path);
Waterfall read_waterfall(const std::filesystem::path& json_path);
std::string waterfall_csv(const Waterfall& wf);

nlohmann::json analysis_to_json(const AnalysisReport& report,
                                const std::optional<FitGeometry>& geometry);

/// Profile bundle consumed by the fit stage.
struct ProfileBundle {
  std::optional<FitGeometry> geometry;
  ProfileConvention convention = ProfileConvention::Loaded;
  std::vector<ProfileSeries> series;
};

nlohmann::json profiles_to_json(const ProfileBundle& bundle);
ProfileBundle profiles_from_json(const nlohmann::json& j);
/// position,value,gamma_loaded
std::string profile_csv(const ProfileSeries& series);

nlohmann::json fit_to_json(const FitResult& fit, const ScaleFactorReport& report);
/// Dense fitted curves, one column per q.
std::string fitted_curves_csv(const FitModel& model, double z_from, double z_to,
                              std::size_t count);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Throws SchemaError unless j["artifact"] == expected and the schema version matches.
void expect_artifact(const nlohmann::json& j, std::string_view expected);

} // namespace wgm
