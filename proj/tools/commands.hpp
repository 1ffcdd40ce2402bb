#pragma once

// Subcommands of wgm_mapper. Each stage reads and writes files so that one
// plot corresponds to one invocation; run() maps errors to exit codes.

#include "wgm/overlap.hpp"
#include "wgm/serialization.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace wgm::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kIoError = 3,
  kAnalysisRejected = 4,
  kFitNotConverged = 5,
};

struct FitSettings {
  double initial_s = 1.0;
  bool inverse_variance_weighting = false;
  int max_iterations = 200;
  std::optional<double> oracle_prediction;
  std::optional<FitGeometry> geometry; // overrides the geometry carried by the profiles
  std::size_t curve_points = 401;
};

struct ProfileSynthSettings {
  double s = 1.0;
  double z0 = 0.0;
  std::vector<int> qs;
  std::vector<double> amplitudes;
  double relative_noise = 0.0;
};

struct OracleSettings {
  double waist_from = 0.05e-6;
  double waist_to = 2e-6;
  std::size_t waist_count = 10;
  bool thin_limit_row = true; // prepend a row at waist = 1 / (100 kappa)
  double target_s = 1.4;
  int q_max = 5;
  double z_from = -6e-6;
  double z_to = 6e-6;
  std::size_t z_count = 121;
  double waist_tolerance = 1e-9;
};

enum class ConfigKind { Sphere, Toroid, Profiles, Oracle };

struct RunConfig {
  int schema_version = kSchemaVersion;
  ConfigKind kind = ConfigKind::Sphere;
  SphereGeometry sphere;
  ToroidGeometry toroid;
  TaperCoupling taper;
  MultipletSpec multiplet;
  ScanPlan plan;
  NoiseModel noise;
  AnalysisOptions analysis;
  FitSettings fit;
  ProfileSynthSettings profiles;
  OracleSettings oracle;
  std::filesystem::path output_dir = ".";
};

/// Parses and validates a run configuration. Throws SchemaError.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// In-process stages, shared by the commands and the tests.
Waterfall synthesize(const RunConfig& config);
ProfileBundle synthesize_profiles(const RunConfig& config);
OverlapConfig oracle_config(const RunConfig& config);
FitModel initial_model(const FitGeometry& geometry, const std::vector<ProfilePoint>& data,
                       double initial_s);
FitResult fit_bundle(const ProfileBundle& bundle, const FitSettings& settings);

struct Invocation {
  std::string command; // synth, analyze, fit, oracle, plotdata
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<ProfileConvention> convention;
  std::optional<std::filesystem::path> input;
};

/// Runs one subcommand. Progress goes to `out`, diagnostics to `err`.
int run(const Invocation& inv, std::ostream& out, std::ostream& err);

/// Full command line, including argument parsing.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

} // namespace wgm::cli
