#pragma once

#include "commands.hpp"

#include <filesystem>
#include <string>

namespace fixtures {

inline std::filesystem::path config_path(const std::string& name) {
  return std::filesystem::path(WGM_SOURCE_DIR) / "configs" / name;
}

inline wgm::cli::RunConfig load(const std::string& name) {
  return wgm::cli::load_run_config(config_path(name));
}

/// 56 um sphere with noise switched off.
inline wgm::cli::RunConfig sphere56_noiseless() {
  auto c = load("sphere_56um.json");
  c.noise.sigma_T = 0.0;
  return c;
}

/// 56 um sphere in the weakly coupled regime (gamma_c <= 0.4% of gamma_0).
inline wgm::cli::RunConfig sphere56_undercoupled() {
  auto c = sphere56_noiseless();
  c.taper.gammaC0 *= 0.004 / 0.75;
  c.analysis.min_depth = 0.004;
  return c;
}

} // namespace fixtures
