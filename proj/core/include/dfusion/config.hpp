#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dfusion/denoiser.hpp"
#include "dfusion/fusion.hpp"
#include "dfusion/training.hpp"

namespace dfusion {

/// Flat view of a "key = value" file with [section] headers; keys are stored as
/// "section.key". '#' and ';' start comment lines.
using ConfigValues = std::map<std::string, std::string>;

ConfigValues parse_config_text(const std::string& text);

struct ScheduleConfig {
  int steps = 200;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
};

struct RunConfig {
  ScheduleConfig schedule;
  DenoiserConfig denoiser;
  DiffusionTrainConfig diffusion;
  FusionTrainConfig fusion;
  std::uint64_t denoiser_seed = 1;
  std::uint64_t diffusion_seed = 2;
  std::uint64_t fusion_seed = 3;
  std::uint64_t sample_seed = 4;
  std::filesystem::path output_dir = "out";

  RunConfig();

  /// Sets one "section.key"; throws std::invalid_argument for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void apply(const ConfigValues& values);
  /// Range checks delegated to the owning types.
  void validate() const;

  NoiseSchedule make_schedule() const;
};

RunConfig load_config(const std::filesystem::path& path);
/// Serializes every key; parse_config_text(format_config(c)) rebuilds c.
std::string format_config(const RunConfig& config);

}  // namespace dfusion
