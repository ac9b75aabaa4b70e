#pragma once

// Experiment config files: JSON (comments allowed) mirroring ExperimentConfig
// plus the task, output directory and suite settings. Unknown keys are
// rejected and every diagnostic names the offending key.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pbt/core.hpp"
#include "pbt/json.hpp"

namespace pbt {

struct SuiteSettings {
  std::vector<std::uint64_t> seeds;    // default 0..19
  std::vector<int> population_sizes;   // default 10, 20, 40, 80
  bool operator==(const SuiteSettings&) const = default;
};

struct ConfigFile {
  ExperimentConfig experiment;
  Json task;  // task constants, defaults filled in
  std::optional<std::filesystem::path> output_dir;
  SuiteSettings suite;
  bool operator==(const ConfigFile&) const = default;
};

ConfigFile parse_config(const Json& document);
ConfigFile parse_config_text(const std::string& text);
ConfigFile parse_config(const std::filesystem::path& path);

/// Fully resolved form; parsing it back yields an equal ConfigFile.
Json to_json(const ConfigFile& config);

Json to_json(const HyperparamSpec& spec);
HyperparamSpec hyperparam_spec_from_json(const Json& j, const std::string& context);

}  // namespace pbt
