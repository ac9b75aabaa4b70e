#pragma once

// Run-directory files: curves.csv, final_population.json, best.json,
// resolved_config.json and the FAILED marker. events.jsonl and checkpoints/
// are written by DirectoryStore while the run is in progress.

#include <filesystem>
#include <string>
#include <vector>

#include "pbt/config.hpp"
#include "pbt/engine.hpp"

namespace pbt {

inline constexpr const char* kCurvesFile = "curves.csv";
inline constexpr const char* kEventsFile = "events.jsonl";
inline constexpr const char* kFinalPopulationFile = "final_population.json";
inline constexpr const char* kBestFile = "best.json";
inline constexpr const char* kResolvedConfigFile = "resolved_config.json";
inline constexpr const char* kFailedMarker = "FAILED";

/// Columns: step, member_id, p, then one per hyperparameter in name order.
void write_curves_csv(const std::filesystem::path& path, std::span<const CurveRecord> curves,
                      std::span<const HyperparamSpec> specs);
std::vector<CurveRecord> read_curves_csv(const std::filesystem::path& path);

Json member_to_json(const MemberState& m);
void write_final_population(const std::filesystem::path& path,
                            std::span<const MemberState> population);
std::vector<MemberState> read_final_population(const std::filesystem::path& path);

void write_json_file(const std::filesystem::path& path, const Json& j);
Json read_json_file(const std::filesystem::path& path);

/// Everything except events.jsonl and checkpoints, which the store owns.
void write_run_artifacts(const std::filesystem::path& run_dir, const ConfigFile& config,
                         const RunReport& report);

/// Writes FAILED with `reason`; artifacts already present are kept.
void write_failure_marker(const std::filesystem::path& run_dir, const std::string& reason);

}  // namespace pbt
