#pragma once

// Command implementations behind the `coopsar` executable. Each returns the
// process exit code: 0 success, 1 bad input (config, schema, parse), 2
// mission failure with a report written.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace coopsar {

inline constexpr const char* kOutputRootEnv = "COOPSAR_OUTPUT_ROOT";

struct RunManifest {
  std::optional<std::filesystem::path> config;  // mission JSON; defaults when unset
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "out";
  bool validate_only = false;
};

/// A relative `out` is placed under the output-root variable when it is set.
std::filesystem::path resolve_output_dir(const RunManifest& m);

int cmd_mission(const RunManifest& m, std::ostream& log, std::ostream& err);

/// Writes `attitude.csv` (t,qw,qx,qy,qz,roll,pitch,yaw) from an IMU log.
int cmd_replay_imu(const RunManifest& m, const std::filesystem::path& csv, std::ostream& log, std::ostream& err);

/// Writes `map.pgm`, `map.json` and `landmarks.txt` (`x y z` per landmark).
int cmd_export_map(const RunManifest& m, const std::filesystem::path& graph, std::ostream& log, std::ostream& err);

}  // namespace coopsar
