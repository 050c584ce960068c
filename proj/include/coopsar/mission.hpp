#pragma once

// End-to-end scenario: aerial exploration and mapping, map processing at
// the ground station, map handoff over the bus, ground localization,
// navigation to each marked victim and inspection, on one virtual clock.

#include <coopsar/comms.hpp>
#include <coopsar/hexapod.hpp>
#include <coopsar/mapgraph.hpp>
#include <coopsar/nav.hpp>
#include <coopsar/victims.hpp>
#include <coopsar/worldsim.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace coopsar {

struct MissionLinks {
  LinkModel uav_gcs;
  LinkModel gcs_rex;
};

struct MissionConfig {
  // World: a file, or a generated arena.
  std::optional<std::filesystem::path> world_file;
  std::uint64_t world_seed = 7;
  WorldGenConfig world_gen = [] {
    WorldGenConfig g;
    g.victim_count = 3;
    return g;
  }();

  std::uint64_t seed = 1;

  // Aerial agent; empty waypoints select the default sweep at `altitude`.
  std::vector<Vec3d> waypoints;
  double altitude = 1.5;
  double speed = 0.5;               // m/s
  double flight_budget = 1800.0;    // s, exploration plus return
  double imu_rate = 100.0;          // Hz
  double vo_rate = 7.0;
  double ae_rate = 15.0;
  double observation_sigma = 0.01;  // m, landmark position noise in the camera frame
  ImuNoiseConfig imu_noise{0.01, 0.05, 0.02, Vec3d::Zero(), true};
  VoNoiseConfig vo_noise;
  DetectorConfig detector;
  LoopClosureConfig loop_closure{0.3, 5, 8, 0.01, 0.005};
  DepthConfig aerial_depth = [] {
    DepthConfig d;
    d.elevations_deg.clear();
    for (double e = -10.0; e >= -50.0; e -= 2.5) d.elevations_deg.push_back(e);
    return d;
  }();

  // Victim marking.
  MarkSource marking = MarkSource::Automatic;
  std::vector<double> manual_mark_times;  // s since mission start
  double dedupe_radius = 0.75;

  // Ground station.
  double processing_time = 10.0;  // s per PROCESS pass
  double coverage_target = 0.5;   // FREE fraction of the arena floor
  int max_explore_passes = 2;
  OccupancyConfig occupancy;

  // Ground robot.
  Eigen::Vector3d ground_start{1.5, 1.5, 0.0};  // x, y, yaw
  double ground_camera_height = 0.3;
  int localization_attempts = 8;     // rotate 45 deg between attempts
  double localization_dwell = 2.0;   // s per attempt
  GaitName gait = GaitName::Tripod;
  double payload = 0.0;              // kg
  double endurance_budget = 3600.0;  // s of ground operation
  double inspect_time = 30.0;        // s per reached victim
  int max_steps_per_goal = 3000;
  DepthConfig ground_depth = [] {
    DepthConfig d;
    d.max_range = 4.0;
    return d;
  }();
  double ground_sensor_height = 0.25;
  HexapodConfig hexapod;

  MissionLinks links;
  double victim_tolerance = 0.5;  // m, mark to ground truth
  double goal_tolerance = 0.3;    // m

  /// Throws ConfigInvalid naming the first invalid field.
  void validate() const;
};

/// JSON config; relative paths resolve against `base_dir`. Throws
/// ParseError or ConfigInvalid (message starts with the field path).
MissionConfig read_mission_config(std::istream& in, const std::filesystem::path& base_dir = {});
MissionConfig load_mission_config(const std::filesystem::path& path);

struct GoalResult {
  int mark_id = 0;
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  bool reached = false;
  double closest = 0.0;  // m
  int steps = 0;
  double duration = 0.0;  // s
  int replans = 0;
  int recoveries = 0;
  std::string error;
};

struct PhaseRecord {
  std::string name;
  double start = 0.0;
  double duration = 0.0;
};

struct CommStats {
  std::size_t published = 0;
  std::size_t delivered = 0;
  std::size_t dropped = 0;
  std::size_t partitioned = 0;
  std::size_t transfer_bytes = 0;
  std::size_t transfer_chunks = 0;
  std::size_t retransmits = 0;
  std::string transfer_state = "NONE";
  bool hash_match = false;
};

struct MissionReport {
  bool success = false;
  std::string failure_phase;  // empty on success
  std::string failure_reason;

  // Map.
  double ate_rmse = 0.0;         // m, optimized keyframes
  double ate_rmse_odometry = 0.0;  // m, before optimization
  double iou = 0.0;
  double coverage = 0.0;
  int explore_passes = 0;
  int keyframes = 0;
  int loop_closures = 0;
  int landmarks = 0;
  int map_points = 0;

  // Victims.
  int victims_truth = 0;
  int victims_marked = 0;
  int victims_matched = 0;
  int false_marks = 0;
  std::vector<double> victim_errors;  // m, per ground-truth victim (-1 if unmatched)

  // Ground.
  bool localized = false;
  int localization_attempts = 0;
  double localization_error = 0.0;  // m
  std::vector<GoalResult> goals;
  bool payload_ok = true;
  double payload_limit = 0.0;  // kg for the configured gait
  double ground_energy_ah = 0.0;

  std::vector<PhaseRecord> phases;
  double total_time = 0.0;
  std::vector<std::string> budget_violations;
  std::vector<std::string> notes;
  CommStats comms;

  double phase_time(const std::string& name) const;
};

struct MissionOutputs {
  MissionReport report;
  MapGraph map;          // as received by the ground robot (or the aerial map if handoff failed)
  OccupancyGrid occupancy;
  OccupancyGrid truth_occupancy;
  std::vector<BusEvent> events;  // bus and mission events in time order
};

/// Validates the config, loads or generates the world and checks the
/// route and ground start against its bounds. Throws ConfigInvalid.
World prepare_world(const MissionConfig& cfg);

/// Deterministic given the config. Phase failures are recorded in the
/// report; only ConfigInvalid is thrown.
MissionOutputs run_mission(const MissionConfig& cfg);

/// Aerial loop used when no waypoints are configured.
std::vector<Vec3d> default_waypoints(const World& w, double altitude);

/// Pass iff mass <= max payload for the gait at the configured body mass.
bool payload_check(double payload, GaitName gait, const HexapodConfig& cfg = {});

/// RMSE of position error after nearest-timestamp pairing; estimated
/// samples outside the truth span (beyond `max_dt`) are skipped. Throws
/// EmptyOverlap when nothing pairs.
double compute_ate(const std::vector<TrajectorySample>& estimated, const std::vector<TrajectorySample>& truth,
                   double max_dt = 0.5);

/// OCCUPIED wherever an obstacle surface facing the open arena crosses the
/// height band, using the grid's floor convention.
OccupancyGrid rasterize_truth(const World& w, const OccupancyGrid& like, double z_min = 0.05, double z_max = 0.5);

void write_report(std::ostream& out, const MissionReport& r);
/// CSV `metric,value`.
void write_metrics_csv(std::ostream& out, const MissionReport& r);

}  // namespace coopsar
