#pragma once

// Synthetic disaster arena and the sensor models that observe it: IMU,
// landmark camera, visual odometry with feature-loss events, and depth rays.
//
// Frames: world z is up, magnetic north is +x. Camera frames look along +x
// with +y left and +z up, so bearing = atan2(y, x) and
// elevation = atan2(z, hypot(x, y)).

#include <coopsar/attitude.hpp>
#include <coopsar/geom.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

namespace coopsar {

inline constexpr double kGravity = 9.81;

struct Landmark {
  int id = 0;
  Vec3d position = Vec3d::Zero();
  int descriptor = 0;
};

struct Box {
  Vec3d min = Vec3d::Zero();
  Vec3d max = Vec3d::Zero();

  bool contains(const Vec3d& p, double margin = 0.0) const;
  Vec3d center() const { return 0.5 * (min + max); }
  /// Distance from p to the box surface (0 on the surface, also 0 inside).
  double distance(const Vec3d& p) const;
};

struct Victim {
  int id = 0;
  Pose6d pose;
};

/// Regular height grid; cells outside the grid have height 0.
struct Terrain {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double resolution = 1.0;
  int rows = 0;
  int cols = 0;
  std::vector<double> heights;  // row-major, rows along y

  double height_at(double x, double y) const;
};

struct World {
  std::vector<Landmark> landmarks;
  std::vector<Box> obstacles;
  std::vector<Victim> victims;
  Box bounds;
  Terrain terrain;
  std::uint64_t seed = 0;

  /// Throws ConfigInvalid on duplicate landmark ids or out-of-bounds victims.
  void validate() const;
  const Landmark* find_landmark(int id) const;
};

struct WorldGenConfig {
  double width = 20.0;
  double depth = 15.0;
  double wall_height = 2.0;
  double wall_thickness = 0.2;
  int landmark_count = 300;
  int min_obstacles = 5;
  int max_obstacles = 10;
  int min_victims = 1;
  int max_victims = 5;
  std::optional<int> victim_count;  // overrides the random count
  double victim_height = 0.2;
  // Obstacles and victims stay this far inside the walls so the default
  // flight loop and the ground robot have room to move.
  double keep_out_margin = 3.0;
};

/// Seeded arena: perimeter walls, box obstacles, landmarks on vertical faces.
World generate_world(std::uint64_t seed, const WorldGenConfig& cfg = {});

World read_world(std::istream& in);
void write_world(std::ostream& out, const World& world);

struct TrajectorySample {
  double timestamp = 0.0;
  Pose6d pose;
};

/// Piecewise interpolation (linear position, slerp orientation) of poses.
class TrueTrajectory {
 public:
  TrueTrajectory() = default;
  explicit TrueTrajectory(std::vector<TrajectorySample> samples);

  const std::vector<TrajectorySample>& samples() const { return samples_; }
  double start_time() const { return samples_.front().timestamp; }
  double end_time() const { return samples_.back().timestamp; }
  bool empty() const { return samples_.empty(); }

  Pose6d pose_at(double t) const;
  /// World-frame velocity (m/s) of the segment containing t.
  Vec3d velocity_at(double t) const;
  /// Body-frame angular rate (rad/s) of the segment containing t.
  Vec3d body_rate_at(double t) const;
  /// World-frame acceleration by central difference with step h.
  Vec3d acceleration_at(double t, double h = 0.05) const;

 private:
  std::size_t segment_index(double t) const;
  std::vector<TrajectorySample> samples_;
};

/// Kinematic waypoint follower: constant speed, yaw rate-limited towards
/// the direction of travel. Sampled at `rate_hz`.
TrueTrajectory make_waypoint_trajectory(const std::vector<Vec3d>& waypoints, double speed, double rate_hz,
                                        double max_yaw_rate = 1.0, double start_time = 0.0,
                                        std::optional<double> initial_yaw = std::nullopt);

struct ImuNoiseConfig {
  double gyro_sigma = 0.0;
  double accel_sigma = 0.0;
  double mag_sigma = 0.0;
  Vec3d gyro_bias = Vec3d::Zero();
  bool with_mag = true;
};

/// Deterministic per (seed, t).
ImuSample sample_imu(const TrueTrajectory& traj, double t, const ImuNoiseConfig& noise, std::uint64_t seed);

struct CameraConfig {
  double hfov_deg = 87.0;
  double vfov_deg = 58.0;
  double max_range = 8.0;
  double min_range = 0.1;
};

struct LandmarkObservation {
  int id = 0;
  double bearing = 0.0;
  double elevation = 0.0;
  double range = 0.0;

  Vec3d point() const;  // camera-frame position
};

/// Landmarks inside the frustum, within range and not hidden by any box.
std::vector<LandmarkObservation> observe_landmarks(const Pose6d& camera, const World& world,
                                                   const CameraConfig& cfg = {});

Vec3d spherical_to_point(double bearing, double elevation, double range);

/// Whether the open segment a -> b passes through any obstacle box. The
/// endpoint itself may lie on a box surface.
bool segment_occluded(const Vec3d& a, const Vec3d& b, const std::vector<Box>& boxes);

struct VoNoiseConfig {
  double sigma_translation = 0.01;  // m per frame at one visible feature
  double sigma_rotation = 0.002;    // rad per frame at one visible feature
  int min_visible = 15;
};

struct VoEstimate {
  Pose6d relative;
  bool valid = false;
  int visible_count = 0;
  double timestamp = 0.0;
};

VoEstimate simulate_vo(const Pose6d& prev, const Pose6d& cur, int visible_count, const VoNoiseConfig& noise,
                       std::uint64_t seed, double timestamp = 0.0);

struct DepthConfig {
  double hfov_deg = 87.0;
  double resolution_deg = 1.0;
  std::vector<double> elevations_deg{0.0};
  double max_range = 6.0;
};

struct DepthRay {
  Vec3d direction = Vec3d::UnitX();  // world frame, unit
  double range = 0.0;                // hit distance, or max range
  bool hit = false;
};

struct DepthScan {
  Pose6d origin;
  std::vector<DepthRay> rays;

  std::vector<Vec3d> points() const;  // world-frame hit points
};

DepthScan depth_scan(const Pose6d& sensor, const World& world, const DepthConfig& cfg = {});

/// Entry distance of a ray into a box, if any, within [0, max_range].
std::optional<double> ray_box_entry(const Vec3d& origin, const Vec3d& dir, const Box& box, double max_range);

/// 64-bit seed mixing (splitmix64) used to derive per-call RNG streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, double t);

}  // namespace coopsar
