#pragma once

// Ground navigation: layered costmap with inflation, integer-cost A* on an
// 8-connected grid, and a dynamic-window local planner over a unicycle model.

#include <coopsar/mapgraph.hpp>
#include <coopsar/worldsim.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace coopsar {

inline constexpr std::uint8_t kLethalCost = 255;
inline constexpr std::uint8_t kInscribedCost = 254;
inline constexpr std::uint8_t kMaxInflatedCost = 253;

struct CellIndex {
  int x = 0;
  int y = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

struct CostmapConfig {
  double footprint_radius = 0.25;  // m
  double inflation_radius = 0.30;  // m, footprint + margin
  double decay = 10.0;             // 1/m, exponential falloff beyond the footprint
  double z_min = 0.05;             // scan points outside the band are ignored
  double z_max = 0.5;
};

class Costmap {
 public:
  Costmap() = default;
  /// Static layer from an occupancy grid (OCCUPIED is lethal, others free).
  explicit Costmap(const OccupancyGrid& grid, const CostmapConfig& cfg = {});
  Costmap(double resolution, double origin_x, double origin_y, int cols, int rows, const CostmapConfig& cfg = {});

  double resolution() const { return resolution_; }
  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  int cols() const { return cols_; }
  int rows() const { return rows_; }
  const CostmapConfig& config() const { return cfg_; }

  bool inside(CellIndex c) const { return c.x >= 0 && c.y >= 0 && c.x < cols_ && c.y < rows_; }
  std::uint8_t cost(CellIndex c) const { return cost_[index(c)]; }
  bool is_obstacle(CellIndex c) const { return static_[index(c)] || dynamic_[index(c)]; }
  bool is_static(CellIndex c) const { return static_[index(c)] != 0; }
  bool is_dynamic(CellIndex c) const { return dynamic_[index(c)] != 0; }
  /// Cell containing a world point (floor convention).
  CellIndex cell_of(double x, double y) const;
  Eigen::Vector2d center(CellIndex c) const;
  /// Cost at a world point; outside the grid counts as lethal.
  std::uint8_t cost_at(double x, double y) const;

  void set_static(CellIndex c, bool occupied);
  void set_dynamic(CellIndex c, bool occupied);
  /// Recomputes the cost field from both obstacle layers.
  void inflate();
  /// Distance (m) from a world point to the nearest obstacle cell center,
  /// capped at `cap`.
  double clearance(double x, double y, double cap) const;

  const std::vector<std::uint8_t>& costs() const { return cost_; }

 private:
  std::size_t index(CellIndex c) const { return static_cast<std::size_t>(c.y) * cols_ + c.x; }

  double resolution_ = 0.1;
  double origin_x_ = 0.0;
  double origin_y_ = 0.0;
  int cols_ = 0;
  int rows_ = 0;
  CostmapConfig cfg_;
  std::vector<std::uint8_t> static_;
  std::vector<std::uint8_t> dynamic_;
  std::vector<std::uint8_t> cost_;
  std::vector<double> distance_;  // m, to the nearest obstacle cell center
};

/// Cost of the inflated field at distance d (m) from the nearest obstacle.
std::uint8_t inflation_cost(double d, const CostmapConfig& cfg);

struct PlannerConfig {
  // Move cost = base step (10000 straight, 14142 diagonal) + weight * cell cost.
  std::int64_t cost_weight = 100;
  // Cells at or above this cost are not traversable.
  std::uint8_t blocked_cost = kInscribedCost;
  // Extra planner-side penalty, linear from `proximity_penalty` at an
  // obstacle to zero at `proximity_radius` m; keeps paths off the thin
  // inflation band so the local planner has room to track them.
  double proximity_radius = 0.0;
  std::int64_t proximity_penalty = 0;
};

/// Per-cell entry cost added to the step length.
std::int64_t cell_penalty(const Costmap& c, CellIndex cell, const PlannerConfig& cfg);

inline constexpr std::int64_t kStraightStep = 10000;
inline constexpr std::int64_t kDiagonalStep = 14142;

struct PlannedPath {
  std::vector<CellIndex> cells;  // start .. goal
  std::int64_t cost = 0;         // in step units
  std::size_t expanded = 0;
};

/// Octile distance in step units; admissible for the move costs above.
std::int64_t octile_distance(CellIndex a, CellIndex b);

/// Throws InvalidEndpoint or NoPath. Diagonal moves may not cut blocked corners.
PlannedPath astar(const Costmap& c, CellIndex start, CellIndex goal, const PlannerConfig& cfg = {});

/// Clears dynamic obstacles along each ray up to its hit, marks hits
/// lethal, then re-inflates. Idempotent for identical scans. Rays that miss
/// clear out to their full range.
void update_costmap(Costmap& c, const DepthScan& scan);
/// Same for bare hit points, with rays cast from the robot position.
void update_costmap(Costmap& c, const std::vector<Vec3d>& points, const Pose6d& robot);

struct VelocityCommand {
  double v = 0.0;      // m/s
  double omega = 0.0;  // rad/s
};

struct RobotState {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double v = 0.0;
  double omega = 0.0;
};

/// Exact unicycle integration over dt with constant command.
RobotState unicycle_step(const RobotState& s, const VelocityCommand& cmd, double dt);

struct DwaConfig {
  double v_max = 0.3;         // m/s
  double omega_max = 1.0;     // rad/s
  double accel_v = 0.5;       // m/s^2
  double accel_omega = 2.0;   // rad/s^2
  double control_period = 0.1;
  int v_samples = 11;
  int omega_samples = 21;
  double horizon = 1.5;
  double dt = 0.1;
  double w_heading = 0.6;
  double w_clearance = 0.3;
  double w_speed = 0.1;
  double clearance_cap = 1.0;  // m, free arc length counted by the clearance term
  double lookahead = 0.8;      // m
  std::uint8_t collision_cost = kInscribedCost;
};

struct DwaCandidate {
  VelocityCommand cmd;
  std::vector<RobotState> rollout;  // states after each dt
  bool collides = false;
  double heading = 0.0;
  double clearance = 0.0;  // normalized free arc length
  double speed = 0.0;
  double score = 0.0;
};

struct DwaResult {
  VelocityCommand cmd;
  DwaCandidate best;
  Eigen::Vector2d lookahead_point = Eigen::Vector2d::Zero();
  std::size_t candidates = 0;
};

/// First path point at least `lookahead` m from the robot, scanning forward
/// from the path point closest to it; the last point when none is that far.
Eigen::Vector2d lookahead_point(const RobotState& s, const std::vector<Eigen::Vector2d>& path, double lookahead);

std::vector<DwaCandidate> dwa_candidates(const RobotState& s, const std::vector<Eigen::Vector2d>& path,
                                         const Costmap& c, const DwaConfig& cfg = {});

/// Throws AllTrajectoriesCollide when every sampled rollout hits a blocked cell.
DwaResult dwa_step(const RobotState& s, const std::vector<Eigen::Vector2d>& path, const Costmap& c,
                   const DwaConfig& cfg = {});

/// Rotate-in-place fallback toward the lookahead point, clipped to the window.
VelocityCommand recovery_command(const RobotState& s, const std::vector<Eigen::Vector2d>& path,
                                 const DwaConfig& cfg = {});

struct NavigateConfig {
  DwaConfig dwa;
  PlannerConfig planner{100, kInscribedCost, 0.7, 5000};
  int max_steps = 500;
  double goal_tolerance = 0.3;  // m
};

struct NavigateResult {
  bool reached = false;
  int steps = 0;
  double closest = 0.0;  // m, closest approach to the goal
  int replans = 0;
  int recoveries = 0;
  // Selected rollouts that entered a lethal cell; stays zero by construction.
  int lethal_rollouts = 0;
  std::vector<RobotState> trace;
};

/// Called before each control step; may update the costmap (e.g. from a
/// depth scan at the current state).
using SenseFn = std::function<void(const RobotState&, Costmap&)>;

/// A* global plan plus DWA tracking, replanning when the path becomes
/// blocked and rotating in place when every rollout collides. Throws NoPath
/// or InvalidEndpoint when no plan exists at the start.
NavigateResult navigate(RobotState start, const Eigen::Vector2d& goal, Costmap& c, const NavigateConfig& cfg = {},
                        const SenseFn& sense = {});

/// Nearest traversable cell by breadth-first search, or the cell itself.
CellIndex nearest_passable(const Costmap& c, CellIndex from, const PlannerConfig& cfg = {});

std::vector<Eigen::Vector2d> path_points(const Costmap& c, const std::vector<CellIndex>& cells);

void write_path_csv(std::ostream& out, const Costmap& c, const std::vector<CellIndex>& cells);
/// Costmap as P5 graymap: lethal/inscribed 0, otherwise 254 - cost.
void write_costmap_pgm(std::ostream& out, const Costmap& c);

}  // namespace coopsar
