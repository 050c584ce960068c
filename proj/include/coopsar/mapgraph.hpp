#pragma once

// Feature map graph: keyframes with landmark-id signatures, odometry and
// loop-closure edges, pose-graph optimization, read-only localization and a
// 2D occupancy projection.

#include <coopsar/geom.hpp>
#include <coopsar/victims.hpp>
#include <coopsar/worldsim.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace coopsar {

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

struct BodyObservation {
  int landmark_id = 0;
  Vec3d position = Vec3d::Zero();  // body (camera) frame
};

struct Keyframe {
  int id = 0;
  Pose6d pose;
  std::vector<int> signature;  // sorted landmark ids
  std::vector<BodyObservation> observations;
  double timestamp = 0.0;
};

enum class EdgeKind { Odometry, LoopClosure };

struct GraphEdge {
  int from = 0;
  int to = 0;
  EdgeKind kind = EdgeKind::Odometry;
  Pose6d relative;  // T_from^-1 * T_to
  Matrix6d information = Matrix6d::Identity();
};

enum class MappingState { Active, Paused };

struct MappingEvent {
  double timestamp = 0.0;
  MappingState from = MappingState::Active;
  MappingState to = MappingState::Active;
};

struct LandmarkEstimate {
  Vec3d position = Vec3d::Zero();
  int count = 0;
};

struct MapGraph {
  std::vector<Keyframe> keyframes;
  std::vector<GraphEdge> edges;
  std::map<int, LandmarkEstimate> landmarks;
  std::vector<Vec3d> points;  // obstacle surface points (depth returns)
  std::vector<VictimMark> victims;
  MappingState state = MappingState::Active;
  std::vector<MappingEvent> events;

  const Keyframe* find(int id) const;
};

/// Builds a sorted, duplicate-free signature from observations.
std::vector<int> signature_of(const std::vector<BodyObservation>& obs);

double jaccard(const std::vector<int>& a, const std::vector<int>& b);

struct KeyframeThresholds {
  double translation = 0.3;                        // m
  double rotation = 15.0 * std::numbers::pi / 180.0;  // rad
  double odom_sigma_translation = 0.02;            // information of odometry edges
  double odom_sigma_rotation = 0.01;
};

/// Returns true when a keyframe was appended.
bool maybe_add_keyframe(MapGraph& g, const Pose6d& odom_pose, const std::vector<BodyObservation>& obs,
                        double timestamp, const KeyframeThresholds& th = {});

/// ACTIVE on valid VO, PAUSED otherwise; transitions are logged.
MappingState mapping_gate(MapGraph& g, const VoEstimate& vo);

struct LoopClosureConfig {
  double tau_sim = 0.3;
  int exclude_recent = 5;
  int min_common = 3;
  double sigma_translation = 0.01;
  double sigma_rotation = 0.005;
};

/// Best earlier keyframe by signature similarity; throws
/// InsufficientCorrespondences when accepted with < 3 shared landmarks.
std::optional<GraphEdge> detect_loop_closure(const MapGraph& g, const Keyframe& query,
                                             const LoopClosureConfig& cfg = {});

/// T minimizing sum |T * a_i - b_i|^2 over pairs (a_i, b_i).
Pose6d rigid_align(const std::vector<std::pair<Vec3d, Vec3d>>& pairs);

struct OptimizerConfig {
  int max_iterations = 50;
  double initial_damping = 1e-4;
  double relative_tolerance = 1e-9;
};

struct OptimizationResult {
  MapGraph graph;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> accepted_costs;  // cost after each accepted step, starting with the initial one
};

double pose_graph_cost(const MapGraph& g);

/// Damped Gauss-Newton (Levenberg-Marquardt) over keyframe poses, keyframe
/// 0 fixed. Landmark estimates are rebuilt from the optimized poses.
OptimizationResult optimize_pose_graph(const MapGraph& g, const OptimizerConfig& cfg = {});

/// Re-averages landmark estimates from keyframe poses and observations.
void rebuild_landmarks(MapGraph& g);

struct LocalizationConfig {
  double tau_loc = 0.2;
  int min_common = 3;
};

struct LocalizationResult {
  Pose6d pose;
  int keyframe_id = 0;
  double similarity = 0.0;
  int correspondences = 0;
};

/// Read-only: throws LocalizationFailed.
LocalizationResult localize(const MapGraph& g, const std::vector<BodyObservation>& obs,
                            const LocalizationConfig& cfg = {});

enum class Cell : std::uint8_t { Free, Occupied, Unknown };

struct OccupancyGrid {
  double resolution = 0.1;
  double origin_x = 0.0;
  double origin_y = 0.0;
  int cols = 0;
  int rows = 0;
  std::vector<Cell> cells;  // row-major, row = y index

  OccupancyGrid() = default;
  OccupancyGrid(double res, double ox, double oy, int c, int r, Cell fill = Cell::Unknown);

  bool inside(int cx, int cy) const { return cx >= 0 && cy >= 0 && cx < cols && cy < rows; }
  Cell at(int cx, int cy) const { return cells[static_cast<std::size_t>(cy) * cols + cx]; }
  Cell& at(int cx, int cy) { return cells[static_cast<std::size_t>(cy) * cols + cx]; }
  /// Cell containing a world point (floor convention).
  std::pair<int, int> cell_of(double x, double y) const;
  Eigen::Vector2d center(int cx, int cy) const;
  std::size_t count(Cell c) const;
};

struct OccupancyConfig {
  double z_min = 0.05;
  double z_max = 0.5;
  double resolution = 0.1;
  double sensing_radius = 4.0;
  // Grid extent; derived from the graph content when unset.
  std::optional<Eigen::Vector2d> origin;
  std::optional<Eigen::Vector2i> size;
};

OccupancyGrid project_occupancy(const MapGraph& g, const OccupancyConfig& cfg = {});

/// Intersection over union of the OCCUPIED cells of two same-shaped grids.
double occupied_iou(const OccupancyGrid& a, const OccupancyGrid& b);

// Map-graph text file. Records:
//   COOPSAR_MAP 1
//   KF id t x y z qw qx qy qz | sig...
//   OBS kf lm x y z
//   EDGE from to odometry|loop x y z qw qx qy qz
//   LM id x y z
//   PT x y z
//   VICTIM id manual|automatic ax ay az dx dy dz ex ey ez
void write_map_graph(std::ostream& out, const MapGraph& g);
MapGraph read_map_graph(std::istream& in);

/// P5 graymap (OCCUPIED=0, FREE=254, UNKNOWN=127), rows written top (max y) first.
void write_pgm(std::ostream& out, const OccupancyGrid& grid);
/// JSON sidecar with resolution, origin and size.
void write_grid_metadata(std::ostream& out, const OccupancyGrid& grid);
OccupancyGrid read_pgm(std::istream& pgm, double resolution, double origin_x, double origin_y);

}  // namespace coopsar
