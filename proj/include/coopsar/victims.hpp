#pragma once

// Parametric victim detector and victim marks (arrow from the robot towards
// the detected person, plus a ranged position estimate).

#include <coopsar/geom.hpp>
#include <coopsar/worldsim.hpp>

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace coopsar {

struct Detection {
  double bearing = 0.0;    // rad, camera frame
  double elevation = 0.0;  // rad
  double range = 0.0;      // m
  double confidence = 0.0;
  double timestamp = 0.0;
  int victim_id = -1;  // ground-truth id; -1 for a false positive
};

struct DetectorConfig {
  double hfov_deg = 87.0;
  double vfov_deg = 58.0;
  double near_range = 4.0;  // p_detect = p_near up to here
  double far_range = 8.0;   // linear down to p_far here, zero beyond
  double p_near = 0.95;
  double p_far = 0.5;
  double false_positive_rate = 0.0;  // expected false detections per call
  double range_sigma = 0.05;         // m, depth noise on the reported range
};

double detection_probability(double range, const DetectorConfig& cfg);

/// Every in-frustum, unoccluded victim is detected with p_detect(range).
std::vector<Detection> detect_victims(const Pose6d& camera, const World& world, const DetectorConfig& cfg,
                                      std::uint64_t seed, double timestamp = 0.0);

enum class MarkSource { Manual, Automatic };

struct VictimMark {
  int id = 0;
  MarkSource source = MarkSource::Automatic;
  Vec3d anchor = Vec3d::Zero();     // robot position at marking time
  Vec3d direction = Vec3d::UnitX(); // unit arrow
  double range = 0.0;
  Vec3d estimate = Vec3d::Zero();   // anchor + range * direction
  double timestamp = 0.0;
};

VictimMark mark_victim(const Pose6d& robot, const Detection& d, MarkSource source, int id = 0);

/// Greedy clustering of marks closer than `radius`; manual marks outrank
/// automatic ones inside a cluster. Survivors are pairwise >= radius apart.
std::vector<VictimMark> dedupe_marks(const std::vector<VictimMark>& marks, double radius = 0.75);

const char* to_string(MarkSource s);

/// CSV `id,source,ax,ay,az,dx,dy,dz,ex,ey,ez`.
void write_marks_csv(std::ostream& out, const std::vector<VictimMark>& marks);

}  // namespace coopsar
