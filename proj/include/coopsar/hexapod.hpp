#pragma once

// Hexapod kinematics and quasi-static model: 3-DOF leg FK/IK on a DH chain,
// gait schedules, support-polygon stability, stance load distribution and
// joint torques, payload limits, body posing and the body-height current
// model.

#include <coopsar/geom.hpp>

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace coopsar {

enum class LegId { L1, R1, L2, R2, L3, R3 };
inline constexpr int kLegCount = 6;
const char* to_string(LegId leg);

struct JointAngles {
  double coxa = 0.0;
  double femur = 0.0;
  double tibia = 0.0;
};

struct JointLimits {
  double min = 0.0;
  double max = 0.0;
};

struct LegMount {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();  // body frame, m
  double yaw = 0.0;                                      // rad
};

// DH table per leg (after the fixed mount transform Trans(mount) Rz(yaw)):
//   joint  theta         d  a      alpha
//   coxa   q1            0  coxa   +90 deg
//   femur  q2            0  femur  0
//   tibia  q3            0  tibia  0
// Zero pose: all links horizontal along the mount yaw. Positive femur
// raises the knee; the knee-up branch has tibia <= 0.
struct LegGeometry {
  double coxa = 0.052;
  double femur = 0.066;
  double tibia = 0.132;
  std::array<LegMount, kLegCount> mounts;
  JointLimits coxa_limits{-105.0 * std::numbers::pi / 180, 105.0 * std::numbers::pi / 180};
  JointLimits femur_limits{-105.0 * std::numbers::pi / 180, 105.0 * std::numbers::pi / 180};
  JointLimits tibia_limits{-165.0 * std::numbers::pi / 180, 30.0 * std::numbers::pi / 180};

  LegGeometry();
};

/// Foot position in the body frame; throws JointLimitViolation.
Vec3d leg_fk(const LegGeometry& g, LegId leg, const JointAngles& q);

/// Knee-up closed-form inverse; throws Unreachable or JointLimitViolation.
JointAngles leg_ik(const LegGeometry& g, LegId leg, const Vec3d& foot);

/// Joint origins (coxa, femur, knee) and foot in the body frame.
std::array<Vec3d, 4> leg_chain_points(const LegGeometry& g, LegId leg, const JointAngles& q);

/// Torques (N*m) about the coxa, femur and tibia axes from a force applied
/// at the foot (body frame, N), signed by the right-hand rule on each axis.
JointAngles leg_joint_torques(const LegGeometry& g, LegId leg, const JointAngles& q, const Vec3d& foot_force);

enum class GaitName { Wave, Ripple, Amble, Tripod };
const char* to_string(GaitName g);
GaitName gait_from_string(const std::string& s);

struct GaitSpec {
  GaitName name = GaitName::Tripod;
  double duty = 0.5;
  std::array<double, kLegCount> offsets{};  // L1, R1, L2, R2, L3, R3
};

GaitSpec gait_spec(GaitName name);

struct LegPhase {
  bool swing = false;
  double fraction = 0.0;  // progress through the current stance or swing phase
};

/// Leg is in swing iff frac(t / period - offset) >= duty, with values within
/// 1e-9 of a boundary snapped onto it.
std::array<LegPhase, kLegCount> gait_phase(const GaitSpec& spec, double t, double period);

int stance_count(const std::array<LegPhase, kLegCount>& phases);

/// Signed distance from the CoM ground projection to the support polygon
/// boundary (positive inside). Throws DegenerateSupport.
double static_stability(const std::vector<Eigen::Vector2d>& stance_feet, const Eigen::Vector2d& com);

struct HexapodConfig {
  LegGeometry geometry;
  double stance_radius = 0.1445;  // horizontal mount-to-foot distance, m (tools/hexapod_calibrate)
  double body_mass = 3.51;       // kg
  double gravity = 9.81;
  double stall_torque = 1.5;     // N*m
  double safety_margin = 0.25;   // fraction of stall torque held in reserve
  Eigen::Vector2d com = Eigen::Vector2d::Zero();             // body CoM, body frame
  Eigen::Vector2d payload_offset = Eigen::Vector2d::Zero();  // payload CoM, body frame
  // Current model I(h) = a h^2 + b h + c (A, h in m).
  std::array<double, 3> stance_current{100.0, -28.0, 3.16};
  std::array<double, 3> gait_current{150.0, -36.0, 5.18};
  double gait_period = 0.4;    // s per cycle
  double stride_length = 0.06; // m of body travel per stance phase
  double battery_ah = 5.2;

  double allowed_torque() const { return stall_torque * (1.0 - safety_margin); }
};

HexapodConfig default_hexapod_config();
/// Reads the JSON document used in config/; missing keys keep defaults.
HexapodConfig read_hexapod_config(std::istream& in);
void write_hexapod_config(std::ostream& out, const HexapodConfig& cfg);

/// Feet on the ground at the given body height, each `stance_radius` from
/// its mount along the mount yaw (body frame).
std::array<Vec3d, kLegCount> default_feet(const HexapodConfig& cfg, double body_height);

struct StanceConfig {
  std::array<bool, kLegCount> stance{};
  std::array<Vec3d, kLegCount> feet{};  // body frame
};

StanceConfig stance_from_phases(const HexapodConfig& cfg, const std::array<LegPhase, kLegCount>& phases,
                                double body_height);

struct TorqueEstimate {
  double coxa = 0.0;   // max over stance legs, N*m
  double femur = 0.0;
  double tibia = 0.0;
  std::array<double, kLegCount> leg_force{};  // vertical ground reaction, N
  double max() const { return std::max({coxa, femur, tibia}); }
};

/// Statically balanced vertical foot forces chosen to minimize the largest
/// joint torque (a small LP solved by vertex enumeration). Throws
/// DegenerateSupport when fewer than three feet or the CoM is unsupported.
TorqueEstimate joint_torque_estimate(const HexapodConfig& cfg, const StanceConfig& stance, double payload);

/// Worst-case estimate over one gait cycle.
TorqueEstimate gait_torque_estimate(const HexapodConfig& cfg, const GaitSpec& gait, double payload,
                                    double body_height = 0.12);

/// Largest payload (kg) keeping the worst-case torque at or below the
/// allowed torque; zero when the body alone exceeds it.
double max_payload(const HexapodConfig& cfg, const GaitSpec& gait, double body_height = 0.12);

enum class HeightMode { Stance, Gait };

double body_current(const HexapodConfig& cfg, HeightMode mode, double h);
/// Argmin of the convex current curve; throws ConfigInvalid when not convex.
double optimal_body_height(const HexapodConfig& cfg, HeightMode mode);

/// Body speed for a gait: stride per stance phase.
double gait_speed(const HexapodConfig& cfg, const GaitSpec& gait);

struct BodyPose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.12;  // body height above ground
  double roll = 0.0;
  double pitch = 0.0;
};

struct PoseEnvelope {
  double max_xy = 0.05;
  double min_z = 0.05;
  double max_z = 0.20;
  double max_tilt = 20.0 * std::numbers::pi / 180.0;
};

Pose6d body_transform(const BodyPose& p);

/// Joint angles keeping world-frame feet fixed under the new body pose.
/// Throws Unreachable (outside the envelope or a leg's workspace).
std::array<JointAngles, kLegCount> apply_body_pose(const LegGeometry& g, const BodyPose& p,
                                                   const std::array<Vec3d, kLegCount>& world_feet,
                                                   const PoseEnvelope& env = {});

/// CSV `gait,joint,torque_nm,margin_pct` at the configured body mass plus payload.
void write_torque_csv(std::ostream& out, const HexapodConfig& cfg, double payload = 0.0);

}  // namespace coopsar
