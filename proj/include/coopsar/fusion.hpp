#pragma once

// Twelve-state EKF fusing visual odometry (full state) with attitude
// estimates (roll/pitch/yaw only) through selection-matrix partial updates.

#include <coopsar/geom.hpp>

#include <Eigen/Core>

#include <array>
#include <iosfwd>
#include <vector>

namespace coopsar {

namespace state_index {
inline constexpr int kX = 0, kY = 1, kZ = 2;
inline constexpr int kRoll = 3, kPitch = 4, kYaw = 5;
inline constexpr int kVx = 6, kVy = 7, kVz = 8;
inline constexpr int kRollRate = 9, kPitchRate = 10, kYawRate = 11;
}  // namespace state_index

inline constexpr int kStateSize = 12;
using StateVector = Eigen::Matrix<double, kStateSize, 1>;
using StateCovariance = Eigen::Matrix<double, kStateSize, kStateSize>;

struct FusionState {
  StateVector x = StateVector::Zero();
  StateCovariance covariance = StateCovariance::Identity();
  double timestamp = 0.0;
  bool gimbal_warning = false;  // set when |pitch| > 85 deg

  Pose6d pose() const;
  EulerRpyd attitude() const;
};

struct Measurement {
  Eigen::VectorXd values;
  std::vector<int> mask;  // state indices, one per value
  Eigen::VectorXd noise;  // variances, one per value
  double timestamp = 0.0;
};

/// Continuous white-noise intensities; the predict step adds Q * dt.
struct ProcessNoise {
  double position = 0.01;      // m^2/s^3
  double angle = 0.01;         // rad^2/s^3
  double velocity = 0.01;      // m^2/s^3
  double angular_rate = 0.01;  // rad^2/s^3

  StateCovariance matrix() const;
};

FusionState ekf_predict(const FusionState& state, double dt, const ProcessNoise& q = {});

/// Kalman update with an m x 12 selection matrix built from `m.mask`.
FusionState ekf_update_partial(const FusionState& state, const Measurement& m);

Eigen::MatrixXd selection_matrix(const std::vector<int>& mask);

/// Absolute visual-odometry pose sample; invalid samples carry no pose.
struct VoPoseSample {
  double timestamp = 0.0;
  Pose6d pose;
  bool valid = true;
};

struct AttitudeSample {
  double timestamp = 0.0;
  EulerRpyd attitude;
};

struct FusionConfig {
  ProcessNoise process;
  double vo_position_var = 1e-4;
  double vo_angle_var = 1e-3;
  double vo_velocity_var = 1e-2;
  double vo_rate_var = 1e-2;
  double ae_angle_var = 1e-4;
  double initial_var = 1.0;
};

enum class FusedSource { VisualOdometry, AttitudeEstimate };

struct FusedOdometry {
  double timestamp = 0.0;
  Pose6d pose;
  EulerRpyd attitude;
  double covariance_trace = 0.0;
  FusedSource source = FusedSource::VisualOdometry;
};

/// Pose-only mask for the first VO sample (no rate yet), full mask after.
Measurement vo_measurement(const VoPoseSample& cur, const VoPoseSample* prev_valid, const FusionConfig& cfg);
Measurement ae_measurement(const AttitudeSample& ae, const FusionConfig& cfg);

/// Merges both streams in time order (VO first on ties). Every VO event
/// emits an output; an AE event emits one only if no VO event was processed
/// since the previous AE event.
std::vector<FusedOdometry> fuse_streams(const std::vector<VoPoseSample>& vo, const std::vector<AttitudeSample>& ae,
                                        const FusionConfig& cfg = {});

/// CSV `t,x,y,z,roll,pitch,yaw,cov_trace`.
void write_fused_csv(std::ostream& out, const std::vector<FusedOdometry>& odom);

}  // namespace coopsar
