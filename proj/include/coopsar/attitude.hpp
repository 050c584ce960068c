#pragma once

// Quaternion complementary filter (gyro prediction followed by
// accelerometer and magnetometer delta-quaternion corrections).
//
// The filter state `q` maps body vectors to the global frame (z up,
// magnetic north along +x). The corrections are composed on the
// global-to-local quaternion conj(q), i.e. conj(q_new) = conj(q_w) ⊗ Δq_acc ⊗ Δq_mag,
// which makes Δq_mag a rotation about the global z axis only.

#include <coopsar/geom.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace coopsar {

struct ImuSample {
  double timestamp = 0.0;
  Vec3d gyro = Vec3d::Zero();   // rad/s, body frame
  Vec3d accel = Vec3d::Zero();  // m/s^2 specific force, body frame
  std::optional<Vec3d> mag;     // field direction, body frame
};

struct AttitudeConfig {
  double gain_acc = 0.02;
  double gain_mag = 0.01;
  double gravity = 9.81;
  // Accelerometer gain ramps from full at `accel_ramp_start` relative
  // magnitude error down to zero at `accel_ramp_end`.
  double accel_ramp_start = 0.1;
  double accel_ramp_end = 0.2;
  double slerp_threshold_rad = 10.0 * std::numbers::pi / 180.0;
  bool lowpass_enabled = false;
  double lowpass_cutoff_hz = 20.0;
};

struct AttitudeFilterState {
  Quatd q;
  double last_timestamp = 0.0;
  double gain_acc = 0.02;
  double gain_mag = 0.01;
  bool initialized = false;
};

AttitudeFilterState make_attitude_state(const AttitudeConfig& cfg = {});

/// q ⊗ exp(gyro * dt / 2).
Quatd predict_from_gyro(const AttitudeFilterState& state, const Vec3d& gyro, double dt);

/// Linear ramp applied to the accelerometer gain for non-gravitational motion.
double adaptive_accel_factor(const Vec3d& accel, const AttitudeConfig& cfg = {});

/// Tilt correction. The returned delta has a zero z component; `gain` is
/// attenuated by `adaptive_accel_factor`.
Quatd accel_correction(const Quatd& q_pred, const Vec3d& accel, double gain, const AttitudeConfig& cfg = {});

/// Heading correction of the form (w, 0, 0, z) aligning the horizontal field with +x.
Quatd mag_correction(const Quatd& q_acc_corrected, const Vec3d& mag, double gain, const AttitudeConfig& cfg = {});

/// Composes a delta-quaternion correction onto a body-to-global attitude.
Quatd apply_correction(const Quatd& q, const Quatd& delta);

/// Attitude implied by a single gravity (and optional field) reading.
Quatd attitude_from_vectors(const Vec3d& accel, const std::optional<Vec3d>& mag);

AttitudeFilterState filter_step(const AttitudeFilterState& state, const ImuSample& sample,
                                const AttitudeConfig& cfg = {});

/// First-order low-pass on raw IMU channels.
class ImuLowPass {
 public:
  explicit ImuLowPass(double cutoff_hz) : cutoff_hz_(cutoff_hz) {}
  ImuSample operator()(const ImuSample& s);

 private:
  double cutoff_hz_;
  std::optional<ImuSample> prev_;
};

struct AttitudeEstimate {
  double timestamp = 0.0;
  Quatd q;
};

/// Runs the filter over a whole stream (applying the optional low-pass).
std::vector<AttitudeEstimate> run_attitude_filter(const std::vector<ImuSample>& samples,
                                                  const AttitudeConfig& cfg = {});

// IMU replay CSV: header `t,gx,gy,gz,ax,ay,az[,mx,my,mz]` plus optional
// ground-truth columns `roll,pitch,yaw` (radians).
struct ImuLog {
  std::vector<ImuSample> samples;
  std::vector<EulerRpyd> truth;  // empty unless the truth columns are present
  bool has_mag = false;
};

ImuLog read_imu_csv(std::istream& in);
void write_imu_csv(std::ostream& out, const std::vector<ImuSample>& samples,
                   const std::vector<EulerRpyd>* truth = nullptr);

}  // namespace coopsar
