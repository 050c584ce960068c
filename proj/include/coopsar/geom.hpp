#pragma once

// Quaternion, Euler and rigid-transform primitives.
//
// Conventions:
//  * Hamilton quaternions, scalar first, right-handed frames.
//  * A pose or quaternion maps body-frame vectors into the parent frame.
//  * Euler angles are intrinsic Z-Y-X (yaw, then pitch, then roll):
//      R = Rz(yaw) * Ry(pitch) * Rx(roll)
//  * At |pitch| = pi/2 roll is set to 0 and the full heading goes to yaw.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace coopsar {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;

/// Wraps an angle to (-pi, pi].
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  Scalar r = std::remainder(a, two_pi);
  if (r <= -std::numbers::pi_v<Scalar>) r += two_pi;
  return r;
}

template <typename Scalar>
class UnitQuaternion {
 public:
  using Coeffs = Eigen::Quaternion<Scalar>;

  UnitQuaternion() : q_(Scalar(1), Scalar(0), Scalar(0), Scalar(0)) {}

  /// Normalizes and canonicalizes (w >= 0) the given components.
  UnitQuaternion(Scalar w, Scalar x, Scalar y, Scalar z) : q_(w, x, y, z) { fix(); }

  explicit UnitQuaternion(const Coeffs& q) : q_(q) { fix(); }

  static UnitQuaternion identity() { return {}; }

  static UnitQuaternion from_axis_angle(const Vec3<Scalar>& axis, Scalar angle) {
    const Vec3<Scalar> u = axis.normalized();
    const Scalar s = std::sin(angle / Scalar(2));
    return {std::cos(angle / Scalar(2)), s * u.x(), s * u.y(), s * u.z()};
  }

  /// Quaternion exponential of the pure quaternion (0, v).
  static UnitQuaternion exp(const Vec3<Scalar>& v) {
    const Scalar n = v.norm();
    if (n < Scalar(1e-12)) return {Scalar(1), v.x(), v.y(), v.z()};
    const Scalar s = std::sin(n) / n;
    return {std::cos(n), s * v.x(), s * v.y(), s * v.z()};
  }

  /// Rotation of |rv| radians about rv.
  static UnitQuaternion from_rotation_vector(const Vec3<Scalar>& rv) { return exp(rv / Scalar(2)); }

  static UnitQuaternion about_z(Scalar angle) { return {std::cos(angle / 2), 0, 0, std::sin(angle / 2)}; }

  static UnitQuaternion from_matrix(const Mat3<Scalar>& r) { return UnitQuaternion(Coeffs(r)); }

  Scalar w() const { return q_.w(); }
  Scalar x() const { return q_.x(); }
  Scalar y() const { return q_.y(); }
  Scalar z() const { return q_.z(); }
  Vec3<Scalar> vec() const { return q_.vec(); }
  const Coeffs& coeffs() const { return q_; }

  Mat3<Scalar> matrix() const { return q_.toRotationMatrix(); }
  Vec3<Scalar> rotate(const Vec3<Scalar>& v) const { return q_ * v; }

  UnitQuaternion conjugate() const {
    UnitQuaternion r;
    r.q_ = q_.conjugate();
    r.canonicalize();
    return r;
  }
  UnitQuaternion inverse() const { return conjugate(); }

  /// Rotation vector (axis * angle), angle in [0, pi].
  Vec3<Scalar> log() const {
    const Scalar n = q_.vec().norm();
    if (n < Scalar(1e-12)) return Scalar(2) * q_.vec();
    const Scalar angle = Scalar(2) * std::atan2(n, q_.w());
    return q_.vec() * (angle / n);
  }

  Scalar angle() const { return Scalar(2) * std::atan2(q_.vec().norm(), std::abs(q_.w())); }

  /// Smallest rotation angle taking this attitude to `other`.
  Scalar angular_distance(const UnitQuaternion& other) const { return (conjugate() * other).angle(); }

  friend UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
    return UnitQuaternion(a.q_ * b.q_);
  }

  bool operator==(const UnitQuaternion& o) const {
    return q_.w() == o.q_.w() && q_.x() == o.q_.x() && q_.y() == o.q_.y() && q_.z() == o.q_.z();
  }

 private:
  void fix() {
    const Scalar n = q_.norm();
    if (n > Scalar(0)) q_.coeffs() /= n;
    canonicalize();
  }

  void canonicalize() {
    bool flip = q_.w() < Scalar(0);
    if (q_.w() == Scalar(0)) {
      // Pick the representative whose first non-zero imaginary part is positive.
      for (int i = 0; i < 3; ++i) {
        if (q_.vec()[i] != Scalar(0)) {
          flip = q_.vec()[i] < Scalar(0);
          break;
        }
      }
    }
    if (flip) q_.coeffs() = -q_.coeffs();
  }

  Coeffs q_;
};

using Quatd = UnitQuaternion<double>;

/// Hamilton product a ⊗ b, renormalized and canonicalized.
template <typename Scalar>
UnitQuaternion<Scalar> quat_multiply(const UnitQuaternion<Scalar>& a, const UnitQuaternion<Scalar>& b) {
  return a * b;
}

/// Interpolates from identity towards `delta` by `fraction` in [0, 1].
/// Uses normalized lerp when the full delta is below `slerp_threshold`
/// radians, slerp otherwise.
template <typename Scalar>
UnitQuaternion<Scalar> scale_rotation(const UnitQuaternion<Scalar>& delta, Scalar fraction, Scalar slerp_threshold) {
  if (fraction >= Scalar(1)) return delta;
  if (fraction <= Scalar(0)) return UnitQuaternion<Scalar>::identity();
  if (delta.angle() < slerp_threshold) {
    const Scalar a = Scalar(1) - fraction;
    return {a + fraction * delta.w(), fraction * delta.x(), fraction * delta.y(), fraction * delta.z()};
  }
  const Scalar omega = std::acos(std::clamp(delta.w(), Scalar(-1), Scalar(1)));
  const Scalar so = std::sin(omega);
  const Scalar a = std::sin((Scalar(1) - fraction) * omega) / so;
  const Scalar b = std::sin(fraction * omega) / so;
  return {a + b * delta.w(), b * delta.x(), b * delta.y(), b * delta.z()};
}

template <typename Scalar>
struct EulerRpy {
  Scalar roll{0};
  Scalar pitch{0};
  Scalar yaw{0};
};

using EulerRpyd = EulerRpy<double>;

template <typename Scalar>
EulerRpy<Scalar> quat_to_euler(const UnitQuaternion<Scalar>& q) {
  const Mat3<Scalar> r = q.matrix();
  const Scalar cp = std::hypot(r(2, 1), r(2, 2));
  EulerRpy<Scalar> e;
  e.pitch = std::atan2(-r(2, 0), cp);
  if (cp < Scalar(1e-12)) {
    e.pitch = std::copysign(std::numbers::pi_v<Scalar> / Scalar(2), -r(2, 0));
    e.roll = Scalar(0);
    e.yaw = wrap_angle(std::atan2(-r(0, 1), r(1, 1)));
    return e;
  }
  e.roll = wrap_angle(std::atan2(r(2, 1), r(2, 2)));
  e.yaw = wrap_angle(std::atan2(r(1, 0), r(0, 0)));
  return e;
}

template <typename Scalar>
UnitQuaternion<Scalar> euler_to_quat(const EulerRpy<Scalar>& e) {
  const Scalar cr = std::cos(e.roll / 2), sr = std::sin(e.roll / 2);
  const Scalar cp = std::cos(e.pitch / 2), sp = std::sin(e.pitch / 2);
  const Scalar cy = std::cos(e.yaw / 2), sy = std::sin(e.yaw / 2);
  return {cr * cp * cy + sr * sp * sy, sr * cp * cy - cr * sp * sy, cr * sp * cy + sr * cp * sy,
          cr * cp * sy - sr * sp * cy};
}

template <typename Scalar>
struct Pose6 {
  Vec3<Scalar> position = Vec3<Scalar>::Zero();
  UnitQuaternion<Scalar> orientation;

  static Pose6 identity() { return {}; }
  static Pose6 from_translation(const Vec3<Scalar>& p) { return {p, {}}; }

  Vec3<Scalar> transform(const Vec3<Scalar>& p) const { return position + orientation.rotate(p); }
};

using Pose6d = Pose6<double>;

template <typename Scalar>
Pose6<Scalar> pose_compose(const Pose6<Scalar>& a, const Pose6<Scalar>& b) {
  return {a.position + a.orientation.rotate(b.position), a.orientation * b.orientation};
}

template <typename Scalar>
Pose6<Scalar> pose_inverse(const Pose6<Scalar>& a) {
  const UnitQuaternion<Scalar> qi = a.orientation.conjugate();
  return {-qi.rotate(a.position), qi};
}

template <typename Scalar>
Pose6<Scalar> operator*(const Pose6<Scalar>& a, const Pose6<Scalar>& b) {
  return pose_compose(a, b);
}

/// Relative pose a⁻¹ ∘ b.
template <typename Scalar>
Pose6<Scalar> pose_between(const Pose6<Scalar>& a, const Pose6<Scalar>& b) {
  return pose_compose(pose_inverse(a), b);
}

/// Six-vector [translation; rotation vector] used as a pose error.
template <typename Scalar>
Eigen::Matrix<Scalar, 6, 1> pose_log(const Pose6<Scalar>& p) {
  Eigen::Matrix<Scalar, 6, 1> v;
  v << p.position, p.orientation.log();
  return v;
}

template <typename Scalar>
Pose6<Scalar> pose_exp(const Eigen::Matrix<Scalar, 6, 1>& v) {
  return {v.template head<3>(), UnitQuaternion<Scalar>::from_rotation_vector(v.template tail<3>())};
}

/// Planar pose helper: position (x, y, z) with heading `yaw` only.
template <typename Scalar>
Pose6<Scalar> planar_pose(Scalar x, Scalar y, Scalar z, Scalar yaw) {
  return {Vec3<Scalar>(x, y, z), UnitQuaternion<Scalar>::about_z(yaw)};
}

}  // namespace coopsar
