#include <coopsar/error.hpp>
#include <coopsar/fusion.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

namespace coopsar {

using namespace state_index;

namespace {

constexpr double kGimbalLimit = 85.0 * std::numbers::pi / 180.0;

bool is_angle(int i) { return i == kRoll || i == kPitch || i == kYaw; }

void wrap_state_angles(StateVector& x) {
  for (int i = kRoll; i <= kYaw; ++i) x[i] = wrap_angle(x[i]);
}

}  // namespace

Pose6d FusionState::pose() const {
  return {x.segment<3>(kX), euler_to_quat(attitude())};
}

EulerRpyd FusionState::attitude() const { return {x[kRoll], x[kPitch], x[kYaw]}; }

StateCovariance ProcessNoise::matrix() const {
  StateVector d;
  d << Eigen::Vector3d::Constant(position), Eigen::Vector3d::Constant(angle), Eigen::Vector3d::Constant(velocity),
      Eigen::Vector3d::Constant(angular_rate);
  return d.asDiagonal();
}

FusionState ekf_predict(const FusionState& state, double dt, const ProcessNoise& q) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonPositiveDt, "EKF prediction needs dt > 0");
  StateCovariance f = StateCovariance::Identity();
  f.topRightCorner<6, 6>().diagonal().setConstant(dt);
  FusionState next = state;
  next.x = f * state.x;
  wrap_state_angles(next.x);
  next.covariance = f * state.covariance * f.transpose() + q.matrix() * dt;
  next.covariance = 0.5 * (next.covariance + next.covariance.transpose()).eval();
  next.timestamp = state.timestamp + dt;
  next.gimbal_warning = std::abs(next.x[kPitch]) > kGimbalLimit;
  return next;
}

Eigen::MatrixXd selection_matrix(const std::vector<int>& mask) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mask.size()), kStateSize);
  for (std::size_t r = 0; r < mask.size(); ++r) h(static_cast<Eigen::Index>(r), mask[r]) = 1.0;
  return h;
}

FusionState ekf_update_partial(const FusionState& state, const Measurement& m) {
  if (m.mask.empty()) throw Error(ErrorCode::EmptyMask, "measurement selects no state components");
  if (m.timestamp < state.timestamp) {
    throw Error(ErrorCode::StaleMeasurement,
                "measurement t=" + std::to_string(m.timestamp) + " older than state t=" + std::to_string(state.timestamp));
  }
  const auto rows = static_cast<Eigen::Index>(m.mask.size());
  if (m.values.size() != rows || m.noise.size() != rows) {
    throw Error(ErrorCode::InvalidMeasurement, "values/noise sizes must match the mask");
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int idx = m.mask[static_cast<std::size_t>(r)];
    if (idx < 0 || idx >= kStateSize) throw Error(ErrorCode::InvalidMeasurement, "mask index out of range");
    if (!(m.noise[r] > 0.0)) throw Error(ErrorCode::InvalidMeasurement, "measurement noise must be positive");
  }

  const Eigen::MatrixXd h = selection_matrix(m.mask);
  Eigen::VectorXd residual = m.values - h * state.x;
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (is_angle(m.mask[static_cast<std::size_t>(r)])) residual[r] = wrap_angle(residual[r]);
  }
  const Eigen::MatrixXd noise = m.noise.asDiagonal();
  const Eigen::MatrixXd ph = state.covariance * h.transpose();
  const Eigen::MatrixXd s = h * ph + noise;
  // K = P H' S^-1, solved as S K' = H P.
  const Eigen::MatrixXd gain = s.ldlt().solve(ph.transpose()).transpose();

  FusionState next = state;
  next.x = state.x + gain * residual;
  wrap_state_angles(next.x);
  const StateCovariance i_kh = StateCovariance::Identity() - gain * h;
  next.covariance = i_kh * state.covariance * i_kh.transpose() + gain * noise * gain.transpose();
  next.covariance = 0.5 * (next.covariance + next.covariance.transpose()).eval();
  next.timestamp = std::max(state.timestamp, m.timestamp);
  next.gimbal_warning = std::abs(next.x[kPitch]) > kGimbalLimit;
  return next;
}

Measurement vo_measurement(const VoPoseSample& cur, const VoPoseSample* prev_valid, const FusionConfig& cfg) {
  const EulerRpyd e = quat_to_euler(cur.pose.orientation);
  Measurement m;
  m.timestamp = cur.timestamp;
  const bool with_rates = prev_valid != nullptr && cur.timestamp > prev_valid->timestamp;
  const int n = with_rates ? 12 : 6;
  m.values.resize(n);
  m.noise.resize(n);
  m.values.head<6>() << cur.pose.position, e.roll, e.pitch, e.yaw;
  m.noise.head<6>() << Eigen::Vector3d::Constant(cfg.vo_position_var), Eigen::Vector3d::Constant(cfg.vo_angle_var);
  for (int i = 0; i < n; ++i) m.mask.push_back(i);
  if (with_rates) {
    // Rates by finite difference over the VO interval.
    const double dt = cur.timestamp - prev_valid->timestamp;
    const EulerRpyd ep = quat_to_euler(prev_valid->pose.orientation);
    m.values.segment<3>(6) = (cur.pose.position - prev_valid->pose.position) / dt;
    m.values[9] = wrap_angle(e.roll - ep.roll) / dt;
    m.values[10] = wrap_angle(e.pitch - ep.pitch) / dt;
    m.values[11] = wrap_angle(e.yaw - ep.yaw) / dt;
    m.noise.tail<6>() << Eigen::Vector3d::Constant(cfg.vo_velocity_var), Eigen::Vector3d::Constant(cfg.vo_rate_var);
  }
  return m;
}

Measurement ae_measurement(const AttitudeSample& ae, const FusionConfig& cfg) {
  Measurement m;
  m.timestamp = ae.timestamp;
  m.values = Eigen::Vector3d(ae.attitude.roll, ae.attitude.pitch, ae.attitude.yaw);
  m.noise = Eigen::Vector3d::Constant(cfg.ae_angle_var);
  m.mask = {kRoll, kPitch, kYaw};
  return m;
}

std::vector<FusedOdometry> fuse_streams(const std::vector<VoPoseSample>& vo, const std::vector<AttitudeSample>& ae,
                                        const FusionConfig& cfg) {
  for (std::size_t i = 1; i < vo.size(); ++i) {
    if (vo[i].timestamp < vo[i - 1].timestamp) throw Error(ErrorCode::NonMonotonicTimestamp, "VO stream not ordered");
  }
  for (std::size_t i = 1; i < ae.size(); ++i) {
    if (ae[i].timestamp < ae[i - 1].timestamp) throw Error(ErrorCode::NonMonotonicTimestamp, "AE stream not ordered");
  }

  std::vector<FusedOdometry> out;
  out.reserve(vo.size() + ae.size());
  FusionState state;
  state.covariance = StateCovariance::Identity() * cfg.initial_var;
  bool started = false;
  bool vo_since_last_ae = false;
  const VoPoseSample* last_valid_vo = nullptr;

  const auto advance_to = [&](double t) {
    if (!started) {
      state.timestamp = t;
      started = true;
    } else if (t > state.timestamp) {
      state = ekf_predict(state, t - state.timestamp, cfg.process);
    }
  };
  const auto emit = [&](FusedSource src) {
    out.push_back({state.timestamp, state.pose(), state.attitude(), state.covariance.trace(), src});
  };

  std::size_t iv = 0, ia = 0;
  while (iv < vo.size() || ia < ae.size()) {
    const bool take_vo = ia >= ae.size() || (iv < vo.size() && vo[iv].timestamp <= ae[ia].timestamp);
    if (take_vo) {
      const VoPoseSample& s = vo[iv++];
      advance_to(s.timestamp);
      if (s.valid) {
        state = ekf_update_partial(state, vo_measurement(s, last_valid_vo, cfg));
        last_valid_vo = &s;
      }
      vo_since_last_ae = true;
      emit(FusedSource::VisualOdometry);
    } else {
      const AttitudeSample& s = ae[ia++];
      advance_to(s.timestamp);
      state = ekf_update_partial(state, ae_measurement(s, cfg));
      if (!vo_since_last_ae) emit(FusedSource::AttitudeEstimate);
      vo_since_last_ae = false;
    }
  }
  return out;
}

void write_fused_csv(std::ostream& out, const std::vector<FusedOdometry>& odom) {
  out << "t,x,y,z,roll,pitch,yaw,cov_trace\n" << std::setprecision(17);
  for (const FusedOdometry& o : odom) {
    out << o.timestamp << ',' << o.pose.position.x() << ',' << o.pose.position.y() << ',' << o.pose.position.z() << ','
        << o.attitude.roll << ',' << o.attitude.pitch << ',' << o.attitude.yaw << ',' << o.covariance_trace << '\n';
  }
}

}  // namespace coopsar
