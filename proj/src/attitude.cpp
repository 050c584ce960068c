#include <coopsar/attitude.hpp>
#include <coopsar/error.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace coopsar {

AttitudeFilterState make_attitude_state(const AttitudeConfig& cfg) {
  AttitudeFilterState s;
  s.gain_acc = std::clamp(cfg.gain_acc, 0.0, 1.0);
  s.gain_mag = std::clamp(cfg.gain_mag, 0.0, 1.0);
  return s;
}

Quatd predict_from_gyro(const AttitudeFilterState& state, const Vec3d& gyro, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonPositiveDt, "gyro prediction needs dt > 0");
  return state.q * Quatd::exp(gyro * (dt / 2.0));
}

double adaptive_accel_factor(const Vec3d& accel, const AttitudeConfig& cfg) {
  const double err = std::abs(accel.norm() - cfg.gravity) / cfg.gravity;
  if (err <= cfg.accel_ramp_start) return 1.0;
  if (err >= cfg.accel_ramp_end) return 0.0;
  return (cfg.accel_ramp_end - err) / (cfg.accel_ramp_end - cfg.accel_ramp_start);
}

Quatd accel_correction(const Quatd& q_pred, const Vec3d& accel, double gain, const AttitudeConfig& cfg) {
  const double n = accel.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::ZeroAccelVector, "accelerometer reading has zero norm");
  // Measured gravity direction expressed in the global frame.
  const Vec3d g = q_pred.rotate(accel / n);
  Quatd delta;
  if (g.z() > -1.0 + 1e-12) {
    // Shortest arc taking +z onto g; its rotation axis is horizontal.
    const double s = std::sqrt(2.0 * (g.z() + 1.0));
    delta = Quatd(std::sqrt((g.z() + 1.0) / 2.0), -g.y() / s, g.x() / s, 0.0);
  } else {
    delta = Quatd(0.0, 1.0, 0.0, 0.0);
  }
  const double effective = std::clamp(gain, 0.0, 1.0) * adaptive_accel_factor(accel, cfg);
  return scale_rotation(delta, effective, cfg.slerp_threshold_rad);
}

Quatd mag_correction(const Quatd& q_acc_corrected, const Vec3d& mag, double gain, const AttitudeConfig& cfg) {
  const Vec3d l = q_acc_corrected.rotate(mag);
  const double horizontal = std::hypot(l.x(), l.y());
  if (!(horizontal > 1e-6)) throw Error(ErrorCode::DegenerateMagField, "field has no horizontal component");
  const double heading = std::atan2(l.y(), l.x());
  const Quatd delta(std::cos(heading / 2.0), 0.0, 0.0, std::sin(heading / 2.0));
  return scale_rotation(delta, std::clamp(gain, 0.0, 1.0), cfg.slerp_threshold_rad);
}

Quatd apply_correction(const Quatd& q, const Quatd& delta) { return (q.conjugate() * delta).conjugate(); }

Quatd attitude_from_vectors(const Vec3d& accel, const std::optional<Vec3d>& mag) {
  if (!(accel.norm() > 0.0)) throw Error(ErrorCode::ZeroAccelVector, "cannot initialize from zero accel");
  EulerRpyd e;
  e.roll = std::atan2(accel.y(), accel.z());
  e.pitch = std::atan2(-accel.x(), std::hypot(accel.y(), accel.z()));
  Quatd q = euler_to_quat(e);
  if (mag) {
    const Vec3d l = q.rotate(*mag);
    if (std::hypot(l.x(), l.y()) > 1e-6) q = Quatd::about_z(-std::atan2(l.y(), l.x())) * q;
  }
  return q;
}

AttitudeFilterState filter_step(const AttitudeFilterState& state, const ImuSample& sample,
                                const AttitudeConfig& cfg) {
  AttitudeFilterState next = state;
  if (!state.initialized) {
    next.q = attitude_from_vectors(sample.accel, sample.mag);
    next.last_timestamp = sample.timestamp;
    next.initialized = true;
    return next;
  }
  if (!(sample.timestamp > state.last_timestamp)) {
    throw Error(ErrorCode::NonMonotonicTimestamp, "sample at t=" + std::to_string(sample.timestamp) +
                                                      " not after t=" + std::to_string(state.last_timestamp));
  }
  const double dt = sample.timestamp - state.last_timestamp;
  const Quatd q_w = predict_from_gyro(state, sample.gyro, dt);
  Quatd q = q_w;
  if (sample.accel.norm() > 0.0) q = apply_correction(q, accel_correction(q, sample.accel, state.gain_acc, cfg));
  if (sample.mag) {
    const Vec3d l = q.rotate(*sample.mag);
    if (std::hypot(l.x(), l.y()) > 1e-6) q = apply_correction(q, mag_correction(q, *sample.mag, state.gain_mag, cfg));
  }
  next.q = q;
  next.last_timestamp = sample.timestamp;
  return next;
}

ImuSample ImuLowPass::operator()(const ImuSample& s) {
  if (!prev_ || !(s.timestamp > prev_->timestamp)) {
    prev_ = s;
    return s;
  }
  const double dt = s.timestamp - prev_->timestamp;
  const double rc = 1.0 / (2.0 * std::numbers::pi * cutoff_hz_);
  const double alpha = dt / (rc + dt);
  ImuSample out = s;
  out.gyro = prev_->gyro + alpha * (s.gyro - prev_->gyro);
  out.accel = prev_->accel + alpha * (s.accel - prev_->accel);
  if (s.mag && prev_->mag) out.mag = *prev_->mag + alpha * (*s.mag - *prev_->mag);
  prev_ = out;
  return out;
}

std::vector<AttitudeEstimate> run_attitude_filter(const std::vector<ImuSample>& samples, const AttitudeConfig& cfg) {
  std::vector<AttitudeEstimate> out;
  out.reserve(samples.size());
  AttitudeFilterState state = make_attitude_state(cfg);
  ImuLowPass lowpass(cfg.lowpass_cutoff_hz);
  for (const ImuSample& raw : samples) {
    const ImuSample s = cfg.lowpass_enabled ? lowpass(raw) : raw;
    state = filter_step(state, s, cfg);
    out.push_back({s.timestamp, state.q});
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace

ImuLog read_imu_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty IMU log");
  const std::vector<std::string> header = split_csv(line);
  const std::array<std::string, 7> required{"t", "gx", "gy", "gz", "ax", "ay", "az"};
  for (std::size_t i = 0; i < required.size(); ++i) {
    if (i >= header.size() || header[i] != required[i]) {
      throw Error(ErrorCode::ParseError, "IMU header column " + std::to_string(i + 1) + " must be '" + required[i] +
                                             "', got '" + (i < header.size() ? header[i] : std::string()) + "'");
    }
  }
  std::map<std::string, std::size_t> extra;
  for (std::size_t i = required.size(); i < header.size(); ++i) {
    static const std::array<std::string, 6> known{"mx", "my", "mz", "roll", "pitch", "yaw"};
    if (std::find(known.begin(), known.end(), header[i]) == known.end()) {
      throw Error(ErrorCode::ParseError, "unknown IMU column '" + header[i] + "'");
    }
    extra[header[i]] = i;
  }
  const auto has = [&](const char* name) { return extra.count(name) > 0; };
  const int mag_cols = has("mx") + has("my") + has("mz");
  if (mag_cols != 0 && mag_cols != 3) throw Error(ErrorCode::ParseError, "magnetometer columns must be mx,my,mz");
  const int truth_cols = has("roll") + has("pitch") + has("yaw");
  if (truth_cols != 0 && truth_cols != 3) throw Error(ErrorCode::ParseError, "truth columns must be roll,pitch,yaw");

  ImuLog log;
  log.has_mag = mag_cols == 3;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(header.size()) + " columns");
    }
    std::vector<double> v(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        std::size_t used = 0;
        v[i] = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": column '" + header[i] +
                                               "' is not a number");
      }
    }
    ImuSample s;
    s.timestamp = v[0];
    s.gyro = Vec3d(v[1], v[2], v[3]);
    s.accel = Vec3d(v[4], v[5], v[6]);
    if (log.has_mag) s.mag = Vec3d(v[extra["mx"]], v[extra["my"]], v[extra["mz"]]);
    log.samples.push_back(s);
    if (truth_cols == 3) log.truth.push_back({v[extra["roll"]], v[extra["pitch"]], v[extra["yaw"]]});
  }
  return log;
}

void write_imu_csv(std::ostream& out, const std::vector<ImuSample>& samples, const std::vector<EulerRpyd>* truth) {
  const bool mag = !samples.empty() && samples.front().mag.has_value();
  out << "t,gx,gy,gz,ax,ay,az";
  if (mag) out << ",mx,my,mz";
  if (truth) out << ",roll,pitch,yaw";
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ImuSample& s = samples[i];
    out << s.timestamp << ',' << s.gyro.x() << ',' << s.gyro.y() << ',' << s.gyro.z() << ',' << s.accel.x() << ','
        << s.accel.y() << ',' << s.accel.z();
    if (mag) {
      const Vec3d m = s.mag.value_or(Vec3d::Zero());
      out << ',' << m.x() << ',' << m.y() << ',' << m.z();
    }
    if (truth) out << ',' << (*truth)[i].roll << ',' << (*truth)[i].pitch << ',' << (*truth)[i].yaw;
    out << '\n';
  }
}

}  // namespace coopsar
