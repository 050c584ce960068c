#include <coopsar/error.hpp>
#include <coopsar/hexapod.hpp>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>

namespace coopsar {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kPhaseEps = 1e-9;
constexpr double kLimitEps = 1e-12;

constexpr std::array<const char*, kLegCount> kLegNames{"L1", "R1", "L2", "R2", "L3", "R3"};

int idx(LegId leg) { return static_cast<int>(leg); }

void check_limits(const LegGeometry& g, const JointAngles& q) {
  auto check = [](double v, const JointLimits& l, const char* name) {
    if (!std::isfinite(v) || v < l.min - kLimitEps || v > l.max + kLimitEps) {
      throw Error(ErrorCode::JointLimitViolation,
                  std::string(name) + " angle " + std::to_string(v) + " outside limits");
    }
  };
  check(q.coxa, g.coxa_limits, "coxa");
  check(q.femur, g.femur_limits, "femur");
  check(q.tibia, g.tibia_limits, "tibia");
}

Vec3d radial(const LegGeometry& g, LegId leg, double coxa) {
  const double a = g.mounts[idx(leg)].yaw + coxa;
  return {std::cos(a), std::sin(a), 0.0};
}

}  // namespace

const char* to_string(LegId leg) { return kLegNames[idx(leg)]; }

LegGeometry::LegGeometry() {
  mounts = {{
      {{0.12, 0.06}, 30.0 * kDeg},
      {{0.12, -0.06}, -30.0 * kDeg},
      {{0.0, 0.10}, 90.0 * kDeg},
      {{0.0, -0.10}, -90.0 * kDeg},
      {{-0.12, 0.06}, 150.0 * kDeg},
      {{-0.12, -0.06}, -150.0 * kDeg},
  }};
}

std::array<Vec3d, 4> leg_chain_points(const LegGeometry& g, LegId leg, const JointAngles& q) {
  const Vec3d u = radial(g, leg, q.coxa);
  const Vec3d ez = Vec3d::UnitZ();
  const auto& m = g.mounts[idx(leg)];
  std::array<Vec3d, 4> p;
  p[0] = Vec3d(m.position.x(), m.position.y(), 0.0);
  p[1] = p[0] + g.coxa * u;
  p[2] = p[1] + g.femur * (std::cos(q.femur) * u + std::sin(q.femur) * ez);
  p[3] = p[2] + g.tibia * (std::cos(q.femur + q.tibia) * u + std::sin(q.femur + q.tibia) * ez);
  return p;
}

Vec3d leg_fk(const LegGeometry& g, LegId leg, const JointAngles& q) {
  check_limits(g, q);
  return leg_chain_points(g, leg, q)[3];
}

JointAngles leg_ik(const LegGeometry& g, LegId leg, const Vec3d& foot) {
  if (!foot.allFinite()) throw Error(ErrorCode::Unreachable, "non-finite foot target");
  const auto& m = g.mounts[idx(leg)];
  const double px = foot.x() - m.position.x(), py = foot.y() - m.position.y();
  const double cy = std::cos(m.yaw), sy = std::sin(m.yaw);
  const double lx = cy * px + sy * py, ly = -sy * px + cy * py;
  const double hr = std::hypot(lx, ly);
  if (hr < 1e-9) throw Error(ErrorCode::Unreachable, "foot on the coxa axis");

  JointAngles q;
  q.coxa = std::atan2(ly, lx);
  const double rho = hr - g.coxa, z = foot.z();
  const double d2 = rho * rho + z * z, d = std::sqrt(d2);
  if (d > g.femur + g.tibia + 1e-12 || d < std::abs(g.femur - g.tibia) - 1e-12) {
    throw Error(ErrorCode::Unreachable, std::string(to_string(leg)) + " target outside leg workspace");
  }
  const double c3 = std::clamp((d2 - g.femur * g.femur - g.tibia * g.tibia) / (2.0 * g.femur * g.tibia), -1.0, 1.0);
  q.tibia = -std::acos(c3);
  q.femur = wrap_angle(std::atan2(z, rho) - std::atan2(g.tibia * std::sin(q.tibia), g.femur + g.tibia * std::cos(q.tibia)));
  check_limits(g, q);
  return q;
}

JointAngles leg_joint_torques(const LegGeometry& g, LegId leg, const JointAngles& q, const Vec3d& foot_force) {
  const auto p = leg_chain_points(g, leg, q);
  const double a = g.mounts[idx(leg)].yaw + q.coxa;
  const Vec3d pitch_axis(std::sin(a), -std::cos(a), 0.0);
  JointAngles t;
  t.coxa = Vec3d::UnitZ().dot((p[3] - p[0]).cross(foot_force));
  t.femur = pitch_axis.dot((p[3] - p[1]).cross(foot_force));
  t.tibia = pitch_axis.dot((p[3] - p[2]).cross(foot_force));
  return t;
}

const char* to_string(GaitName g) {
  switch (g) {
    case GaitName::Wave: return "wave";
    case GaitName::Ripple: return "ripple";
    case GaitName::Amble: return "amble";
    case GaitName::Tripod: return "tripod";
  }
  return "?";
}

GaitName gait_from_string(const std::string& s) {
  for (GaitName g : {GaitName::Wave, GaitName::Ripple, GaitName::Amble, GaitName::Tripod}) {
    if (s == to_string(g)) return g;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown gait '" + s + "'");
}

GaitSpec gait_spec(GaitName name) {
  GaitSpec s;
  s.name = name;
  switch (name) {
    case GaitName::Wave:
      s.duty = 5.0 / 6.0;
      s.offsets = {0.0, 1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 4.0 / 6.0, 5.0 / 6.0};
      break;
    case GaitName::Ripple:
      // One leg per side in swing, never two neighbours on the same side.
      s.duty = 2.0 / 3.0;
      s.offsets = {0.0, 1.0 / 2.0, 1.0 / 3.0, 5.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
      break;
    case GaitName::Amble:
      s.duty = 2.0 / 3.0;
      s.offsets = {0.0, 1.0 / 3.0, 2.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0};
      break;
    case GaitName::Tripod:
      s.duty = 0.5;
      s.offsets = {0.0, 0.5, 0.5, 0.0, 0.0, 0.5};
      break;
  }
  return s;
}

std::array<LegPhase, kLegCount> gait_phase(const GaitSpec& spec, double t, double period) {
  if (!(period > 0.0)) throw Error(ErrorCode::ConfigInvalid, "gait period must be positive");
  std::array<LegPhase, kLegCount> out;
  for (int i = 0; i < kLegCount; ++i) {
    double f = t / period - spec.offsets[i];
    f -= std::floor(f);
    if (f > 1.0 - kPhaseEps) f = 0.0;
    if (std::abs(f - spec.duty) < kPhaseEps) f = spec.duty;
    out[i].swing = f >= spec.duty;
    out[i].fraction = out[i].swing ? (f - spec.duty) / (1.0 - spec.duty) : f / spec.duty;
  }
  return out;
}

int stance_count(const std::array<LegPhase, kLegCount>& phases) {
  return static_cast<int>(std::count_if(phases.begin(), phases.end(), [](const LegPhase& p) { return !p.swing; }));
}

double static_stability(const std::vector<Eigen::Vector2d>& stance_feet, const Eigen::Vector2d& com) {
  if (stance_feet.size() < 3) throw Error(ErrorCode::DegenerateSupport, "fewer than three stance feet");
  // Andrew's monotone chain, counter-clockwise.
  std::vector<Eigen::Vector2d> pts = stance_feet;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a - o).x() * (b - o).y() - (a - o).y() * (b - o).x();
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, lo = k + 1; i-- > 0;) {
    while (k >= lo && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area += a.x() * b.y() - a.y() * b.x();
  }
  if (hull.size() < 3 || area < 1e-12) throw Error(ErrorCode::DegenerateSupport, "collinear stance feet");

  bool inside = true;
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Eigen::Vector2d a = hull[i], b = hull[(i + 1) % hull.size()];
    const Eigen::Vector2d e = b - a;
    if (e.x() * (com - a).y() - e.y() * (com - a).x() < 0.0) inside = false;
    const double s = std::clamp((com - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
    dmin = std::min(dmin, (com - (a + s * e)).norm());
  }
  return inside ? dmin : -dmin;
}

HexapodConfig default_hexapod_config() { return {}; }

namespace {

using nlohmann::json;

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Eigen::Vector2d vec2(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::ConfigInvalid, "expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

JointLimits limits_deg(const json& j) {
  const Eigen::Vector2d v = vec2(j);
  if (!(v.x() < v.y())) throw Error(ErrorCode::ConfigInvalid, "joint limit min must be below max");
  return {v.x() * kDeg, v.y() * kDeg};
}

}  // namespace

HexapodConfig read_hexapod_config(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  HexapodConfig cfg;
  try {
    if (j.contains("geometry")) {
      const json& g = j.at("geometry");
      maybe(g, "coxa", cfg.geometry.coxa);
      maybe(g, "femur", cfg.geometry.femur);
      maybe(g, "tibia", cfg.geometry.tibia);
      if (g.contains("mounts")) {
        for (const json& m : g.at("mounts")) {
          const std::string leg = m.at("leg").get<std::string>();
          const auto it = std::find(kLegNames.begin(), kLegNames.end(), leg);
          if (it == kLegNames.end()) throw Error(ErrorCode::ConfigInvalid, "unknown leg '" + leg + "'");
          auto& mount = cfg.geometry.mounts[it - kLegNames.begin()];
          mount.position = vec2(m.at("position"));
          mount.yaw = m.at("yaw_deg").get<double>() * kDeg;
        }
      }
      if (g.contains("limits_deg")) {
        const json& l = g.at("limits_deg");
        if (l.contains("coxa")) cfg.geometry.coxa_limits = limits_deg(l.at("coxa"));
        if (l.contains("femur")) cfg.geometry.femur_limits = limits_deg(l.at("femur"));
        if (l.contains("tibia")) cfg.geometry.tibia_limits = limits_deg(l.at("tibia"));
      }
    }
    maybe(j, "stance_radius", cfg.stance_radius);
    maybe(j, "body_mass", cfg.body_mass);
    maybe(j, "gravity", cfg.gravity);
    maybe(j, "stall_torque", cfg.stall_torque);
    maybe(j, "safety_margin", cfg.safety_margin);
    if (j.contains("com")) cfg.com = vec2(j.at("com"));
    if (j.contains("payload_offset")) cfg.payload_offset = vec2(j.at("payload_offset"));
    maybe(j, "stance_current", cfg.stance_current);
    maybe(j, "gait_current", cfg.gait_current);
    maybe(j, "gait_period", cfg.gait_period);
    maybe(j, "stride_length", cfg.stride_length);
    maybe(j, "battery_ah", cfg.battery_ah);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  const auto& g = cfg.geometry;
  if (!(g.coxa > 0 && g.femur > 0 && g.tibia > 0)) throw Error(ErrorCode::ConfigInvalid, "link lengths must be positive");
  if (!(cfg.stance_radius > g.coxa)) throw Error(ErrorCode::ConfigInvalid, "stance_radius must exceed coxa length");
  if (!(cfg.body_mass >= 0 && cfg.gravity >= 0 && cfg.stall_torque > 0))
    throw Error(ErrorCode::ConfigInvalid, "mass, gravity and stall torque must be non-negative");
  if (!(cfg.safety_margin >= 0 && cfg.safety_margin < 1))
    throw Error(ErrorCode::ConfigInvalid, "safety_margin must be in [0, 1)");
  if (!(cfg.gait_period > 0 && cfg.stride_length > 0)) throw Error(ErrorCode::ConfigInvalid, "gait timing must be positive");
  return cfg;
}

void write_hexapod_config(std::ostream& out, const HexapodConfig& cfg) {
  nlohmann::ordered_json j;
  const auto& g = cfg.geometry;
  j["geometry"]["coxa"] = g.coxa;
  j["geometry"]["femur"] = g.femur;
  j["geometry"]["tibia"] = g.tibia;
  for (int i = 0; i < kLegCount; ++i) {
    j["geometry"]["mounts"].push_back({{"leg", kLegNames[i]},
                                       {"position", {g.mounts[i].position.x(), g.mounts[i].position.y()}},
                                       {"yaw_deg", g.mounts[i].yaw / kDeg}});
  }
  j["geometry"]["limits_deg"]["coxa"] = {g.coxa_limits.min / kDeg, g.coxa_limits.max / kDeg};
  j["geometry"]["limits_deg"]["femur"] = {g.femur_limits.min / kDeg, g.femur_limits.max / kDeg};
  j["geometry"]["limits_deg"]["tibia"] = {g.tibia_limits.min / kDeg, g.tibia_limits.max / kDeg};
  j["stance_radius"] = cfg.stance_radius;
  j["body_mass"] = cfg.body_mass;
  j["gravity"] = cfg.gravity;
  j["stall_torque"] = cfg.stall_torque;
  j["safety_margin"] = cfg.safety_margin;
  j["com"] = {cfg.com.x(), cfg.com.y()};
  j["payload_offset"] = {cfg.payload_offset.x(), cfg.payload_offset.y()};
  j["stance_current"] = cfg.stance_current;
  j["gait_current"] = cfg.gait_current;
  j["gait_period"] = cfg.gait_period;
  j["stride_length"] = cfg.stride_length;
  j["battery_ah"] = cfg.battery_ah;
  out << j.dump(2) << '\n';
}

std::array<Vec3d, kLegCount> default_feet(const HexapodConfig& cfg, double body_height) {
  std::array<Vec3d, kLegCount> feet;
  for (int i = 0; i < kLegCount; ++i) {
    const auto& m = cfg.geometry.mounts[i];
    feet[i] = Vec3d(m.position.x() + cfg.stance_radius * std::cos(m.yaw),
                    m.position.y() + cfg.stance_radius * std::sin(m.yaw), -body_height);
  }
  return feet;
}

StanceConfig stance_from_phases(const HexapodConfig& cfg, const std::array<LegPhase, kLegCount>& phases,
                                double body_height) {
  StanceConfig s;
  s.feet = default_feet(cfg, body_height);
  for (int i = 0; i < kLegCount; ++i) s.stance[i] = !phases[i].swing;
  return s;
}

TorqueEstimate joint_torque_estimate(const HexapodConfig& cfg, const StanceConfig& stance, double payload) {
  if (!(payload >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "payload must be non-negative");
  std::vector<int> legs;
  for (int i = 0; i < kLegCount; ++i) {
    if (stance.stance[i]) legs.push_back(i);
  }
  const int n = static_cast<int>(legs.size());
  if (n < 3) throw Error(ErrorCode::DegenerateSupport, "fewer than three stance feet");

  const double mass = cfg.body_mass + payload;
  const double weight = mass * cfg.gravity;
  const Eigen::Vector2d com =
      mass > 0.0 ? Eigen::Vector2d((cfg.body_mass * cfg.com + payload * cfg.payload_offset) / mass) : cfg.com;

  // Per-leg torque per newton of vertical ground reaction.
  std::vector<JointAngles> unit(n);
  Eigen::VectorXd lever(n);
  for (int k = 0; k < n; ++k) {
    const LegId leg = static_cast<LegId>(legs[k]);
    const JointAngles q = leg_ik(cfg.geometry, leg, stance.feet[legs[k]]);
    const JointAngles t = leg_joint_torques(cfg.geometry, leg, q, Vec3d::UnitZ());
    unit[k] = {std::abs(t.coxa), std::abs(t.femur), std::abs(t.tibia)};
    lever[k] = std::max({unit[k].coxa, unit[k].femur, unit[k].tibia});
  }

  TorqueEstimate est;
  if (weight == 0.0) return est;

  // min t  s.t.  sum F = W,  sum F (p - c) = 0,  F >= 0,  lever F <= t.
  // Unknowns [F; t]; a vertex fixes n - 2 of the 2n inequalities as active.
  const int m = n + 1;
  Eigen::MatrixXd eq = Eigen::MatrixXd::Zero(3, m);
  Eigen::Vector3d rhs(weight, 0.0, 0.0);
  for (int k = 0; k < n; ++k) {
    eq(0, k) = 1.0;
    eq(1, k) = stance.feet[legs[k]].x() - com.x();
    eq(2, k) = stance.feet[legs[k]].y() - com.y();
  }
  const double tol = 1e-9 * weight;
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  for (unsigned mask = 0; mask < (1u << (2 * n)); ++mask) {
    if (std::popcount(mask) != n - 2) continue;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    a.topRows(3) = eq;
    b.head(3) = rhs;
    int row = 3;
    for (int bit = 0; bit < 2 * n; ++bit) {
      if (!(mask & (1u << bit))) continue;
      if (bit < n) {
        a(row, bit) = 1.0;
      } else {
        a(row, bit - n) = lever[bit - n];
        a(row, n) = -1.0;
      }
      ++row;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.rank() < m) continue;
    const Eigen::VectorXd x = lu.solve(b);
    bool ok = true;
    for (int k = 0; k < n && ok; ++k) ok = x[k] >= -tol && lever[k] * x[k] <= x[n] + tol;
    if (ok && x[n] < best) {
      best = x[n];
      best_x = x;
    }
  }
  if (!std::isfinite(best)) throw Error(ErrorCode::DegenerateSupport, "centre of mass outside the support polygon");

  for (int k = 0; k < n; ++k) {
    const double f = std::max(0.0, best_x[k]);
    est.leg_force[legs[k]] = f;
    est.coxa = std::max(est.coxa, f * unit[k].coxa);
    est.femur = std::max(est.femur, f * unit[k].femur);
    est.tibia = std::max(est.tibia, f * unit[k].tibia);
  }
  return est;
}

TorqueEstimate gait_torque_estimate(const HexapodConfig& cfg, const GaitSpec& gait, double payload,
                                    double body_height) {
  // Midpoints of a fine phase grid never land on a gait transition.
  constexpr int kSamples = 360;
  TorqueEstimate worst;
  for (int s = 0; s < kSamples; ++s) {
    const auto phases = gait_phase(gait, (s + 0.5) / kSamples, 1.0);
    const TorqueEstimate e = joint_torque_estimate(cfg, stance_from_phases(cfg, phases, body_height), payload);
    if (e.max() > worst.max()) worst.leg_force = e.leg_force;
    worst.coxa = std::max(worst.coxa, e.coxa);
    worst.femur = std::max(worst.femur, e.femur);
    worst.tibia = std::max(worst.tibia, e.tibia);
  }
  return worst;
}

double max_payload(const HexapodConfig& cfg, const GaitSpec& gait, double body_height) {
  const double allowed = cfg.allowed_torque();
  auto fits = [&](double p) { return gait_torque_estimate(cfg, gait, p, body_height).max() <= allowed; };
  if (!fits(0.0)) return 0.0;
  if (cfg.gravity == 0.0) return std::numeric_limits<double>::infinity();
  double lo = 0.0, hi = 1.0;
  while (fits(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) return std::numeric_limits<double>::infinity();
  }
  while (hi - lo > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    (fits(mid) ? lo : hi) = mid;
  }
  return lo;
}

double body_current(const HexapodConfig& cfg, HeightMode mode, double h) {
  const auto& c = mode == HeightMode::Stance ? cfg.stance_current : cfg.gait_current;
  return (c[0] * h + c[1]) * h + c[2];
}

double optimal_body_height(const HexapodConfig& cfg, HeightMode mode) {
  const auto& c = mode == HeightMode::Stance ? cfg.stance_current : cfg.gait_current;
  if (!(c[0] > 0.0)) throw Error(ErrorCode::ConfigInvalid, "current curve must be convex");
  return -c[1] / (2.0 * c[0]);
}

double gait_speed(const HexapodConfig& cfg, const GaitSpec& gait) {
  return cfg.stride_length / (gait.duty * cfg.gait_period);
}

Pose6d body_transform(const BodyPose& p) {
  return {Vec3d(p.x, p.y, p.z), euler_to_quat(EulerRpyd{p.roll, p.pitch, 0.0})};
}

std::array<JointAngles, kLegCount> apply_body_pose(const LegGeometry& g, const BodyPose& p,
                                                   const std::array<Vec3d, kLegCount>& world_feet,
                                                   const PoseEnvelope& env) {
  if (std::abs(p.x) > env.max_xy || std::abs(p.y) > env.max_xy || p.z < env.min_z || p.z > env.max_z ||
      std::abs(p.roll) > env.max_tilt || std::abs(p.pitch) > env.max_tilt) {
    throw Error(ErrorCode::Unreachable, "body pose outside the posing envelope");
  }
  const Pose6d inv = pose_inverse(body_transform(p));
  std::array<JointAngles, kLegCount> q;
  for (int i = 0; i < kLegCount; ++i) q[i] = leg_ik(g, static_cast<LegId>(i), inv.transform(world_feet[i]));
  return q;
}

void write_torque_csv(std::ostream& out, const HexapodConfig& cfg, double payload) {
  out << "gait,joint,torque_nm,margin_pct\n" << std::fixed;
  for (GaitName name : {GaitName::Wave, GaitName::Ripple, GaitName::Amble, GaitName::Tripod}) {
    const TorqueEstimate e = gait_torque_estimate(cfg, gait_spec(name), payload);
    const std::array<std::pair<const char*, double>, 3> rows{{{"coxa", e.coxa}, {"femur", e.femur}, {"tibia", e.tibia}}};
    for (const auto& [joint, tau] : rows) {
      out << to_string(name) << ',' << joint << ',' << std::setprecision(6) << tau << ',' << std::setprecision(3)
          << 100.0 * (1.0 - tau / cfg.stall_torque) << '\n';
    }
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace coopsar
