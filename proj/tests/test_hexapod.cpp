#include <coopsar/error.hpp>
#include <coopsar/hexapod.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <sstream>

using namespace coopsar;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
constexpr std::array<LegId, 6> kLegs{LegId::L1, LegId::R1, LegId::L2, LegId::R2, LegId::L3, LegId::R3};
constexpr std::array<GaitName, 4> kGaits{GaitName::Wave, GaitName::Ripple, GaitName::Amble, GaitName::Tripod};

// Standard DH link transform.
Eigen::Matrix4d dh(double theta, double d, double a, double alpha) {
  const double ct = std::cos(theta), st = std::sin(theta), ca = std::cos(alpha), sa = std::sin(alpha);
  Eigen::Matrix4d t;
  t << ct, -st * ca, st * sa, a * ct,
       st, ct * ca, -ct * sa, a * st,
       0, sa, ca, d,
       0, 0, 0, 1;
  return t;
}

Vec3d dh_foot(const LegGeometry& g, LegId leg, const JointAngles& q) {
  const auto& m = g.mounts[static_cast<int>(leg)];
  Eigen::Matrix4d base = Eigen::Matrix4d::Identity();
  base.block<3, 3>(0, 0) = Eigen::AngleAxisd(m.yaw, Vec3d::UnitZ()).toRotationMatrix();
  base(0, 3) = m.position.x();
  base(1, 3) = m.position.y();
  const Eigen::Matrix4d t =
      base * dh(q.coxa, 0, g.coxa, kPi / 2) * dh(q.femur, 0, g.femur, 0) * dh(q.tibia, 0, g.tibia, 0);
  return t.block<3, 1>(0, 3);
}

JointAngles random_knee_up(std::mt19937_64& rng, const LegGeometry& g) {
  std::uniform_real_distribution<double> c(g.coxa_limits.min, g.coxa_limits.max);
  std::uniform_real_distribution<double> f(g.femur_limits.min, g.femur_limits.max);
  std::uniform_real_distribution<double> t(g.tibia_limits.min, -0.01);
  while (true) {
    JointAngles q{c(rng), f(rng), t(rng)};
    // Keep the foot ahead of the coxa axis so the planar inverse is unique.
    if (g.coxa + g.femur * std::cos(q.femur) + g.tibia * std::cos(q.femur + q.tibia) > 0.01) return q;
  }
}

std::vector<Eigen::Vector2d> stance_points(const HexapodConfig& cfg, const std::array<LegPhase, 6>& ph) {
  const auto feet = default_feet(cfg, 0.12);
  std::vector<Eigen::Vector2d> out;
  for (int i = 0; i < 6; ++i)
    if (!ph[i].swing) out.push_back(feet[i].head<2>());
  return out;
}

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d e = b - a;
  const double s = std::clamp((p - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
  return (p - a - s * e).norm();
}

// Ray casting against a polygon given in boundary order.
bool point_in_polygon(const Eigen::Vector2d& p, const std::vector<Eigen::Vector2d>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) && p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x())
      in = !in;
  }
  return in;
}

}  // namespace

TEST(LegKinematics, ZeroPoseIsStraightAlongMountYaw) {
  const LegGeometry g;
  for (LegId leg : kLegs) {
    const auto& m = g.mounts[static_cast<int>(leg)];
    const double reach = g.coxa + g.femur + g.tibia;
    const Vec3d expect(m.position.x() + reach * std::cos(m.yaw), m.position.y() + reach * std::sin(m.yaw), 0.0);
    EXPECT_LT((leg_fk(g, leg, {}) - expect).norm(), 1e-12) << to_string(leg);
  }
}

TEST(LegKinematics, CoxaQuarterTurnRotatesFoot) {
  const LegGeometry g;
  const auto& m = g.mounts[static_cast<int>(LegId::L2)];
  const Vec3d mount(m.position.x(), m.position.y(), 0.0);
  const Vec3d a = leg_fk(g, LegId::L2, {0.0, 0.3, -1.0}) - mount;
  const Vec3d b = leg_fk(g, LegId::L2, {kPi / 2, 0.3, -1.0}) - mount;
  EXPECT_LT((Eigen::AngleAxisd(kPi / 2, Vec3d::UnitZ()) * a - b).norm(), 1e-12);
}

TEST(LegKinematics, MatchesDhChainOracle) {
  const LegGeometry g;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const LegId leg = kLegs[i % 6];
    const JointAngles q = random_knee_up(rng, g);
    EXPECT_LT((leg_fk(g, leg, q) - dh_foot(g, leg, q)).norm(), 1e-12);
  }
}

TEST(LegKinematics, InverseRoundTrip) {
  const LegGeometry g;
  std::mt19937_64 rng(2);
  double worst_pos = 0.0, worst_angle = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const LegId leg = kLegs[i % 6];
    const JointAngles q = random_knee_up(rng, g);
    const Vec3d p = leg_fk(g, leg, q);
    const JointAngles r = leg_ik(g, leg, p);
    worst_pos = std::max(worst_pos, (leg_fk(g, leg, r) - p).norm());
    worst_angle = std::max({worst_angle, std::abs(r.coxa - q.coxa), std::abs(r.femur - q.femur),
                            std::abs(r.tibia - q.tibia)});
  }
  EXPECT_LT(worst_pos, 1e-6);
  EXPECT_LT(worst_angle, 1e-6);
}

TEST(LegKinematics, KneeUpBranch) {
  const HexapodConfig cfg;
  const auto feet = default_feet(cfg, 0.12);
  for (LegId leg : kLegs) {
    const JointAngles q = leg_ik(cfg.geometry, leg, feet[static_cast<int>(leg)]);
    EXPECT_LE(q.tibia, 0.0);
    const auto p = leg_chain_points(cfg.geometry, leg, q);
    // Knee sits above the femur-to-foot line.
    const Vec3d line = p[3] - p[1];
    const double s = (p[2] - p[1]).dot(line) / line.squaredNorm();
    EXPECT_GT(p[2].z(), (p[1] + s * line).z());
  }
}

TEST(LegKinematics, OutOfReachAndLimits) {
  const LegGeometry g;
  const auto& m = g.mounts[0];
  const double reach = g.coxa + g.femur + g.tibia;
  const Vec3d dir(std::cos(m.yaw), std::sin(m.yaw), 0.0);
  const Vec3d mount(m.position.x(), m.position.y(), 0.0);
  EXPECT_NO_THROW(leg_ik(g, LegId::L1, mount + (reach - 1e-9) * dir));
  try {
    leg_ik(g, LegId::L1, mount + (reach + 1e-6) * dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Unreachable);
  }
  try {
    leg_fk(g, LegId::L1, {0.0, 0.0, 1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::JointLimitViolation);
  }
  // Straight behind the mount needs a coxa turn past its limit.
  try {
    leg_ik(g, LegId::L1, mount - 0.15 * dir - Vec3d(0, 0, 0.1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::JointLimitViolation);
  }
}

TEST(Gait, TripodStartsWithFirstTripodInStance) {
  const auto ph = gait_phase(gait_spec(GaitName::Tripod), 0.0, 1.0);
  for (LegId leg : {LegId::L1, LegId::R2, LegId::L3}) {
    EXPECT_FALSE(ph[static_cast<int>(leg)].swing);
    EXPECT_DOUBLE_EQ(ph[static_cast<int>(leg)].fraction, 0.0);
  }
  for (LegId leg : {LegId::R1, LegId::L2, LegId::R3}) EXPECT_TRUE(ph[static_cast<int>(leg)].swing);
}

TEST(Gait, StanceCountsThroughCycle) {
  const std::map<GaitName, int> expect{{GaitName::Wave, 5}, {GaitName::Ripple, 4}, {GaitName::Amble, 4},
                                       {GaitName::Tripod, 3}};
  for (GaitName g : kGaits) {
    for (int i = 0; i < 1000; ++i) {
      EXPECT_EQ(stance_count(gait_phase(gait_spec(g), 0.7 * i / 1000.0, 0.7)), expect.at(g))
          << to_string(g) << " at sample " << i;
    }
    // Exactly on every transition too.
    for (int k = 0; k <= 12; ++k) {
      EXPECT_EQ(stance_count(gait_phase(gait_spec(g), 0.7 * k / 6.0, 0.7)), expect.at(g))
          << to_string(g) << " at boundary " << k;
    }
  }
}

TEST(Gait, DutyFactorMatchesStanceTime) {
  for (GaitName g : kGaits) {
    const GaitSpec s = gait_spec(g);
    for (int leg = 0; leg < 6; ++leg) {
      int stance = 0;
      for (int i = 0; i < 6000; ++i) stance += !gait_phase(s, (i + 0.5) / 6000.0, 1.0)[leg].swing;
      EXPECT_NEAR(stance / 6000.0, s.duty, 1e-3);
    }
  }
}

TEST(Gait, PhaseFractionAdvancesWithinPhase) {
  const GaitSpec s = gait_spec(GaitName::Amble);
  const auto a = gait_phase(s, 0.10, 1.0);
  const auto b = gait_phase(s, 0.20, 1.0);
  for (int leg = 0; leg < 6; ++leg) {
    ASSERT_EQ(a[leg].swing, b[leg].swing);
    EXPECT_GT(b[leg].fraction, a[leg].fraction);
    EXPECT_GE(a[leg].fraction, 0.0);
    EXPECT_LT(b[leg].fraction, 1.0);
  }
}

TEST(Gait, RippleNeverSwingsSameSideNeighbours) {
  const GaitSpec s = gait_spec(GaitName::Ripple);
  for (int i = 0; i < 600; ++i) {
    const auto ph = gait_phase(s, (i + 0.5) / 600.0, 1.0);
    // Leg order L1 R1 L2 R2 L3 R3: neighbours on a side are two apart.
    for (int leg = 0; leg + 2 < 6; ++leg) EXPECT_FALSE(ph[leg].swing && ph[leg + 2].swing);
  }
}

TEST(Gait, StaticallyStableThroughCycle) {
  const HexapodConfig cfg;
  for (GaitName g : kGaits) {
    double worst = 1.0;
    for (int i = 0; i < 1000; ++i) {
      const auto ph = gait_phase(gait_spec(g), (i + 0.5) / 1000.0, 1.0);
      worst = std::min(worst, static_stability(stance_points(cfg, ph), Eigen::Vector2d::Zero()));
    }
    EXPECT_GT(worst, 0.01) << to_string(g);
  }
}

TEST(Gait, SameSideNeighbourSwingIsMarginallyStable) {
  // Front and middle left in the air: the CoM lies on the L3-R1 diagonal.
  const HexapodConfig cfg;
  const auto feet = default_feet(cfg, 0.12);
  const std::vector<Eigen::Vector2d> support{feet[1].head<2>(), feet[3].head<2>(), feet[4].head<2>(),
                                             feet[5].head<2>()};
  EXPECT_NEAR(static_stability(support, Eigen::Vector2d::Zero()), 0.0, 1e-12);
}

TEST(Stability, EquilateralInradius) {
  const double side = 0.3;
  std::vector<Eigen::Vector2d> tri;
  for (int k = 0; k < 3; ++k) {
    const double a = kPi / 2 + 2 * kPi * k / 3;
    tri.emplace_back(side / std::sqrt(3.0) * std::cos(a), side / std::sqrt(3.0) * std::sin(a));
  }
  EXPECT_NEAR(static_stability(tri, Eigen::Vector2d::Zero()), side * std::sqrt(3.0) / 6.0, 1e-12);
}

TEST(Stability, MatchesPolygonOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int trial = 0; trial < 2000; ++trial) {
    // Convex polygon: sorted angles on an ellipse.
    const int n = 3 + trial % 4;
    std::vector<double> ang;
    std::uniform_real_distribution<double> ua(0.0, 2 * kPi);
    for (int i = 0; i < n; ++i) ang.push_back(ua(rng));
    std::sort(ang.begin(), ang.end());
    std::vector<Eigen::Vector2d> poly;
    for (double a : ang) poly.emplace_back(0.25 * std::cos(a), 0.15 * std::sin(a));
    double area = 0.0;
    for (int i = 0; i < n; ++i) area += poly[i].x() * poly[(i + 1) % n].y() - poly[i].y() * poly[(i + 1) % n].x();
    if (area < 1e-4) continue;
    const Eigen::Vector2d com(u(rng), u(rng));
    double dmin = 1e9;
    for (int i = 0; i < n; ++i) dmin = std::min(dmin, segment_distance(com, poly[i], poly[(i + 1) % n]));
    auto shuffled = poly;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const double m = static_stability(shuffled, com);
    EXPECT_NEAR(std::abs(m), dmin, 1e-9);
    if (dmin > 1e-9) EXPECT_EQ(m > 0, point_in_polygon(com, poly));
  }
}

TEST(Stability, DegenerateSupport) {
  auto code = [](const std::vector<Eigen::Vector2d>& pts) {
    try {
      static_stability(pts, Eigen::Vector2d::Zero());
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ParseError;
  };
  EXPECT_EQ(code({{0, 0}, {1, 0}}), ErrorCode::DegenerateSupport);
  EXPECT_EQ(code({{0, 0}, {1, 0}, {2, 0}, {3, 0}}), ErrorCode::DegenerateSupport);
}

TEST(Torque, SingleLegLeverArms) {
  const LegGeometry g;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const LegId leg = kLegs[i % 6];
    const JointAngles q = random_knee_up(rng, g);
    const auto p = leg_chain_points(g, leg, q);
    const double f = 10.0;
    const JointAngles t = leg_joint_torques(g, leg, q, Vec3d(0, 0, f));
    EXPECT_NEAR(t.coxa, 0.0, 1e-12);
    EXPECT_NEAR(std::abs(t.femur), f * (p[3] - p[1]).head<2>().norm(), 1e-12);
    EXPECT_NEAR(std::abs(t.tibia), f * (p[3] - p[2]).head<2>().norm(), 1e-12);
  }
  // Horizontal push perpendicular to the leg loads the coxa by F times reach.
  const auto p = leg_chain_points(g, LegId::L2, {});
  const JointAngles t = leg_joint_torques(g, LegId::L2, {}, Vec3d(2.0, 0, 0));
  EXPECT_NEAR(std::abs(t.coxa), 2.0 * (p[3] - p[0]).norm(), 1e-12);
}

TEST(Torque, TripodForcesMatchEquilibriumSolve) {
  const HexapodConfig cfg;
  StanceConfig s;
  s.feet = default_feet(cfg, 0.12);
  const std::array<int, 3> legs{0, 3, 4};  // L1 R2 L3
  for (int i : legs) s.stance[i] = true;
  const TorqueEstimate e = joint_torque_estimate(cfg, s, 0.0);
  Eigen::Matrix3d a;
  for (int k = 0; k < 3; ++k) a.col(k) << 1.0, s.feet[legs[k]].x(), s.feet[legs[k]].y();
  const Eigen::Vector3d f = a.fullPivLu().solve(Eigen::Vector3d(cfg.body_mass * cfg.gravity, 0, 0));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(e.leg_force[legs[k]], f[k], 1e-9);
  const double lever = cfg.stance_radius - cfg.geometry.coxa;
  EXPECT_NEAR(e.femur, f.maxCoeff() * lever, 1e-9);
  EXPECT_DOUBLE_EQ(e.coxa, 0.0);
}

TEST(Torque, FourLegDistributionIsMinMax) {
  // Brute force over the one-parameter family of balanced force sets.
  const HexapodConfig cfg;
  StanceConfig s;
  s.feet = default_feet(cfg, 0.12);
  const std::array<int, 4> legs{1, 2, 4, 5};  // R1 L2 L3 R3
  for (int i : legs) s.stance[i] = true;
  const double w = cfg.body_mass * cfg.gravity;
  const TorqueEstimate e = joint_torque_estimate(cfg, s, 0.0);
  double sum = 0.0;
  Eigen::Vector2d moment = Eigen::Vector2d::Zero();
  for (int i : legs) {
    sum += e.leg_force[i];
    moment += e.leg_force[i] * s.feet[i].head<2>();
    EXPECT_GE(e.leg_force[i], -1e-12);
  }
  EXPECT_NEAR(sum, w, 1e-9);
  EXPECT_LT(moment.norm(), 1e-9);

  Eigen::Matrix<double, 3, 4> a;
  for (int k = 0; k < 4; ++k) a.col(k) << 1.0, s.feet[legs[k]].x(), s.feet[legs[k]].y();
  const Eigen::Vector4d f0 = a.completeOrthogonalDecomposition().solve(Eigen::Vector3d(w, 0, 0));
  const Eigen::Vector4d null = a.fullPivLu().kernel().col(0);
  const double lever = cfg.stance_radius - cfg.geometry.coxa;
  double brute = 1e9;
  for (int i = -200000; i <= 200000; ++i) {
    const Eigen::Vector4d f = f0 + (i * 1e-4) * null;
    if (f.minCoeff() < 0) continue;
    brute = std::min(brute, f.maxCoeff() * lever);
  }
  EXPECT_LE(e.max(), brute + 1e-9);
  EXPECT_NEAR(e.max(), brute, 1e-3);
}

TEST(Torque, ZeroGravityAndLinearity) {
  HexapodConfig cfg;
  cfg.gravity = 0.0;
  const GaitSpec tripod = gait_spec(GaitName::Tripod);
  EXPECT_DOUBLE_EQ(gait_torque_estimate(cfg, tripod, 0.5).max(), 0.0);
  cfg = HexapodConfig{};
  const double t1 = gait_torque_estimate(cfg, tripod, 0.0).max();
  const double t2 = gait_torque_estimate(cfg, tripod, cfg.body_mass).max();
  EXPECT_NEAR(t2, 2.0 * t1, 1e-9);
}

TEST(Torque, UnsupportedComThrows) {
  HexapodConfig cfg;
  cfg.com = Eigen::Vector2d(0.5, 0.0);
  StanceConfig s;
  s.feet = default_feet(cfg, 0.12);
  s.stance.fill(true);
  try {
    joint_torque_estimate(cfg, s, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateSupport);
  }
  s.stance = {true, true, false, false, false, false};
  EXPECT_THROW(joint_torque_estimate(cfg, s, 0.0), Error);
}

TEST(Payload, TripodTorqueAtNominalMass) {
  const HexapodConfig cfg;
  const double tau = gait_torque_estimate(cfg, gait_spec(GaitName::Tripod), 0.0).max();
  EXPECT_GE(tau, 1.005);
  EXPECT_LE(tau, 1.125);
  const double margin = 1.0 - tau / cfg.stall_torque;
  EXPECT_GE(margin, 0.25);
  EXPECT_LE(margin, 0.33);
}

TEST(Payload, AmbleCarriesMoreThanTripod) {
  const HexapodConfig cfg;
  const double amble = max_payload(cfg, gait_spec(GaitName::Amble));
  const double tripod = max_payload(cfg, gait_spec(GaitName::Tripod));
  EXPECT_GE(amble - tripod, 0.15);
  EXPECT_LE(amble - tripod, 0.25);
  EXPECT_GE(amble, 0.15);
  EXPECT_LT(amble, 0.25);
}

TEST(Payload, MonotoneInStanceLegs) {
  const HexapodConfig cfg;
  const double wave = max_payload(cfg, gait_spec(GaitName::Wave));
  const double ripple = max_payload(cfg, gait_spec(GaitName::Ripple));
  const double amble = max_payload(cfg, gait_spec(GaitName::Amble));
  const double tripod = max_payload(cfg, gait_spec(GaitName::Tripod));
  EXPECT_GE(wave, ripple);
  EXPECT_GE(ripple, tripod);
  EXPECT_GE(amble, tripod);
}

TEST(Payload, LimitIsTight) {
  const HexapodConfig cfg;
  for (GaitName g : kGaits) {
    const double p = max_payload(cfg, gait_spec(g));
    EXPECT_LE(gait_torque_estimate(cfg, gait_spec(g), p).max(), cfg.allowed_torque() + 1e-12);
    EXPECT_GT(gait_torque_estimate(cfg, gait_spec(g), p + 1e-6).max(), cfg.allowed_torque());
  }
}

TEST(Payload, MasslessBodyUsesWholeBudget) {
  HexapodConfig cfg;
  cfg.body_mass = 0.0;
  const GaitSpec g = gait_spec(GaitName::Tripod);
  const double p = max_payload(cfg, g);
  EXPECT_NEAR(gait_torque_estimate(cfg, g, p).max(), cfg.allowed_torque(), 1e-6);
  cfg.body_mass = 100.0;
  EXPECT_DOUBLE_EQ(max_payload(cfg, g), 0.0);
}

TEST(BodyHeight, OptimaAndGridOracle) {
  HexapodConfig cfg;
  EXPECT_DOUBLE_EQ(optimal_body_height(cfg, HeightMode::Stance), 0.14);
  EXPECT_DOUBLE_EQ(optimal_body_height(cfg, HeightMode::Gait), 0.12);
  EXPECT_NEAR(body_current(cfg, HeightMode::Gait, 0.12), 3.02, 1e-12);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> shift(-0.03, 0.03);
  for (int trial = 0; trial < 20; ++trial) {
    const double s = shift(rng);
    // Same curve moved right by s.
    const auto& c = HexapodConfig{}.gait_current;
    cfg.gait_current = {c[0], c[1] - 2 * c[0] * s, c[2] - c[1] * s + c[0] * s * s};
    double best_h = 0.0, best_i = 1e9;
    for (int i = 0; i <= 30000; ++i) {
      const double h = 0.03 + i * 1e-5;
      const double cur = body_current(cfg, HeightMode::Gait, h);
      if (cur < best_i) best_i = cur, best_h = h;
    }
    EXPECT_NEAR(optimal_body_height(cfg, HeightMode::Gait), best_h, 1e-5);
    EXPECT_NEAR(optimal_body_height(cfg, HeightMode::Gait), 0.12 + s, 1e-12);
  }
  cfg.stance_current = {-1.0, 0.0, 1.0};
  EXPECT_THROW(optimal_body_height(cfg, HeightMode::Stance), Error);
}

TEST(BodyPose, NominalPoseKeepsStanceAngles) {
  const HexapodConfig cfg;
  const double h = 0.12;
  auto world = default_feet(cfg, h);
  for (auto& f : world) f.z() += h;
  const auto q = apply_body_pose(cfg.geometry, BodyPose{0, 0, h, 0, 0}, world);
  const auto body = default_feet(cfg, h);
  for (int i = 0; i < 6; ++i) {
    const JointAngles r = leg_ik(cfg.geometry, kLegs[i], body[i]);
    EXPECT_NEAR(q[i].coxa, r.coxa, 1e-12);
    EXPECT_NEAR(q[i].femur, r.femur, 1e-12);
    EXPECT_NEAR(q[i].tibia, r.tibia, 1e-12);
  }
  // Raising the body lowers every foot in the body frame by the same amount.
  const auto up = apply_body_pose(cfg.geometry, BodyPose{0, 0, h + 0.02, 0, 0}, world);
  for (int i = 0; i < 6; ++i) {
    const Vec3d d = leg_fk(cfg.geometry, kLegs[i], up[i]) - body[i];
    EXPECT_LT((d - Vec3d(0, 0, -0.02)).norm(), 1e-9);
  }
}

TEST(BodyPose, WorldFeetStayFixed) {
  const HexapodConfig cfg;
  auto world = default_feet(cfg, 0.12);
  for (auto& f : world) f.z() = 0.0;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> xy(-0.02, 0.02), z(0.10, 0.14), tilt(-6 * kDeg, 6 * kDeg);
  for (int i = 0; i < 500; ++i) {
    const BodyPose p{xy(rng), xy(rng), z(rng), tilt(rng), tilt(rng)};
    const auto q = apply_body_pose(cfg.geometry, p, world);
    const Pose6d t = body_transform(p);
    for (int k = 0; k < 6; ++k) EXPECT_LT((t.transform(leg_fk(cfg.geometry, kLegs[k], q[k])) - world[k]).norm(), 1e-9);
  }
  try {
    apply_body_pose(cfg.geometry, BodyPose{0, 0, 0.12, 0.6, 0}, world);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Unreachable);
  }
}

TEST(HexapodConfigIo, RoundTripAndValidation) {
  HexapodConfig cfg;
  cfg.stance_radius = 0.15;
  cfg.geometry.mounts[2].yaw = 80 * kDeg;
  std::stringstream ss;
  write_hexapod_config(ss, cfg);
  const HexapodConfig back = read_hexapod_config(ss);
  EXPECT_DOUBLE_EQ(back.stance_radius, 0.15);
  EXPECT_NEAR(back.geometry.mounts[2].yaw, 80 * kDeg, 1e-12);
  EXPECT_DOUBLE_EQ(back.geometry.tibia, cfg.geometry.tibia);

  std::istringstream partial(R"({"body_mass": 2.0})");
  EXPECT_DOUBLE_EQ(read_hexapod_config(partial).body_mass, 2.0);

  auto code = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_hexapod_config(in);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::NoPath;
  };
  EXPECT_EQ(code("{"), ErrorCode::ParseError);
  EXPECT_EQ(code(R"({"safety_margin": 1.5})"), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code(R"({"body_mass": "heavy"})"), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code(R"({"geometry": {"mounts": [{"leg": "M9", "position": [0, 0], "yaw_deg": 0}]}})"),
            ErrorCode::ConfigInvalid);
}

TEST(HexapodConfigIo, CheckedInConfigMatchesDefaults) {
  std::ifstream in(COOPSAR_SOURCE_DIR "/config/hexapod.json");
  ASSERT_TRUE(in);
  const HexapodConfig cfg = read_hexapod_config(in);
  EXPECT_DOUBLE_EQ(cfg.stance_radius, HexapodConfig{}.stance_radius);
}

TEST(TorqueCsv, Layout) {
  std::ostringstream out;
  write_torque_csv(out, HexapodConfig{});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "gait,joint,torque_nm,margin_pct");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream row(line);
    std::string gait, joint, tau, margin;
    std::getline(row, gait, ',');
    std::getline(row, joint, ',');
    std::getline(row, tau, ',');
    std::getline(row, margin, ',');
    EXPECT_NO_THROW(gait_from_string(gait));
    EXPECT_NEAR(std::stod(margin), 100.0 * (1.0 - std::stod(tau) / 1.5), 1e-3);
  }
  EXPECT_EQ(rows, 12);
}
