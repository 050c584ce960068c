#include <coopsar/error.hpp>
#include <coopsar/worldsim.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

using namespace coopsar;

namespace {

constexpr double kPi = std::numbers::pi;

TrueTrajectory static_traj(const Quatd& q) {
  return TrueTrajectory({{0.0, {Vec3d(1, 2, 3), q}}, {10.0, {Vec3d(1, 2, 3), q}}});
}

// Brute-force visibility: frustum by explicit projection, occlusion by
// dense sampling of the open segment.
std::set<int> oracle_visible(const Pose6d& cam, const World& w, const CameraConfig& cfg) {
  std::set<int> ids;
  const Mat3d r = cam.orientation.matrix();
  for (const Landmark& l : w.landmarks) {
    const Vec3d d = l.position - cam.position;
    const double fwd = d.dot(r.col(0)), left = d.dot(r.col(1)), up = d.dot(r.col(2));
    if (d.norm() > cfg.max_range || d.norm() < cfg.min_range) continue;
    if (fwd <= 0) continue;
    if (std::abs(std::atan(left / fwd)) > cfg.hfov_deg * kPi / 360.0) continue;
    if (std::abs(std::atan(up / std::hypot(fwd, left))) > cfg.vfov_deg * kPi / 360.0) continue;
    bool blocked = false;
    for (int k = 1; k < 4000 && !blocked; ++k) {
      const Vec3d p = cam.position + d * (k / 4000.0);
      for (const Box& b : w.obstacles) {
        if ((p.array() > b.min.array()).all() && (p.array() < b.max.array()).all()) blocked = true;
      }
    }
    if (!blocked) ids.insert(l.id);
  }
  return ids;
}

std::set<int> ids_of(const std::vector<LandmarkObservation>& obs) {
  std::set<int> s;
  for (const auto& o : obs) s.insert(o.id);
  return s;
}

World random_scene(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-6.0, 6.0), sz(0.3, 2.0);
  World w;
  w.bounds = {Vec3d(-10, -10, -10), Vec3d(10, 10, 10)};
  for (int i = 0; i < 6; ++i) {
    const Vec3d c(u(rng), u(rng), u(rng) / 3.0);
    const Vec3d e(sz(rng), sz(rng), sz(rng));
    w.obstacles.push_back({c - e / 2, c + e / 2});
  }
  for (int id = 0; id < 200; ++id) {
    const Vec3d p(u(rng), u(rng), u(rng) / 3.0);
    bool inside = false;
    for (const Box& b : w.obstacles) inside = inside || b.contains(p, 0.01);
    if (!inside) w.landmarks.push_back({id, p, id});
  }
  return w;
}

}  // namespace

TEST(Imu, StaticPoseNoiseless) {
  const Quatd q = euler_to_quat(EulerRpyd{0.2, 0.3, -1.0});
  const ImuSample s = sample_imu(static_traj(q), 4.2, {}, 1);
  EXPECT_EQ(s.gyro, Vec3d::Zero());
  EXPECT_LT((s.accel - q.matrix().transpose() * Vec3d(0, 0, 9.81)).norm(), 1e-12);
  EXPECT_LT((*s.mag - q.matrix().transpose() * Vec3d::UnitX()).norm(), 1e-12);
}

TEST(Imu, ConstantYawRate) {
  std::vector<TrajectorySample> samples;
  for (int k = 0; k <= 100; ++k) samples.push_back({k * 0.1, planar_pose(0.0, 0.0, 0.0, 0.3 * k * 0.1)});
  const TrueTrajectory traj(samples);
  for (double t : {0.0, 0.35, 5.0, 9.99, 10.0}) {
    const ImuSample s = sample_imu(traj, t, {}, 2);
    EXPECT_NEAR(s.gyro.z(), 0.3, 1e-12);
    EXPECT_NEAR(s.gyro.x(), 0.0, 1e-12);
  }
}

TEST(Imu, OutOfSpanThrows) {
  try {
    sample_imu(static_traj(Quatd()), 10.5, {}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfSpan);
  }
}

TEST(Imu, NoiseMeanAndDeterminism) {
  const TrueTrajectory traj({{0.0, {}}, {1e4, {}}});
  const ImuNoiseConfig cfg{.gyro_sigma = 0.1, .accel_sigma = 0.2, .mag_sigma = 0.05};
  Vec3d gsum = Vec3d::Zero(), asum = Vec3d::Zero();
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const ImuSample s = sample_imu(traj, k * 1.0, cfg, 5);
    gsum += s.gyro;
    asum += s.accel;
  }
  EXPECT_LT((gsum / n).cwiseAbs().maxCoeff(), 3 * 0.1 / 100);
  EXPECT_LT((asum / n - Vec3d(0, 0, 9.81)).cwiseAbs().maxCoeff(), 3 * 0.2 / 100);
  const ImuSample a = sample_imu(traj, 17.0, cfg, 5), b = sample_imu(traj, 17.0, cfg, 5);
  EXPECT_EQ(a.gyro, b.gyro);
  EXPECT_EQ(a.accel, b.accel);
  EXPECT_NE(sample_imu(traj, 17.0, cfg, 6).gyro, a.gyro);
}

TEST(Camera, LandmarkAheadAndBehind) {
  World w;
  w.landmarks = {{0, Vec3d(1, 0, 0), 0}, {1, Vec3d(-1, 0, 0), 1}};
  const CameraConfig cfg{.hfov_deg = 90, .vfov_deg = 90, .max_range = 10};
  const auto obs = observe_landmarks(Pose6d{}, w, cfg);
  ASSERT_EQ(obs.size(), 1u);
  EXPECT_EQ(obs[0].id, 0);
  EXPECT_EQ(obs[0].bearing, 0.0);
  EXPECT_EQ(obs[0].range, 1.0);
}

TEST(Camera, LandmarkOnFacingSurfaceIsVisible) {
  World w;
  w.obstacles.push_back({Vec3d(2, -1, -1), Vec3d(3, 1, 1)});
  w.landmarks = {{0, Vec3d(2, 0.3, 0.2), 0}, {1, Vec3d(3, 0.3, 0.2), 1}};
  const auto ids = ids_of(observe_landmarks(Pose6d{}, w));
  EXPECT_EQ(ids, std::set<int>{0});
}

TEST(Camera, MatchesBruteForceOracle) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-4.0, 4.0), a(-kPi, kPi);
  const CameraConfig cfg;
  for (int scene = 0; scene < 40; ++scene) {
    const World w = random_scene(rng);
    for (int view = 0; view < 5; ++view) {
      const Pose6d cam{Vec3d(u(rng), u(rng), 0.0), euler_to_quat(EulerRpyd{0.0, a(rng) / 6, a(rng)})};
      bool inside = false;
      for (const Box& b : w.obstacles) inside = inside || b.contains(cam.position);
      if (inside) continue;
      EXPECT_EQ(ids_of(observe_landmarks(cam, w, cfg)), oracle_visible(cam, w, cfg));
    }
  }
}

TEST(Camera, RemovingObstacleNeverShrinksVisibleSet) {
  std::mt19937_64 rng(32);
  for (int scene = 0; scene < 30; ++scene) {
    World w = random_scene(rng);
    const Pose6d cam{Vec3d(0, 0, 0.0), Quatd::about_z(scene * 0.4)};
    const auto before = ids_of(observe_landmarks(cam, w));
    w.obstacles.erase(w.obstacles.begin());
    const auto after = ids_of(observe_landmarks(cam, w));
    EXPECT_TRUE(std::includes(after.begin(), after.end(), before.begin(), before.end()));
  }
}

TEST(Vo, ValidityThreshold) {
  const Pose6d a{}, b{Vec3d(0.1, 0, 0), Quatd::about_z(0.05)};
  EXPECT_FALSE(simulate_vo(a, b, 0, {}, 1).valid);
  EXPECT_FALSE(simulate_vo(a, b, 14, {}, 1).valid);
  EXPECT_TRUE(simulate_vo(a, b, 15, {}, 1).valid);
  const VoEstimate e = simulate_vo(a, b, 100, {.sigma_translation = 0, .sigma_rotation = 0}, 1);
  EXPECT_LT((e.relative.position - b.position).norm(), 1e-15);
  EXPECT_LT(e.relative.orientation.angular_distance(b.orientation), 1e-15);
}

TEST(Vo, NoiseScalesWithVisibleCount) {
  const Pose6d a{}, b{Vec3d(0.1, 0, 0), {}};
  double acc = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const double dx = simulate_vo(a, b, 25, {}, static_cast<std::uint64_t>(k)).relative.position.x() - 0.1;
    acc += dx * dx;
  }
  EXPECT_NEAR(std::sqrt(acc / n), 0.002, 0.0001);
}

TEST(Depth, EmptyWorldAndUnitBox) {
  World w;
  EXPECT_TRUE(depth_scan(Pose6d{}, w).points().empty());
  w.obstacles.push_back({Vec3d(1.5, -0.5, -0.5), Vec3d(2.5, 0.5, 0.5)});
  const DepthScan s = depth_scan(Pose6d{}, w, {.hfov_deg = 10, .resolution_deg = 1});
  const DepthRay& forward = s.rays[5];
  EXPECT_TRUE(forward.hit);
  EXPECT_NEAR(forward.range, 1.5, 1e-12);
}

TEST(Depth, PointsLieOnBoxSurfaces) {
  std::mt19937_64 rng(33);
  for (int scene = 0; scene < 20; ++scene) {
    const World w = random_scene(rng);
    const Pose6d cam{Vec3d(0, 0, 0), Quatd::about_z(scene * 0.7)};
    bool inside = false;
    for (const Box& b : w.obstacles) inside = inside || b.contains(cam.position);
    if (inside) continue;
    const DepthConfig cfg{.elevations_deg = {-10, 0, 10}};
    for (const Vec3d& p : depth_scan(cam, w, cfg).points()) {
      double best = 1e9;
      for (const Box& b : w.obstacles) {
        if (!b.contains(p, 1e-6)) continue;
        const Vec3d lo = p - b.min, hi = b.max - p;
        best = std::min(best, std::min(lo.cwiseAbs().minCoeff(), hi.cwiseAbs().minCoeff()));
      }
      EXPECT_LT(best, 1e-6);
    }
  }
}

TEST(World, GeneratorInvariantsAndFileRoundTrip) {
  const World w = generate_world(42);
  EXPECT_EQ(w.landmarks.size(), 300u);
  EXPECT_GE(w.obstacles.size(), 4u + 5u);
  EXPECT_LE(w.obstacles.size(), 4u + 10u);
  EXPECT_GE(w.victims.size(), 1u);
  EXPECT_LE(w.victims.size(), 5u);
  EXPECT_NO_THROW(w.validate());
  std::stringstream ss;
  write_world(ss, w);
  const World r = read_world(ss);
  ASSERT_EQ(r.landmarks.size(), w.landmarks.size());
  for (std::size_t i = 0; i < w.landmarks.size(); ++i) EXPECT_EQ(r.landmarks[i].position, w.landmarks[i].position);
  ASSERT_EQ(r.victims.size(), w.victims.size());
  EXPECT_EQ(r.victims[0].pose.position, w.victims[0].pose.position);
  EXPECT_EQ(r.obstacles.back().max, w.obstacles.back().max);
  // Same seed, same world.
  std::stringstream a, b;
  write_world(a, generate_world(42));
  write_world(b, generate_world(42));
  EXPECT_EQ(a.str(), b.str());
}

TEST(World, RejectsDuplicateLandmarkIds) {
  std::stringstream ss(R"({"bounds":{"min":[0,0,0],"max":[1,1,1]},
    "landmarks":[{"id":1,"position":[0,0,0]},{"id":1,"position":[1,0,0]}]})");
  try {
    read_world(ss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
  }
}

TEST(World, MissingFieldNamed) {
  std::stringstream ss(R"({"landmarks":[]})");
  try {
    read_world(ss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bounds"), std::string::npos);
  }
}

TEST(Trajectory, WaypointFollowerReachesEnd) {
  const TrueTrajectory t = make_waypoint_trajectory({Vec3d(0, 0, 1), Vec3d(4, 0, 1), Vec3d(4, 3, 1)}, 0.5, 20.0);
  EXPECT_LT((t.samples().back().pose.position - Vec3d(4, 3, 1)).norm(), 1e-12);
  EXPECT_NEAR(quat_to_euler(t.samples().back().pose.orientation).yaw, kPi / 2, 0.6);
  for (std::size_t i = 1; i < t.samples().size(); ++i) {
    EXPECT_LE((t.samples()[i].pose.position - t.samples()[i - 1].pose.position).norm(), 0.5 / 20.0 + 1e-12);
  }
}
