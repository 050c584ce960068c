#include <coopsar/error.hpp>
#include <coopsar/mapgraph.hpp>

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

using namespace coopsar;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Vec3d> scatter(std::size_t n, std::uint64_t seed, double half = 5.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half, half);
  std::vector<Vec3d> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  return pts;
}

std::vector<BodyObservation> observe(const Pose6d& pose, const std::vector<Vec3d>& lms,
                                     const std::vector<int>& ids) {
  std::vector<BodyObservation> obs;
  const Pose6d inv = pose_inverse(pose);
  for (int id : ids) obs.push_back({id, inv.transform(lms[id])});
  return obs;
}

std::vector<int> range_ids(int lo, int hi) {
  std::vector<int> v;
  for (int i = lo; i < hi; ++i) v.push_back(i);
  return v;
}

Keyframe keyframe(int id, std::vector<int> sig) {
  Keyframe k;
  k.id = id;
  for (int s : sig) k.observations.push_back({s, Vec3d(s, s * s % 7, s % 3)});
  k.signature = signature_of(k.observations);
  return k;
}

std::string serialize(const MapGraph& g) {
  std::ostringstream s;
  write_map_graph(s, g);
  return s.str();
}

double residual(const Pose6d& t, const std::vector<std::pair<Vec3d, Vec3d>>& pairs) {
  double r = 0;
  for (const auto& [a, b] : pairs) r += (t.transform(a) - b).squaredNorm();
  return r;
}

Pose6d random_pose(std::mt19937_64& rng, double span = 3.0) {
  std::uniform_real_distribution<double> u(-span, span);
  std::normal_distribution<double> n;
  return {Vec3d(u(rng), u(rng), u(rng)), Quatd(n(rng), n(rng), n(rng), n(rng))};
}

// Square loop with `per_side` keyframes per side, true poses and noisy
// odometry chained from them; optional exact loop edge back to keyframe 0.
struct LoopFixture {
  std::vector<Pose6d> truth;
  MapGraph graph;
};

LoopFixture square_loop(int per_side, double sigma_t, std::uint64_t seed, bool loop_edge) {
  LoopFixture f;
  const double side = 4.0;
  for (int s = 0; s < 4; ++s) {
    for (int k = 0; k < per_side; ++k) {
      const double d = side * k / per_side;
      const double yaw = s * kPi / 2;
      const Vec3d corner = s == 0 ? Vec3d(0, 0, 1.5) : s == 1 ? Vec3d(side, 0, 1.5) : s == 2 ? Vec3d(side, side, 1.5) : Vec3d(0, side, 1.5);
      f.truth.push_back({corner + d * Vec3d(std::cos(yaw), std::sin(yaw), 0), Quatd::about_z(yaw)});
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma_t);
  Pose6d est = f.truth[0];
  Matrix6d info = Matrix6d::Zero();
  info.diagonal() << Vec3d::Constant(1 / (0.02 * 0.02)), Vec3d::Constant(1 / (0.01 * 0.01));
  for (std::size_t i = 0; i < f.truth.size(); ++i) {
    if (i > 0) {
      Pose6d rel = pose_between(f.truth[i - 1], f.truth[i]);
      rel.position += Vec3d(n(rng), n(rng), n(rng));
      est = est * rel;
      f.graph.edges.push_back({static_cast<int>(i - 1), static_cast<int>(i), EdgeKind::Odometry, rel, info});
    }
    Keyframe k;
    k.id = static_cast<int>(i);
    k.pose = est;
    f.graph.keyframes.push_back(k);
  }
  if (loop_edge) {
    const int last = static_cast<int>(f.truth.size()) - 1;
    Matrix6d li = Matrix6d::Zero();
    li.diagonal() << Vec3d::Constant(1e4), Vec3d::Constant(4e4);
    f.graph.edges.push_back({0, last, EdgeKind::LoopClosure, pose_between(f.truth[0], f.truth[last]), li});
  }
  return f;
}

double ate(const std::vector<Pose6d>& truth, const MapGraph& g) {
  double s = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += (truth[i].position - g.keyframes[i].pose.position).squaredNorm();
  return std::sqrt(s / truth.size());
}

}  // namespace

TEST(Jaccard, SymmetricAndBounded) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> id(0, 40);
  for (int t = 0; t < 500; ++t) {
    std::vector<BodyObservation> a, b;
    for (int i = 0; i < 15; ++i) a.push_back({id(rng), {}});
    for (int i = 0; i < 12; ++i) b.push_back({id(rng), {}});
    const auto sa = signature_of(a), sb = signature_of(b);
    EXPECT_EQ(jaccard(sa, sb), jaccard(sb, sa));
    std::set<int> u(sa.begin(), sa.end()), inter;
    u.insert(sb.begin(), sb.end());
    for (int x : sa) {
      if (std::binary_search(sb.begin(), sb.end(), x)) inter.insert(x);
    }
    EXPECT_DOUBLE_EQ(jaccard(sa, sb), double(inter.size()) / u.size());
  }
}

TEST(Keyframes, FirstAlwaysInserted) {
  MapGraph g;
  EXPECT_TRUE(maybe_add_keyframe(g, Pose6d::identity(), {}, 0.0));
  EXPECT_EQ(g.keyframes.size(), 1u);
  EXPECT_TRUE(g.edges.empty());
}

TEST(Keyframes, StraightTenMetreRun) {
  MapGraph g;
  int added = 0;
  for (int i = 0; i <= 1000; ++i) {
    added += maybe_add_keyframe(g, Pose6d::from_translation(Vec3d(i * 0.01, 0, 0)), {}, i * 0.01);
  }
  // Keyframes at 0, 0.3, ..., 9.9.
  EXPECT_EQ(added, 34);
  EXPECT_EQ(g.edges.size(), 33u);
  for (const GraphEdge& e : g.edges) {
    EXPECT_EQ(e.to, e.from + 1);
    EXPECT_EQ(e.kind, EdgeKind::Odometry);
  }
}

TEST(Keyframes, RotationThreshold) {
  MapGraph g;
  maybe_add_keyframe(g, Pose6d::identity(), {}, 0.0);
  EXPECT_FALSE(maybe_add_keyframe(g, planar_pose(0.0, 0.0, 0.0, 14.0 * kPi / 180), {}, 1.0));
  EXPECT_TRUE(maybe_add_keyframe(g, planar_pose(0.0, 0.0, 0.0, 15.0 * kPi / 180), {}, 2.0));
}

TEST(Keyframes, PausedLeavesGraphUnchanged) {
  MapGraph g;
  maybe_add_keyframe(g, Pose6d::identity(), {}, 0.0);
  VoEstimate bad;
  bad.valid = false;
  mapping_gate(g, bad);
  const std::string before = serialize(g);
  for (int i = 1; i < 50; ++i) {
    EXPECT_FALSE(maybe_add_keyframe(g, Pose6d::from_translation(Vec3d(i, 0, 0)), {{i, Vec3d(1, 0, 0)}}, i));
  }
  EXPECT_EQ(serialize(g), before);
}

TEST(Keyframes, LandmarkAverageOfProjections) {
  MapGraph g;
  maybe_add_keyframe(g, Pose6d::identity(), {{7, Vec3d(1, 0, 0)}}, 0.0);
  maybe_add_keyframe(g, Pose6d::from_translation(Vec3d(1, 0, 0)), {{7, Vec3d(0.2, 0, 0)}}, 1.0);
  EXPECT_TRUE(g.landmarks.at(7).position.isApprox(Vec3d(1.1, 0, 0), 1e-12));
  EXPECT_EQ(g.landmarks.at(7).count, 2);
}

TEST(MappingGate, Transitions) {
  MapGraph g;
  VoEstimate vo;
  vo.valid = false;
  vo.timestamp = 1.0;
  EXPECT_EQ(mapping_gate(g, vo), MappingState::Paused);
  vo.timestamp = 2.0;
  EXPECT_EQ(mapping_gate(g, vo), MappingState::Paused);
  vo.valid = true;
  vo.timestamp = 3.0;
  EXPECT_EQ(mapping_gate(g, vo), MappingState::Active);
  ASSERT_EQ(g.events.size(), 2u);
  EXPECT_EQ(g.events[0].timestamp, 1.0);
  EXPECT_EQ(g.events[0].to, MappingState::Paused);
  EXPECT_EQ(g.events[1].timestamp, 3.0);
  EXPECT_EQ(g.events[1].to, MappingState::Active);
}

TEST(RigidAlign, IdentityAndQuarterTurn) {
  const auto pts = scatter(10, 3);
  std::vector<std::pair<Vec3d, Vec3d>> same, turned;
  const Quatd qz = Quatd::about_z(kPi / 2);
  for (const Vec3d& p : pts) {
    same.emplace_back(p, p);
    turned.emplace_back(p, Vec3d(-p.y(), p.x(), p.z()));
  }
  const Pose6d id = rigid_align(same);
  EXPECT_NEAR(id.position.norm(), 0.0, 1e-9);
  EXPECT_NEAR(id.orientation.angle(), 0.0, 1e-9);
  const Pose6d t = rigid_align(turned);
  EXPECT_NEAR(t.orientation.angular_distance(qz), 0.0, 1e-9);
  EXPECT_NEAR(t.position.norm(), 0.0, 1e-9);
}

TEST(RigidAlign, NoRandomCandidateBeatsIt) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.01), n;
  const auto pts = scatter(20, 5);
  const Pose6d truth = random_pose(rng);
  std::vector<std::pair<Vec3d, Vec3d>> pairs;
  for (const Vec3d& p : pts) pairs.emplace_back(p, truth.transform(p) + Vec3d(noise(rng), noise(rng), noise(rng)));
  const double best = residual(rigid_align(pairs), pairs);
  double lower = std::numeric_limits<double>::infinity();
  for (int c = 0; c < 100000; ++c) {
    // Half the candidates are small perturbations of the truth so the search
    // probes the neighbourhood of the optimum.
    Pose6d cand;
    if (c % 2 == 0) {
      cand = random_pose(rng);
    } else {
      Vector6d d;
      for (int k = 0; k < 6; ++k) d[k] = 0.01 * n(rng);
      cand = truth * pose_exp(d);
    }
    lower = std::min(lower, residual(cand, pairs));
  }
  EXPECT_LE(best, lower);
}

TEST(RigidAlign, Degenerate) {
  std::vector<std::pair<Vec3d, Vec3d>> line;
  for (int i = 0; i < 5; ++i) line.emplace_back(Vec3d(i, 0, 0), Vec3d(i, 0, 0));
  try {
    rigid_align(line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateConfiguration);
  }
  std::vector<std::pair<Vec3d, Vec3d>> same(4, {Vec3d(1, 1, 1), Vec3d(0, 0, 0)});
  EXPECT_THROW(rigid_align(same), Error);
  EXPECT_THROW(rigid_align({{Vec3d(0, 0, 0), Vec3d(0, 0, 0)}}), Error);
}

TEST(LoopClosure, DisjointSignaturesGiveNone) {
  MapGraph g;
  for (int i = 0; i < 10; ++i) g.keyframes.push_back(keyframe(i, range_ids(10 * i, 10 * i + 10)));
  const Keyframe q = keyframe(10, range_ids(500, 520));
  g.keyframes.push_back(q);
  EXPECT_FALSE(detect_loop_closure(g, q).has_value());
}

TEST(LoopClosure, ExactRevisitOfFirstKeyframe) {
  const auto lms = scatter(200, 8);
  MapGraph g;
  Pose6d pose = Pose6d::from_translation(Vec3d(0, 0, 1.5));
  const Pose6d start = pose;
  for (int i = 0; i < 21; ++i) {
    const std::vector<int> ids = i == 20 ? range_ids(0, 20) : range_ids(10 * i, 10 * i + 20);
    const Pose6d p = i == 20 ? start : planar_pose(0.1 * i, 0.05 * i, 1.5, 0.02 * i);
    Keyframe k;
    k.id = i;
    k.pose = p;
    k.observations = observe(p, lms, ids);
    k.signature = signature_of(k.observations);
    g.keyframes.push_back(k);
    pose = p;
  }
  const auto edge = detect_loop_closure(g, g.keyframes.back());
  ASSERT_TRUE(edge.has_value());
  EXPECT_EQ(edge->from, 0);
  EXPECT_EQ(edge->to, 20);
  EXPECT_EQ(edge->kind, EdgeKind::LoopClosure);
  EXPECT_LT(edge->relative.position.norm(), 1e-6);
  EXPECT_LT(edge->relative.orientation.angle(), 1e-6);
}

TEST(LoopClosure, RelativePoseMatchesTruth) {
  const auto lms = scatter(60, 9);
  MapGraph g;
  std::mt19937_64 rng(10);
  std::vector<Pose6d> poses;
  for (int i = 0; i < 8; ++i) poses.push_back(random_pose(rng));
  for (int i = 0; i < 8; ++i) {
    Keyframe k;
    k.id = i;
    k.pose = poses[i];
    k.observations = observe(poses[i], lms, i == 0 || i == 7 ? range_ids(0, 30) : range_ids(30, 60));
    k.signature = signature_of(k.observations);
    g.keyframes.push_back(k);
  }
  const auto edge = detect_loop_closure(g, g.keyframes.back());
  ASSERT_TRUE(edge.has_value());
  const Pose6d expected = pose_between(poses[0], poses[7]);
  EXPECT_NEAR((edge->relative.position - expected.position).norm(), 0.0, 1e-9);
  EXPECT_NEAR(edge->relative.orientation.angular_distance(expected.orientation), 0.0, 1e-9);
}

TEST(LoopClosure, ThresholdIsInclusive) {
  // |a ∩ b| / |a ∪ b| = 29/100 and 30/100.
  for (const auto& [lo, accepted] : std::vector<std::pair<int, bool>>{{36, false}, {35, true}}) {
    MapGraph g;
    g.keyframes.push_back(keyframe(0, range_ids(0, 65)));
    for (int i = 1; i < 7; ++i) g.keyframes.push_back(keyframe(i, range_ids(1000 + i * 10, 1005 + i * 10)));
    const Keyframe q = keyframe(7, range_ids(lo, 100));
    EXPECT_NEAR(jaccard(g.keyframes[0].signature, q.signature), accepted ? 0.30 : 0.29, 1e-15);
    g.keyframes.push_back(q);
    EXPECT_EQ(detect_loop_closure(g, q).has_value(), accepted);
  }
}

TEST(LoopClosure, RecentKeyframesExcluded) {
  MapGraph g;
  for (int i = 0; i < 6; ++i) g.keyframes.push_back(keyframe(i, range_ids(0, 10)));
  // Only keyframe 0 lies outside the five-frame exclusion window of keyframe 6.
  Keyframe q = keyframe(6, range_ids(0, 10));
  g.keyframes.push_back(q);
  const auto e = detect_loop_closure(g, q);
  ASSERT_TRUE(e.has_value());
  EXPECT_EQ(e->from, 0);
  MapGraph small;
  for (int i = 0; i < 5; ++i) small.keyframes.push_back(keyframe(i, range_ids(0, 10)));
  EXPECT_FALSE(detect_loop_closure(small, small.keyframes.back()).has_value());
}

TEST(LoopClosure, TooFewSharedLandmarks) {
  MapGraph g;
  g.keyframes.push_back(keyframe(0, {1, 2}));
  for (int i = 1; i < 7; ++i) g.keyframes.push_back(keyframe(i, {100 + i}));
  const Keyframe q = keyframe(7, {1, 2});
  g.keyframes.push_back(q);
  try {
    detect_loop_closure(g, q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientCorrespondences);
  }
}

TEST(Optimizer, SingleKeyframeUnchanged) {
  MapGraph g;
  maybe_add_keyframe(g, planar_pose(1.0, 2.0, 3.0, 0.4), {}, 0.0);
  const auto r = optimize_pose_graph(g);
  EXPECT_EQ(serialize(r.graph), serialize(g));
}

TEST(Optimizer, NoiseFreeEdgesRecoverTruth) {
  LoopFixture f = square_loop(10, 0.0, 1, true);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.05);
  for (std::size_t i = 1; i < f.graph.keyframes.size(); ++i) {
    Vector6d d;
    for (int k = 0; k < 6; ++k) d[k] = n(rng);
    f.graph.keyframes[i].pose = f.graph.keyframes[i].pose * pose_exp(d);
  }
  const auto r = optimize_pose_graph(f.graph);
  EXPECT_LT(r.final_cost, 1e-12);
  for (std::size_t i = 0; i < f.truth.size(); ++i) {
    EXPECT_NEAR((r.graph.keyframes[i].pose.position - f.truth[i].position).norm(), 0.0, 1e-6);
    EXPECT_NEAR(r.graph.keyframes[i].pose.orientation.angular_distance(f.truth[i].orientation), 0.0, 1e-6);
  }
}

TEST(Optimizer, CostNeverIncreasesAndReachesLocalMinimum) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    LoopFixture f = square_loop(10, 0.02, seed, true);
    const auto r = optimize_pose_graph(f.graph);
    ASSERT_GE(r.accepted_costs.size(), 2u);
    for (std::size_t i = 1; i < r.accepted_costs.size(); ++i) EXPECT_LE(r.accepted_costs[i], r.accepted_costs[i - 1]);
    EXPECT_EQ(r.accepted_costs.front(), r.initial_cost);
    EXPECT_EQ(r.accepted_costs.back(), r.final_cost);
    EXPECT_NEAR(pose_graph_cost(r.graph), r.final_cost, 1e-9 * std::max(1.0, r.final_cost));
    // Oracle: no small coordinate-wise move of any free pose lowers the cost.
    for (std::size_t i = 1; i < r.graph.keyframes.size(); i += 7) {
      for (int k = 0; k < 6; ++k) {
        for (double s : {-1e-4, 1e-4}) {
          MapGraph probe = r.graph;
          Vector6d d = Vector6d::Zero();
          d[k] = s;
          probe.keyframes[i].pose = probe.keyframes[i].pose * pose_exp(d);
          EXPECT_GE(pose_graph_cost(probe), r.final_cost - 1e-9 * std::max(1.0, r.final_cost));
        }
      }
    }
    EXPECT_EQ(r.graph.keyframes[0].pose.position, f.graph.keyframes[0].pose.position);
  }
}

TEST(Optimizer, LoopEdgeReducesDrift) {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    LoopFixture f = square_loop(10, 0.02, 100 + seed, true);
    const double before = ate(f.truth, f.graph);
    const double after = ate(f.truth, optimize_pose_graph(f.graph).graph);
    improved += after < before;
  }
  EXPECT_GE(improved, 15);
}

TEST(Optimizer, DisconnectedGraphThrows) {
  LoopFixture f = square_loop(3, 0.0, 1, false);
  f.graph.edges.erase(f.graph.edges.begin() + 4);
  try {
    optimize_pose_graph(f.graph);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DisconnectedGraph);
  }
}

namespace {

MapGraph mapped_scene(const std::vector<Vec3d>& lms, std::vector<Pose6d>& poses) {
  MapGraph g;
  for (int i = 0; i < 6; ++i) {
    const Pose6d p = planar_pose(0.5 * i, 0.0, 1.5, 0.1 * i);
    poses.push_back(p);
    maybe_add_keyframe(g, p, observe(p, lms, range_ids(10 * i, 10 * i + 30)), i);
  }
  return g;
}

}  // namespace

TEST(Localize, ReplayOfMappedKeyframe) {
  const auto lms = scatter(100, 12);
  std::vector<Pose6d> poses;
  const MapGraph g = mapped_scene(lms, poses);
  const auto r = localize(g, g.keyframes[3].observations);
  EXPECT_EQ(r.keyframe_id, 3);
  EXPECT_NEAR((r.pose.position - poses[3].position).norm(), 0.0, 1e-9);
  EXPECT_NEAR(r.pose.orientation.angular_distance(poses[3].orientation), 0.0, 1e-9);
}

TEST(Localize, DifferentViewpointUsesMapLandmarks) {
  const auto lms = scatter(100, 13);
  std::vector<Pose6d> poses;
  const MapGraph g = mapped_scene(lms, poses);
  const Pose6d ground = planar_pose(1.2, 0.4, 0.3, -0.5);
  const auto r = localize(g, observe(ground, lms, range_ids(20, 45)));
  EXPECT_NEAR((r.pose.position - ground.position).norm(), 0.0, 1e-9);
}

TEST(Localize, NeverMutatesGraph) {
  const auto lms = scatter(100, 14);
  std::vector<Pose6d> poses;
  const MapGraph g = mapped_scene(lms, poses);
  const std::string before = serialize(g);
  localize(g, g.keyframes[2].observations);
  EXPECT_THROW(localize(g, {{900, {}}, {901, {}}, {902, {}}}), Error);
  EXPECT_EQ(serialize(g), before);
}

TEST(Localize, UnknownLandmarksFail) {
  const auto lms = scatter(100, 15);
  std::vector<Pose6d> poses;
  const MapGraph g = mapped_scene(lms, poses);
  try {
    localize(g, {{900, Vec3d(1, 0, 0)}, {901, Vec3d(0, 1, 0)}, {902, Vec3d(0, 0, 1)}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LocalizationFailed);
  }
  EXPECT_THROW(localize(MapGraph{}, {{1, Vec3d(1, 0, 0)}}), Error);
}

TEST(Occupancy, EmptyGraphIsUnknown) {
  const OccupancyGrid grid = project_occupancy(MapGraph{});
  EXPECT_EQ(grid.count(Cell::Unknown), grid.cells.size());
}

TEST(Occupancy, WallOfLandmarksIsOneLine) {
  MapGraph g;
  for (int i = 0; i < 60; ++i) g.landmarks[i] = {Vec3d(0.05 * i + 0.01, 2.05, 0.3), 1};
  g.landmarks[100] = {Vec3d(1.0, 0.5, 1.2), 1};  // above the band
  OccupancyConfig cfg;
  cfg.origin = Eigen::Vector2d(-1, -1);
  cfg.size = Eigen::Vector2i(60, 60);
  const OccupancyGrid grid = project_occupancy(g, cfg);
  std::set<int> rows, cols;
  for (int y = 0; y < grid.rows; ++y) {
    for (int x = 0; x < grid.cols; ++x) {
      if (grid.at(x, y) == Cell::Occupied) {
        rows.insert(y);
        cols.insert(x);
      }
    }
  }
  EXPECT_EQ(rows, std::set<int>{30});
  EXPECT_EQ(cols.size(), 30u);
  EXPECT_EQ(grid.count(Cell::Occupied), 30u);
  EXPECT_EQ(grid.count(Cell::Free), 0u);
}

TEST(Occupancy, FreeWithinSensingRadius) {
  MapGraph g;
  maybe_add_keyframe(g, Pose6d::from_translation(Vec3d(0, 0, 1.5)), {}, 0.0);
  g.points.push_back(Vec3d(1.05, 0.05, 0.2));
  OccupancyConfig cfg;
  cfg.sensing_radius = 2.0;
  const OccupancyGrid grid = project_occupancy(g, cfg);
  for (int y = 0; y < grid.rows; ++y) {
    for (int x = 0; x < grid.cols; ++x) {
      const double d = grid.center(x, y).norm();
      if (grid.at(x, y) == Cell::Occupied) {
        EXPECT_TRUE(grid.center(x, y).isApprox(Eigen::Vector2d(1.05, 0.05), 1e-9));
      } else {
        EXPECT_EQ(grid.at(x, y) == Cell::Free, d <= 2.0);
      }
    }
  }
  EXPECT_EQ(grid.count(Cell::Occupied), 1u);
}

TEST(Occupancy, IouOfIdenticalAndDisjoint) {
  OccupancyGrid a(0.1, 0, 0, 4, 4), b(0.1, 0, 0, 4, 4);
  a.at(1, 1) = b.at(1, 1) = Cell::Occupied;
  EXPECT_DOUBLE_EQ(occupied_iou(a, b), 1.0);
  b.at(2, 2) = Cell::Occupied;
  EXPECT_DOUBLE_EQ(occupied_iou(a, b), 0.5);
  EXPECT_THROW(occupied_iou(a, OccupancyGrid(0.1, 0, 0, 3, 4)), Error);
}

TEST(MapFile, RoundTrip) {
  const auto lms = scatter(100, 16);
  std::vector<Pose6d> poses;
  MapGraph g = mapped_scene(lms, poses);
  g.edges.push_back({0, 5, EdgeKind::LoopClosure, planar_pose(0.1, 0.2, 0.3, 0.4), Matrix6d::Identity() * 7.0});
  g.points = {Vec3d(1, 2, 0.3), Vec3d(-1, 0.5, 0.1)};
  VictimMark m;
  m.id = 2;
  m.source = MarkSource::Manual;
  m.anchor = Vec3d(1, 1, 1.5);
  m.direction = Vec3d(0.6, 0.8, 0);
  m.range = 2.0;
  m.estimate = m.anchor + 2.0 * m.direction;
  g.victims.push_back(m);

  const std::string text = serialize(g);
  std::istringstream in(text);
  const MapGraph back = read_map_graph(in);
  EXPECT_EQ(serialize(back), text);
  ASSERT_EQ(back.keyframes.size(), g.keyframes.size());
  for (std::size_t i = 0; i < g.keyframes.size(); ++i) {
    EXPECT_EQ(back.keyframes[i].pose.position, g.keyframes[i].pose.position);
    EXPECT_EQ(back.keyframes[i].signature, g.keyframes[i].signature);
  }
  EXPECT_EQ(back.edges.back().kind, EdgeKind::LoopClosure);
  EXPECT_DOUBLE_EQ(back.edges.back().information(3, 3), 7.0);
  EXPECT_DOUBLE_EQ(back.victims[0].range, 2.0);
  EXPECT_EQ(text.substr(0, 14), "COOPSAR_MAP 1\n");
}

TEST(MapFile, EmptyStreamIsEmptyGraph) {
  std::istringstream in("");
  const MapGraph g = read_map_graph(in);
  EXPECT_TRUE(g.keyframes.empty());
}

TEST(MapFile, ErrorsNameTheLine) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"KF 0 0 0 0 0 1 0 0 0 |\n", "line 1"},
      {"COOPSAR_MAP 1\nKF 0 0 0 0 0 1 0 0 0 |\nEDGE 0 0 loop 0 0 0 1 0 0 0 1 1 1 1 1 1\n", "line 3"},
      {"COOPSAR_MAP 1\nKF 0 0 0 0 0 1 0 0 0 | 1\nBOGUS\n", "line 3"},
      {"COOPSAR_MAP 1\nKF 0 0 x 0 0 1 0 0 0 |\n", "line 2"},
      {"COOPSAR_MAP 2\n", "line 1"},
  };
  for (const auto& [text, where] : cases) {
    std::istringstream in(text);
    try {
      read_map_graph(in);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ParseError);
      EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
    }
  }
  std::istringstream dangling("COOPSAR_MAP 1\nKF 0 0 0 0 0 1 0 0 0 |\nEDGE 0 4 odometry 0 0 0 1 0 0 0 1 1 1 1 1 1\n");
  EXPECT_THROW(read_map_graph(dangling), Error);
}

TEST(Pgm, RoundTripAndOrientation) {
  OccupancyGrid g(0.1, -0.55, -0.55, 3, 2);
  g.at(0, 0) = Cell::Occupied;
  g.at(2, 1) = Cell::Free;
  std::ostringstream out;
  write_pgm(out, g);
  const std::string s = out.str();
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(s.substr(0, header.size()), header);
  // First written row is the top (max y).
  EXPECT_EQ(static_cast<unsigned char>(s[header.size() + 2]), 254);
  EXPECT_EQ(static_cast<unsigned char>(s[header.size() + 3]), 0);
  EXPECT_EQ(static_cast<unsigned char>(s[header.size() + 1]), 127);
  std::istringstream in(s);
  const OccupancyGrid back = read_pgm(in, 0.1, -0.55, -0.55);
  EXPECT_EQ(back.cells, g.cells);

  std::ostringstream meta;
  write_grid_metadata(meta, g);
  EXPECT_NE(meta.str().find("\"resolution\": 0.1"), std::string::npos);
  EXPECT_NE(meta.str().find("-0.55"), std::string::npos);
}
