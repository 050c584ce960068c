#include <coopsar/mission.hpp>

#include <coopsar/attitude.hpp>
#include <coopsar/fusion.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace coopsar {

namespace {

using nlohmann::json;

// Named random streams derived from the mission seed.
enum Stream : std::uint64_t { kImu = 1, kVo, kObs, kDetect, kBus, kGroundObs };

[[noreturn]] void invalid(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::ConfigInvalid, field + ": " + what);
}

// ---- config parsing -------------------------------------------------------

void allow_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) invalid(path.empty() ? "<root>" : path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      invalid(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
    }
  }
}

std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

void read_number(const json& j, const std::string& path, const char* key, double& out) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number()) invalid(join(path, key), "expected a number");
  out = j.at(key).get<double>();
}

void read_int(const json& j, const std::string& path, const char* key, int& out) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number_integer()) invalid(join(path, key), "expected an integer");
  out = j.at(key).get<int>();
}

void read_u64(const json& j, const std::string& path, const char* key, std::uint64_t& out) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number_unsigned()) invalid(join(path, key), "expected an unsigned integer");
  out = j.at(key).get<std::uint64_t>();
}

std::vector<double> number_array(const json& j, const std::string& path, std::size_t n = 0) {
  if (!j.is_array()) invalid(path, "expected an array");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) invalid(path + "[" + std::to_string(i) + "]", "expected a number");
    v.push_back(j[i].get<double>());
  }
  if (n != 0 && v.size() != n) invalid(path, "expected " + std::to_string(n) + " numbers");
  return v;
}

LinkModel read_link(const json& j, const std::string& path) {
  allow_keys(j, path, {"latency_min_s", "latency_max_s", "drop", "partitions", "periodic_partition"});
  LinkModel l;
  read_number(j, path, "latency_min_s", l.latency_min);
  read_number(j, path, "latency_max_s", l.latency_max);
  read_number(j, path, "drop", l.drop);
  if (j.contains("partitions")) {
    const json& p = j.at("partitions");
    if (!p.is_array()) invalid(path + ".partitions", "expected an array of [start, end]");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto v = number_array(p[i], path + ".partitions[" + std::to_string(i) + "]", 2);
      l.partitions.emplace_back(v[0], v[1]);
    }
  }
  if (j.contains("periodic_partition")) {
    const std::string pp = path + ".periodic_partition";
    const json& p = j.at("periodic_partition");
    allow_keys(p, pp, {"first_s", "period_s", "length_s", "until_s"});
    double first = 0.0, period = 0.0, length = 0.0, until = 1e4;
    read_number(p, pp, "first_s", first);
    read_number(p, pp, "period_s", period);
    read_number(p, pp, "length_s", length);
    read_number(p, pp, "until_s", until);
    if (!(period > 0.0)) invalid(pp + ".period_s", "must be > 0");
    if (!(length >= 0.0 && length < period)) invalid(pp + ".length_s", "must be in [0, period_s)");
    for (const auto& iv : periodic_partitions(first, period, length, until)) l.partitions.push_back(iv);
    std::sort(l.partitions.begin(), l.partitions.end());
  }
  try {
    l.validate();
  } catch (const Error& e) {
    invalid(path, e.detail());
  }
  return l;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

// ---- flight simulation ----------------------------------------------------

struct RawMark {
  Pose6d odom;  // fused pose at marking time
  Detection detection;
  MarkSource source = MarkSource::Automatic;
  int keyframe = -1;  // latest keyframe at marking time
};

struct AerialState {
  MapGraph graph;  // odometry poses, never overwritten by optimization
  std::map<int, std::vector<Vec3d>> kf_points;  // depth returns, keyframe frame
  std::vector<RawMark> marks;
  std::vector<TrajectorySample> truth;
  int loop_closures = 0;
  int next_mark_id = 1;
  std::size_t next_manual = 0;
};

TrueTrajectory truncated(const TrueTrajectory& traj, double t_end) {
  std::vector<TrajectorySample> s;
  for (const TrajectorySample& x : traj.samples()) {
    if (x.timestamp <= t_end + 1e-12) s.push_back(x);
  }
  return TrueTrajectory(std::move(s));
}

TrueTrajectory concatenated(const TrueTrajectory& a, const TrueTrajectory& b) {
  std::vector<TrajectorySample> s = a.samples();
  for (const TrajectorySample& x : b.samples()) {
    if (x.timestamp > s.back().timestamp + 1e-9) s.push_back(x);
  }
  return TrueTrajectory(std::move(s));
}

double yaw_of(const Quatd& q) { return quat_to_euler(q).yaw; }

// Runs sensors, filters, fusion, mapping and marking over one flight.
void fly(const MissionConfig& cfg, const World& world, const TrueTrajectory& traj, AerialState& st, Bus& bus) {
  const double t0 = traj.start_time(), t1 = traj.end_time();

  std::vector<ImuSample> imu;
  const std::uint64_t imu_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(kImu));
  for (int k = 0;; ++k) {
    const double t = t0 + k / cfg.imu_rate;
    if (t > t1) break;
    imu.push_back(sample_imu(traj, t, cfg.imu_noise, imu_seed));
  }
  const std::vector<AttitudeEstimate> att = run_attitude_filter(imu);

  std::vector<AttitudeSample> ae;
  for (int j = 0;; ++j) {
    const double t = t0 + j / cfg.ae_rate;
    if (t > t1) break;
    const auto k = std::min(att.size() - 1, static_cast<std::size_t>(std::floor((t - t0) * cfg.imu_rate + 1e-9)));
    if (!ae.empty() && ae.back().timestamp >= att[k].timestamp) continue;
    ae.push_back({att[k].timestamp, quat_to_euler(att[k].q)});
  }

  // Visual odometry tracks against the last frame it could match.
  const CameraConfig cam;
  struct Frame {
    double t;
    Pose6d truth;
    std::vector<LandmarkObservation> seen;
    VoEstimate vo;
  };
  std::vector<Frame> frames;
  std::vector<VoPoseSample> vo_samples;
  Pose6d ref_truth = traj.pose_at(t0), ref_est = ref_truth;
  for (int k = 0;; ++k) {
    const double t = t0 + k / cfg.vo_rate;
    if (t > t1) break;
    Frame f{t, traj.pose_at(t), {}, {}};
    f.seen = observe_landmarks(f.truth, world, cam);
    const int n = static_cast<int>(f.seen.size());
    if (k == 0) {
      f.vo.valid = true;
      f.vo.visible_count = n;
      f.vo.timestamp = t;
      vo_samples.push_back({t, ref_est, true});
    } else {
      f.vo = simulate_vo(ref_truth, f.truth, n, cfg.vo_noise, mix_seed(mix_seed(cfg.seed, std::uint64_t{kVo}), t), t);
      if (f.vo.valid) {
        ref_est = ref_est * f.vo.relative;
        ref_truth = f.truth;
        vo_samples.push_back({t, ref_est, true});
      } else {
        vo_samples.push_back({t, Pose6d{}, false});
      }
    }
    frames.push_back(std::move(f));
  }

  std::vector<FusedOdometry> fused;
  for (const FusedOdometry& o : fuse_streams(vo_samples, ae)) {
    if (o.source == FusedSource::VisualOdometry) fused.push_back(o);
  }

  const std::uint64_t obs_seed = mix_seed(cfg.seed, std::uint64_t{kObs});
  const std::uint64_t det_seed = mix_seed(cfg.seed, std::uint64_t{kDetect});
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Frame& f = frames[k];
    const Pose6d& est = fused[k].pose;
    mapping_gate(st.graph, f.vo);

    std::mt19937_64 rng(mix_seed(obs_seed, f.t));
    std::normal_distribution<double> noise(0.0, cfg.observation_sigma);
    std::vector<BodyObservation> obs;
    for (const LandmarkObservation& o : f.seen) {
      obs.push_back({o.id, o.point() + Vec3d(noise(rng), noise(rng), noise(rng))});
    }

    if (maybe_add_keyframe(st.graph, est, obs, f.t)) {
      const Keyframe& kf = st.graph.keyframes.back();
      const Pose6d inv = pose_inverse(f.truth);
      std::vector<Vec3d>& pts = st.kf_points[kf.id];
      for (const Vec3d& p : depth_scan(f.truth, world, cfg.aerial_depth).points()) {
        if (p.z() > cfg.occupancy.z_min - 0.1 && p.z() < cfg.occupancy.z_max + 0.1) pts.push_back(inv.transform(p));
      }
      try {
        if (auto edge = detect_loop_closure(st.graph, kf, cfg.loop_closure)) {
          st.graph.edges.push_back(*edge);
          ++st.loop_closures;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::InsufficientCorrespondences) throw;
      }
      std::ostringstream msg;
      write_map_graph(msg, MapGraph{{kf}, {}, {}, {}, {}, MappingState::Active, {}});
      const std::string s = msg.str();
      bus.publish("/uav", "keyframe", std::vector<std::uint8_t>(s.begin(), s.end()), f.t);
    }

    const int kf_ref = st.graph.keyframes.empty() ? -1 : st.graph.keyframes.back().id;
    const auto add_mark = [&](const Detection& d, MarkSource src) {
      st.marks.push_back({est, d, src, kf_ref});
      std::vector<std::uint8_t> bytes(64, 0);
      bus.publish("/uav", "victim_mark", std::move(bytes), f.t);
    };
    // Marks need a tracked pose; nothing is marked while mapping is paused.
    if (st.graph.state != MappingState::Active) continue;
    if (cfg.marking == MarkSource::Automatic) {
      for (const Detection& d : detect_victims(f.truth, world, cfg.detector, mix_seed(det_seed, f.t), f.t)) {
        add_mark(d, MarkSource::Automatic);
      }
    } else {
      // A scripted operator click marks every detection in view.
      while (st.next_manual < cfg.manual_mark_times.size() && cfg.manual_mark_times[st.next_manual] <= f.t) {
        ++st.next_manual;
        const auto dets = detect_victims(f.truth, world, cfg.detector, mix_seed(det_seed, f.t), f.t);
        if (dets.empty()) bus.log(f.t, "/uav", "/uav/victim_mark", "mark_empty", 0);
        for (const Detection& d : dets) add_mark(d, MarkSource::Manual);
      }
    }
  }

  for (const TrajectorySample& s : traj.samples()) {
    if (st.truth.empty() || s.timestamp > st.truth.back().timestamp) st.truth.push_back(s);
  }
}

// Retraces the flown part of the route back to its first waypoint, so the
// return leg views every surface from the opposite side.
std::vector<Vec3d> return_route(const std::vector<Vec3d>& route, const TrueTrajectory& flown) {
  const Vec3d end = flown.pose_at(flown.end_time()).position;
  std::vector<Vec3d> back{end};
  // Waypoints already passed, found by walking the route until `end` lies on a leg.
  std::size_t leg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < route.size(); ++i) {
    const Vec3d a = route[i], ab = route[i + 1] - route[i];
    const double s = std::clamp((end - a).dot(ab) / std::max(ab.squaredNorm(), 1e-12), 0.0, 1.0);
    const double d = (a + s * ab - end).norm();
    if (d < best - 1e-9) {
      best = d;
      leg = i;
    }
  }
  for (std::size_t i = leg + 1; i-- > 0;) {
    if ((route[i] - back.back()).norm() > 1e-6) back.push_back(route[i]);
  }
  return back;
}

// Latest exploration time from which retracing the route home still fits
// the remaining flight budget (plus a half-turn).
std::optional<double> budget_cutoff(const TrueTrajectory& explore, double available) {
  const double t0 = explore.start_time();
  const auto fits = [&](double t) { return 2.0 * (t - t0) + std::numbers::pi <= available; };
  if (!fits(t0)) return std::nullopt;
  if (fits(explore.end_time())) return explore.end_time();
  return t0 + 0.5 * (available - std::numbers::pi);
}

std::vector<Vec3d> decimate(const std::vector<Vec3d>& pts, double voxel) {
  std::set<std::tuple<long, long, long>> seen;
  std::vector<Vec3d> out;
  for (const Vec3d& p : pts) {
    const auto key = std::make_tuple(std::lround(std::floor(p.x() / voxel)), std::lround(std::floor(p.y() / voxel)),
                                     std::lround(std::floor(p.z() / voxel)));
    if (seen.insert(key).second) out.push_back(p);
  }
  return out;
}

// Optimized map with re-projected depth points and corrected, deduplicated marks.
MapGraph process_map(const MissionConfig& cfg, const AerialState& st, double& ate, double& ate_odom) {
  if (st.graph.keyframes.empty()) throw Error(ErrorCode::EmptyOverlap, "no keyframes were recorded");
  MapGraph map = optimize_pose_graph(st.graph).graph;

  std::map<int, std::pair<Pose6d, Pose6d>> kf;  // id -> (odometry, optimized)
  for (std::size_t i = 0; i < map.keyframes.size(); ++i) {
    kf[map.keyframes[i].id] = {st.graph.keyframes[i].pose, map.keyframes[i].pose};
  }

  std::vector<Vec3d> pts;
  for (const auto& [id, body] : st.kf_points) {
    const Pose6d& pose = kf.at(id).second;
    for (const Vec3d& p : body) {
      const Vec3d w = pose.transform(p);
      if (w.z() >= cfg.occupancy.z_min && w.z() <= cfg.occupancy.z_max) pts.push_back(w);
    }
  }
  map.points = decimate(pts, 0.05);

  std::vector<VictimMark> marks;
  int id = 1;
  for (const RawMark& m : st.marks) {
    Pose6d pose = m.odom;
    if (m.keyframe >= 0) {
      const auto& [odom, opt] = kf.at(m.keyframe);
      pose = opt * (pose_inverse(odom) * m.odom);
    }
    marks.push_back(mark_victim(pose, m.detection, m.source, id++));
  }
  map.victims = dedupe_marks(marks, cfg.dedupe_radius);

  std::vector<TrajectorySample> est, odom;
  for (std::size_t i = 0; i < map.keyframes.size(); ++i) {
    est.push_back({map.keyframes[i].timestamp, map.keyframes[i].pose});
    odom.push_back({st.graph.keyframes[i].timestamp, st.graph.keyframes[i].pose});
  }
  ate = compute_ate(est, st.truth);
  ate_odom = compute_ate(odom, st.truth);
  return map;
}

// Covers the world bounds with cells centred on multiples of the
// resolution, so surfaces on round coordinates fall mid-cell.
OccupancyConfig arena_grid(const MissionConfig& cfg, const World& w) {
  OccupancyConfig oc = cfg.occupancy;
  const double res = oc.resolution;
  const double ox = (std::round(w.bounds.min.x() / res) - 0.5) * res;
  const double oy = (std::round(w.bounds.min.y() / res) - 0.5) * res;
  oc.origin = Eigen::Vector2d(ox, oy);
  oc.size = Eigen::Vector2i(static_cast<int>(std::ceil((w.bounds.max.x() - ox) / res)),
                            static_cast<int>(std::ceil((w.bounds.max.y() - oy) / res)));
  return oc;
}

std::vector<BodyObservation> ground_observations(const MissionConfig& cfg, const World& w, const Pose6d& camera,
                                                 double t) {
  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, std::uint64_t{kGroundObs}), t));
  std::normal_distribution<double> noise(0.0, cfg.observation_sigma);
  std::vector<BodyObservation> obs;
  for (const LandmarkObservation& o : observe_landmarks(camera, w, CameraConfig{})) {
    obs.push_back({o.id, o.point() + Vec3d(noise(rng), noise(rng), noise(rng))});
  }
  return obs;
}

// Greedy one-to-one matching of marks to ground-truth victims by distance.
void match_victims(const World& w, const std::vector<VictimMark>& marks, double tol, MissionReport& r) {
  r.victims_truth = static_cast<int>(w.victims.size());
  r.victims_marked = static_cast<int>(marks.size());
  r.victim_errors.assign(w.victims.size(), -1.0);
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < w.victims.size(); ++i) {
    for (std::size_t j = 0; j < marks.size(); ++j) {
      pairs.emplace_back((marks[j].estimate - w.victims[i].pose.position).norm(), i, j);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> used_v(w.victims.size()), used_m(marks.size());
  for (const auto& [d, i, j] : pairs) {
    if (used_v[i] || used_m[j]) continue;
    used_v[i] = used_m[j] = true;
    r.victim_errors[i] = d;
    if (d <= tol) ++r.victims_matched;
  }
  r.false_marks = r.victims_marked - r.victims_matched;
}

class Clock {
 public:
  explicit Clock(MissionReport& r, Bus& bus) : r_(r), bus_(bus) {}
  void phase(const std::string& name, double duration) {
    r_.phases.push_back({name, now_, duration});
    bus_.log(now_, "/mission", name, "phase_start", 0);
    now_ += duration;
    bus_.log(now_, "/mission", name, "phase_end", 0);
  }
  double now() const { return now_; }

 private:
  MissionReport& r_;
  Bus& bus_;
  double now_ = 0.0;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(precision) << v;
  return o.str();
}

}  // namespace

// ---- config ---------------------------------------------------------------

void MissionConfig::validate() const {
  if (world_file && !std::filesystem::exists(*world_file)) invalid("world.file", "cannot open " + world_file->string());
  if (!(speed > 0.0)) invalid("aerial.speed", "must be > 0");
  if (!(altitude > 0.0)) invalid("aerial.altitude", "must be > 0");
  if (!(flight_budget > 0.0)) invalid("aerial.flight_budget_s", "must be > 0");
  if (!(imu_rate > 0.0)) invalid("aerial.imu_rate_hz", "must be > 0");
  if (!(vo_rate > 0.0)) invalid("aerial.vo_rate_hz", "must be > 0");
  if (!(ae_rate > 0.0)) invalid("aerial.ae_rate_hz", "must be > 0");
  if (!(observation_sigma >= 0.0)) invalid("aerial.observation_sigma_m", "must be >= 0");
  if (waypoints.size() == 1) invalid("aerial.waypoints", "needs at least two waypoints");
  if (!(dedupe_radius > 0.0)) invalid("marking.dedupe_radius_m", "must be > 0");
  for (std::size_t i = 1; i < manual_mark_times.size(); ++i) {
    if (manual_mark_times[i] < manual_mark_times[i - 1]) invalid("marking.events_s", "must be non-decreasing");
  }
  if (!(processing_time >= 0.0)) invalid("gcs.processing_s", "must be >= 0");
  if (!(coverage_target >= 0.0 && coverage_target <= 1.0)) invalid("gcs.coverage_target", "must be in [0, 1]");
  if (max_explore_passes < 1) invalid("gcs.max_explore_passes", "must be >= 1");
  if (!(ground_camera_height > 0.0)) invalid("ground.camera_height_m", "must be > 0");
  if (localization_attempts < 1) invalid("ground.localization_attempts", "must be >= 1");
  if (!(localization_dwell >= 0.0)) invalid("ground.localization_dwell_s", "must be >= 0");
  if (!(payload >= 0.0)) invalid("ground.payload_kg", "must be >= 0");
  if (!(endurance_budget > 0.0)) invalid("ground.endurance_budget_s", "must be > 0");
  if (!(inspect_time >= 0.0)) invalid("ground.inspect_s", "must be >= 0");
  if (max_steps_per_goal < 1) invalid("ground.max_steps_per_goal", "must be >= 1");
  if (!(victim_tolerance > 0.0)) invalid("tolerances.victim_m", "must be > 0");
  if (!(goal_tolerance > 0.0)) invalid("tolerances.goal_m", "must be > 0");
  try {
    links.uav_gcs.validate();
  } catch (const Error& e) {
    invalid("links.uav_gcs", e.detail());
  }
  try {
    links.gcs_rex.validate();
  } catch (const Error& e) {
    invalid("links.gcs_rex", e.detail());
  }
}

MissionConfig read_mission_config(std::istream& in, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("mission config: ") + e.what());
  }
  MissionConfig c;
  allow_keys(j, "", {"world", "seed", "aerial", "marking", "gcs", "ground", "links", "tolerances"});
  read_u64(j, "", "seed", c.seed);

  if (j.contains("world")) {
    const json& w = j.at("world");
    allow_keys(w, "world", {"file", "seed", "victims", "width", "depth", "landmarks", "min_obstacles",
                            "max_obstacles"});
    if (w.contains("file")) {
      if (!w.at("file").is_string()) invalid("world.file", "expected a path string");
      c.world_file = resolve(base_dir, w.at("file").get<std::string>());
    }
    read_u64(w, "world", "seed", c.world_seed);
    if (w.contains("victims")) {
      int v = 0;
      read_int(w, "world", "victims", v);
      if (v < 0) invalid("world.victims", "must be >= 0");
      c.world_gen.victim_count = v;
    }
    read_number(w, "world", "width", c.world_gen.width);
    read_number(w, "world", "depth", c.world_gen.depth);
    read_int(w, "world", "landmarks", c.world_gen.landmark_count);
    read_int(w, "world", "min_obstacles", c.world_gen.min_obstacles);
    read_int(w, "world", "max_obstacles", c.world_gen.max_obstacles);
    if (!(c.world_gen.width > 2 * c.world_gen.keep_out_margin)) invalid("world.width", "arena too small");
    if (!(c.world_gen.depth > 2 * c.world_gen.keep_out_margin)) invalid("world.depth", "arena too small");
    if (c.world_gen.landmark_count < 0) invalid("world.landmarks", "must be >= 0");
    if (c.world_gen.min_obstacles < 0 || c.world_gen.max_obstacles < c.world_gen.min_obstacles) {
      invalid("world.max_obstacles", "must be >= min_obstacles >= 0");
    }
  }

  if (j.contains("aerial")) {
    const json& a = j.at("aerial");
    allow_keys(a, "aerial", {"waypoints", "altitude", "speed", "flight_budget_s", "imu_rate_hz", "vo_rate_hz",
                             "ae_rate_hz", "observation_sigma_m"});
    if (a.contains("waypoints")) {
      const json& wp = a.at("waypoints");
      if (!wp.is_array()) invalid("aerial.waypoints", "expected an array of [x, y, z]");
      for (std::size_t i = 0; i < wp.size(); ++i) {
        const auto v = number_array(wp[i], "aerial.waypoints[" + std::to_string(i) + "]", 3);
        c.waypoints.emplace_back(v[0], v[1], v[2]);
      }
    }
    read_number(a, "aerial", "altitude", c.altitude);
    read_number(a, "aerial", "speed", c.speed);
    read_number(a, "aerial", "flight_budget_s", c.flight_budget);
    read_number(a, "aerial", "imu_rate_hz", c.imu_rate);
    read_number(a, "aerial", "vo_rate_hz", c.vo_rate);
    read_number(a, "aerial", "ae_rate_hz", c.ae_rate);
    read_number(a, "aerial", "observation_sigma_m", c.observation_sigma);
  }

  if (j.contains("marking")) {
    const json& m = j.at("marking");
    allow_keys(m, "marking", {"mode", "events_s", "dedupe_radius_m"});
    if (m.contains("mode")) {
      const json& mode = m.at("mode");
      if (mode == "automatic") {
        c.marking = MarkSource::Automatic;
      } else if (mode == "manual") {
        c.marking = MarkSource::Manual;
      } else {
        invalid("marking.mode", "expected \"automatic\" or \"manual\"");
      }
    }
    if (m.contains("events_s")) c.manual_mark_times = number_array(m.at("events_s"), "marking.events_s");
    read_number(m, "marking", "dedupe_radius_m", c.dedupe_radius);
  }

  if (j.contains("gcs")) {
    const json& g = j.at("gcs");
    allow_keys(g, "gcs", {"processing_s", "coverage_target", "max_explore_passes"});
    read_number(g, "gcs", "processing_s", c.processing_time);
    read_number(g, "gcs", "coverage_target", c.coverage_target);
    read_int(g, "gcs", "max_explore_passes", c.max_explore_passes);
  }

  if (j.contains("ground")) {
    const json& g = j.at("ground");
    allow_keys(g, "ground", {"start", "camera_height_m", "gait", "payload_kg", "endurance_budget_s", "inspect_s",
                             "max_steps_per_goal", "localization_attempts", "localization_dwell_s", "hexapod"});
    if (g.contains("start")) {
      const auto v = number_array(g.at("start"), "ground.start", 3);
      c.ground_start = Eigen::Vector3d(v[0], v[1], v[2]);
    }
    read_number(g, "ground", "camera_height_m", c.ground_camera_height);
    if (g.contains("gait")) {
      if (!g.at("gait").is_string()) invalid("ground.gait", "expected a gait name");
      try {
        c.gait = gait_from_string(g.at("gait").get<std::string>());
      } catch (const Error&) {
        invalid("ground.gait", "unknown gait \"" + g.at("gait").get<std::string>() + "\"");
      }
    }
    read_number(g, "ground", "payload_kg", c.payload);
    read_number(g, "ground", "endurance_budget_s", c.endurance_budget);
    read_number(g, "ground", "inspect_s", c.inspect_time);
    read_int(g, "ground", "max_steps_per_goal", c.max_steps_per_goal);
    read_int(g, "ground", "localization_attempts", c.localization_attempts);
    read_number(g, "ground", "localization_dwell_s", c.localization_dwell);
    if (g.contains("hexapod")) {
      if (!g.at("hexapod").is_string()) invalid("ground.hexapod", "expected a path string");
      const auto path = resolve(base_dir, g.at("hexapod").get<std::string>());
      std::ifstream hf(path);
      if (!hf) invalid("ground.hexapod", "cannot open " + path.string());
      try {
        c.hexapod = read_hexapod_config(hf);
      } catch (const Error& e) {
        invalid("ground.hexapod", e.detail());
      }
    }
  }

  if (j.contains("links")) {
    const json& l = j.at("links");
    allow_keys(l, "links", {"uav_gcs", "gcs_rex"});
    if (l.contains("uav_gcs")) c.links.uav_gcs = read_link(l.at("uav_gcs"), "links.uav_gcs");
    if (l.contains("gcs_rex")) c.links.gcs_rex = read_link(l.at("gcs_rex"), "links.gcs_rex");
  }

  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    allow_keys(t, "tolerances", {"victim_m", "goal_m"});
    read_number(t, "tolerances", "victim_m", c.victim_tolerance);
    read_number(t, "tolerances", "goal_m", c.goal_tolerance);
  }

  c.validate();
  return c;
}

MissionConfig load_mission_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) invalid("config", "cannot open " + path.string());
  return read_mission_config(in, path.parent_path());
}

// ---- metrics --------------------------------------------------------------

double compute_ate(const std::vector<TrajectorySample>& estimated, const std::vector<TrajectorySample>& truth,
                   double max_dt) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const TrajectorySample& e : estimated) {
    const auto it = std::lower_bound(truth.begin(), truth.end(), e.timestamp,
                                     [](const TrajectorySample& s, double t) { return s.timestamp < t; });
    const TrajectorySample* best = nullptr;
    if (it != truth.end()) best = &*it;
    if (it != truth.begin() && (!best || e.timestamp - std::prev(it)->timestamp < best->timestamp - e.timestamp)) {
      best = &*std::prev(it);
    }
    if (!best || std::abs(best->timestamp - e.timestamp) > max_dt) continue;
    sum += (e.pose.position - best->pose.position).squaredNorm();
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::EmptyOverlap, "no estimated sample pairs with the truth trajectory");
  return std::sqrt(sum / static_cast<double>(n));
}

OccupancyGrid rasterize_truth(const World& w, const OccupancyGrid& like, double z_min, double z_max) {
  OccupancyGrid g(like.resolution, like.origin_x, like.origin_y, like.cols, like.rows, Cell::Free);
  const double step = like.resolution / 4.0;
  // Conservative: a surface lying on a cell boundary occupies both neighbours.
  const auto mark = [&](double x, double y) {
    const double fx = (x - g.origin_x) / g.resolution, fy = (y - g.origin_y) / g.resolution;
    const int cx = static_cast<int>(std::floor(fx)), cy = static_cast<int>(std::floor(fy));
    const bool ex = std::abs(fx - std::round(fx)) < 1e-6, ey = std::abs(fy - std::round(fy)) < 1e-6;
    const int x0 = ex ? static_cast<int>(std::round(fx)) - 1 : cx, x1 = ex ? x0 + 1 : cx;
    const int y0 = ey ? static_cast<int>(std::round(fy)) - 1 : cy, y1 = ey ? y0 + 1 : cy;
    for (int i = x0; i <= x1; ++i) {
      for (int j = y0; j <= y1; ++j) {
        if (g.inside(i, j)) g.at(i, j) = Cell::Occupied;
      }
    }
  };
  const auto open = [&](double x, double y) {
    // A face belongs to the map when the space in front of it is not solid.
    for (const Box& b : w.obstacles) {
      if (b.contains(Vec3d(x, y, 0.5 * (z_min + z_max)))) return false;
    }
    return w.bounds.contains(Vec3d(x, y, w.bounds.min.z()));
  };
  const auto segment = [&](double x0, double y0, double x1, double y1, double nx, double ny) {
    const double len = std::hypot(x1 - x0, y1 - y0);
    const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int i = 0; i <= n; ++i) {
      const double x = x0 + (x1 - x0) * i / n, y = y0 + (y1 - y0) * i / n;
      if (open(x + nx * step, y + ny * step)) mark(x, y);
    }
  };
  for (const Box& b : w.obstacles) {
    if (b.max.z() < z_min || b.min.z() > z_max) continue;
    segment(b.min.x(), b.min.y(), b.max.x(), b.min.y(), 0, -1);
    segment(b.min.x(), b.max.y(), b.max.x(), b.max.y(), 0, 1);
    segment(b.min.x(), b.min.y(), b.min.x(), b.max.y(), -1, 0);
    segment(b.max.x(), b.min.y(), b.max.x(), b.max.y(), 1, 0);
    if (b.max.z() <= z_max) {
      for (double x = b.min.x(); x <= b.max.x(); x += step) {
        for (double y = b.min.y(); y <= b.max.y(); y += step) mark(x, y);
      }
    }
  }
  return g;
}

bool payload_check(double payload, GaitName gait, const HexapodConfig& cfg) {
  return payload <= max_payload(cfg, gait_spec(gait));
}

std::vector<Vec3d> default_waypoints(const World& w, double altitude) {
  const double inset = 1.5;
  const double x0 = w.bounds.min.x() + inset, x1 = w.bounds.max.x() - inset;
  const double y0 = w.bounds.min.y() + inset, y1 = w.bounds.max.y() - inset, ym = 0.5 * (y0 + y1);
  return {{x0, y0, altitude}, {x1, y0, altitude}, {x1, ym, altitude},
          {x0, ym, altitude}, {x0, y1, altitude}, {x1, y1, altitude}};
}

double MissionReport::phase_time(const std::string& name) const {
  double t = 0.0;
  for (const PhaseRecord& p : phases) {
    if (p.name == name) t += p.duration;
  }
  return t;
}

// ---- mission --------------------------------------------------------------

World prepare_world(const MissionConfig& cfg) {
  cfg.validate();
  World world;
  if (cfg.world_file) {
    std::ifstream in(*cfg.world_file);
    if (!in) invalid("world.file", "cannot open " + cfg.world_file->string());
    try {
      world = read_world(in);
    } catch (const Error& e) {
      invalid("world.file", e.detail());
    }
  } else {
    world = generate_world(cfg.world_seed, cfg.world_gen);
  }
  const std::vector<Vec3d> route = cfg.waypoints.empty() ? default_waypoints(world, cfg.altitude) : cfg.waypoints;
  for (std::size_t i = 0; i < route.size(); ++i) {
    if (!world.bounds.contains(route[i])) {
      invalid("aerial.waypoints[" + std::to_string(i) + "]", "outside the world bounds");
    }
  }
  const Vec3d gs(cfg.ground_start.x(), cfg.ground_start.y(), 0.0);
  if (!world.bounds.contains(gs)) invalid("ground.start", "outside the world bounds");
  return world;
}

MissionOutputs run_mission(const MissionConfig& cfg) {
  const World world = prepare_world(cfg);
  const std::vector<Vec3d> route = cfg.waypoints.empty() ? default_waypoints(world, cfg.altitude) : cfg.waypoints;

  MissionOutputs out;
  MissionReport& r = out.report;
  Bus bus(mix_seed(cfg.seed, std::uint64_t{kBus}), cfg.links.gcs_rex);
  for (const char* ns : {"/uav", "/gcs", "/rex"}) bus.add_node(ns);
  bus.set_link("/uav", "/gcs", cfg.links.uav_gcs);
  bus.set_link("/gcs", "/rex", cfg.links.gcs_rex);
  bus.declare_topic("/uav", "keyframe");
  bus.declare_topic("/uav", "victim_mark");
  bus.add_sync_rule("/gcs", "/uav/keyframe");
  bus.add_sync_rule("/gcs", "/uav/victim_mark");
  Clock clock(r, bus);

  const auto fail = [&](const std::string& phase, const std::string& why) {
    if (r.failure_phase.empty()) {
      r.failure_phase = phase;
      r.failure_reason = why;
    }
  };

  AerialState aerial;
  MapGraph gcs_map;
  OccupancyGrid gcs_grid;
  const OccupancyConfig grid_cfg = arena_grid(cfg, world);
  double flight_used = 0.0;
  bool have_map = false;

  // EXPLORE -> RETURN -> PROCESS, repeated while coverage stays short.
  for (int pass = 0; pass < cfg.max_explore_passes; ++pass) {
    const std::string phase = "EXPLORE";
    try {
      const double t0 = clock.now();
      const Vec3d home = route.front();
      TrueTrajectory explore = make_waypoint_trajectory(route, cfg.speed, cfg.imu_rate, 1.0, t0);
      const double planned_end = explore.end_time();
      const double available = cfg.flight_budget - flight_used;
      const auto cutoff = budget_cutoff(explore, available);
      if (!cutoff) {
        r.budget_violations.push_back("flight: no budget left for exploration pass " + std::to_string(pass + 1));
        break;
      }
      if (*cutoff < planned_end) {
        explore = truncated(explore, *cutoff);
        r.budget_violations.push_back("flight: exploration pass " + std::to_string(pass + 1) + " cut at " +
                                      fmt(explore.end_time() - t0, 1) + " s of " + fmt(planned_end - t0, 1) + " s");
      }
      TrueTrajectory flight = explore;
      const Pose6d end = explore.pose_at(explore.end_time());
      if ((end.position - home).norm() > 1e-6) {
        const TrueTrajectory back = make_waypoint_trajectory(return_route(route, explore), cfg.speed, cfg.imu_rate,
                                                             1.0, explore.end_time(), yaw_of(end.orientation));
        flight = concatenated(explore, back);
      }
      fly(cfg, world, flight, aerial, bus);
      bus.run_until(flight.end_time());
      clock.phase("EXPLORE", explore.end_time() - t0);
      clock.phase("RETURN", flight.end_time() - explore.end_time());
      flight_used += flight.end_time() - t0;
      r.explore_passes = pass + 1;
    } catch (const Error& e) {
      fail(phase, e.what());
      break;
    }

    try {
      gcs_map = process_map(cfg, aerial, r.ate_rmse, r.ate_rmse_odometry);
      gcs_grid = project_occupancy(gcs_map, grid_cfg);
      have_map = true;
      r.coverage = static_cast<double>(gcs_grid.count(Cell::Free)) / static_cast<double>(gcs_grid.cells.size());
      clock.phase("PROCESS", cfg.processing_time);
    } catch (const Error& e) {
      clock.phase("PROCESS", cfg.processing_time);
      fail("PROCESS", e.what());
      break;
    }
    if (r.coverage >= cfg.coverage_target) break;
    r.notes.push_back("coverage " + fmt(r.coverage, 3) + " below target " + fmt(cfg.coverage_target, 3) +
                      " after pass " + std::to_string(pass + 1));
  }
  if (!have_map) fail("PROCESS", "no map was produced");

  r.keyframes = static_cast<int>(aerial.graph.keyframes.size());
  r.loop_closures = aerial.loop_closures;
  r.landmarks = static_cast<int>(gcs_map.landmarks.size());
  r.map_points = static_cast<int>(gcs_map.points.size());
  if (have_map) {
    out.truth_occupancy = rasterize_truth(world, gcs_grid, cfg.occupancy.z_min, cfg.occupancy.z_max);
    r.iou = occupied_iou(gcs_grid, out.truth_occupancy);
    match_victims(world, gcs_map.victims, cfg.victim_tolerance, r);
  }
  out.map = gcs_map;
  out.occupancy = gcs_grid;

  // HANDOFF
  MapGraph rex_map;
  OccupancyGrid rex_grid;
  if (r.failure_phase.empty()) {
    std::ostringstream os;
    write_map_graph(os, gcs_map);
    const std::string s = os.str();
    const std::vector<std::uint8_t> payload(s.begin(), s.end());
    const double t0 = clock.now();
    const TransferSession session = chunked_transfer(bus, "/gcs", "/rex", payload, t0);
    r.comms.transfer_bytes = session.total_bytes;
    r.comms.transfer_chunks = session.chunk_count();
    r.comms.retransmits = session.retransmits;
    r.comms.transfer_state = to_string(session.state);
    r.comms.hash_match = session.state == TransferState::Complete && session.received_hash == session.payload_hash;
    clock.phase("HANDOFF", std::max(session.finished, t0) - t0);
    if (!r.comms.hash_match) {
      fail("HANDOFF", session.state == TransferState::Complete ? "payload hash mismatch"
                                                                : "map transfer stalled after maximum retries");
    } else {
      try {
        std::istringstream is(std::string(session.received.begin(), session.received.end()));
        rex_map = read_map_graph(is);
        rex_grid = project_occupancy(rex_map, grid_cfg);
        out.map = rex_map;
        out.occupancy = rex_grid;
      } catch (const Error& e) {
        fail("HANDOFF", e.what());
      }
    }
  }

  // LOCALIZE
  Pose6d rex_true = planar_pose(cfg.ground_start.x(), cfg.ground_start.y(), 0.0, cfg.ground_start.z());
  RobotState nav_state;
  Pose6d nav_to_true;  // true = nav_to_true * believed
  double ground_time = 0.0, stance_time = 0.0, walk_time = 0.0;
  if (r.failure_phase.empty()) {
    double spent = 0.0;
    std::optional<LocalizationResult> loc;
    for (int a = 0; a < cfg.localization_attempts && !loc; ++a) {
      ++r.localization_attempts;
      const Pose6d camera = rex_true * Pose6d::from_translation(Vec3d(0, 0, cfg.ground_camera_height));
      try {
        loc = localize(rex_map, ground_observations(cfg, world, camera, clock.now() + spent));
        bus.log(clock.now() + spent, "/rex", "/rex/localize", "localized", 0);
      } catch (const Error&) {
        rex_true = rex_true * planar_pose(0.0, 0.0, 0.0, std::numbers::pi / 4.0);
      }
      spent += cfg.localization_dwell;
    }
    clock.phase("LOCALIZE", spent);
    ground_time += spent;
    stance_time += spent;
    if (loc) {
      r.localized = true;
      const Vec3d p = loc->pose.position;
      r.localization_error = std::hypot(p.x() - rex_true.position.x(), p.y() - rex_true.position.y());
      nav_state.x = p.x();
      nav_state.y = p.y();
      nav_state.yaw = yaw_of(loc->pose.orientation);
      nav_to_true = rex_true * pose_inverse(planar_pose(nav_state.x, nav_state.y, 0.0, nav_state.yaw));
    } else {
      fail("LOCALIZE", "no keyframe matched the ground view after " + std::to_string(r.localization_attempts) +
                           " attempts");
    }
  }

  // NAVIGATE and INSPECT, nearest victim first.
  const HexapodConfig& hex = cfg.hexapod;
  r.payload_limit = max_payload(hex, gait_spec(cfg.gait));
  r.payload_ok = payload_check(cfg.payload, cfg.gait, hex);
  if (r.failure_phase.empty()) {
    if (rex_map.victims.empty()) {
      r.notes.push_back("empty goal set: no victims marked, navigation skipped");
    } else {
      Costmap costmap(rex_grid);
      NavigateConfig nc;
      nc.dwa.v_max = gait_speed(hex, gait_spec(cfg.gait));
      nc.max_steps = cfg.max_steps_per_goal;
      nc.goal_tolerance = cfg.goal_tolerance;
      const SenseFn sense = [&](const RobotState& s, Costmap& c) {
        const Pose6d believed = planar_pose(s.x, s.y, cfg.ground_sensor_height, s.yaw);
        const Pose6d truth = nav_to_true * believed;
        DepthScan scan = depth_scan(truth, world, cfg.ground_depth);
        const Quatd to_map = believed.orientation * truth.orientation.conjugate();
        scan.origin = believed;
        for (DepthRay& ray : scan.rays) ray.direction = to_map.rotate(ray.direction);
        update_costmap(c, scan);
      };

      std::vector<VictimMark> pending = rex_map.victims;
      while (!pending.empty()) {
        const auto next = std::min_element(pending.begin(), pending.end(), [&](const auto& a, const auto& b) {
          return std::hypot(a.estimate.x() - nav_state.x, a.estimate.y() - nav_state.y) <
                 std::hypot(b.estimate.x() - nav_state.x, b.estimate.y() - nav_state.y);
        });
        const VictimMark mark = *next;
        pending.erase(next);
        GoalResult goal;
        goal.mark_id = mark.id;
        goal.goal = mark.estimate.head<2>();
        goal.closest = std::hypot(goal.goal.x() - nav_state.x, goal.goal.y() - nav_state.y);
        if (ground_time >= cfg.endurance_budget) {
          goal.error = "endurance budget exhausted";
          r.goals.push_back(goal);
          continue;
        }
        const double t0 = clock.now();
        bus.log(t0, "/rex", "/rex/navigate", "goal_start", 0);
        try {
          const NavigateResult res = navigate(nav_state, goal.goal, costmap, nc, sense);
          goal.reached = res.reached;
          goal.closest = res.closest;
          goal.steps = res.steps;
          goal.replans = res.replans;
          goal.recoveries = res.recoveries;
          if (!res.trace.empty()) nav_state = res.trace.back();
          nav_state.v = nav_state.omega = 0.0;
        } catch (const Error& e) {
          goal.error = e.what();
        }
        goal.duration = goal.steps * nc.dwa.control_period;
        r.goals.push_back(goal);
        clock.phase("NAVIGATE", goal.duration);
        ground_time += goal.duration;
        walk_time += goal.duration;
        bus.log(clock.now(), "/rex", "/rex/navigate", goal.reached ? "goal_reached" : "goal_failed", 0);
        if (!goal.reached) continue;

        const double ti = clock.now();
        bus.log(ti, "/rex", "/rex/inspect", "teleconference", 0);
        bus.log(ti, "/rex", "/rex/inspect", r.payload_ok ? "delivery" : "delivery_aborted", 0);
        clock.phase("INSPECT", cfg.inspect_time);
        ground_time += cfg.inspect_time;
        stance_time += cfg.inspect_time;
      }
      if (ground_time > cfg.endurance_budget) {
        r.budget_violations.push_back("endurance: ground operation " + fmt(ground_time, 1) + " s exceeds " +
                                      fmt(cfg.endurance_budget, 1) + " s");
      }
      for (const GoalResult& g : r.goals) {
        if (!g.reached) {
          fail("NAVIGATE", "goal for mark " + std::to_string(g.mark_id) + " not reached" +
                               (g.error.empty() ? "" : ": " + g.error));
          break;
        }
      }
      if (!r.payload_ok) {
        fail("INSPECT", "payload " + fmt(cfg.payload, 3) + " kg exceeds the " + to_string(cfg.gait) + " limit " +
                            fmt(r.payload_limit, 3) + " kg; delivery aborted");
      }
    }
  }
  r.ground_energy_ah = (body_current(hex, HeightMode::Gait, 0.12) * walk_time +
                        body_current(hex, HeightMode::Stance, 0.12) * stance_time) /
                       3600.0;

  for (const BusEvent& e : bus.events()) {
    if (e.event == "publish") ++r.comms.published;
    if (e.event == "deliver") ++r.comms.delivered;
    if (e.event == "drop") ++r.comms.dropped;
    if (e.event == "partition") ++r.comms.partitioned;
  }
  r.total_time = clock.now();
  r.success = r.failure_phase.empty() && r.budget_violations.empty() &&
              (r.victims_truth == 0 || r.victims_matched == r.victims_truth);
  if (r.failure_phase.empty() && !r.success) {
    r.failure_reason = !r.budget_violations.empty() ? "budget violated" : "victims missed";
  }

  out.events = bus.events();
  std::stable_sort(out.events.begin(), out.events.end(), [](const BusEvent& a, const BusEvent& b) { return a.t < b.t; });
  return out;
}

// ---- report ---------------------------------------------------------------

void write_report(std::ostream& o, const MissionReport& r) {
  o << "mission: " << (r.success ? "SUCCESS" : "FAILURE") << "\n";
  if (!r.failure_phase.empty()) o << "failure_phase: " << r.failure_phase << "\n";
  if (!r.failure_reason.empty()) o << "failure_reason: " << r.failure_reason << "\n";
  o << "total_time_s: " << fmt(r.total_time, 3) << "\n\n[phases]\n";
  for (const PhaseRecord& p : r.phases) {
    o << "  " << std::left << std::setw(9) << p.name << " start " << fmt(p.start, 3) << "  duration "
      << fmt(p.duration, 3) << "\n";
  }
  o << "\n[map]\n"
    << "  explore_passes: " << r.explore_passes << "\n"
    << "  keyframes: " << r.keyframes << "\n"
    << "  loop_closures: " << r.loop_closures << "\n"
    << "  landmarks: " << r.landmarks << "\n"
    << "  map_points: " << r.map_points << "\n"
    << "  ate_rmse_m: " << fmt(r.ate_rmse) << "\n"
    << "  ate_rmse_odometry_m: " << fmt(r.ate_rmse_odometry) << "\n"
    << "  occupancy_iou: " << fmt(r.iou) << "\n"
    << "  coverage: " << fmt(r.coverage) << "\n";
  o << "\n[victims]\n"
    << "  ground_truth: " << r.victims_truth << "\n"
    << "  marked: " << r.victims_marked << "\n"
    << "  matched: " << r.victims_matched << "\n"
    << "  false: " << r.false_marks << "\n";
  for (std::size_t i = 0; i < r.victim_errors.size(); ++i) {
    o << "  victim " << i << " error_m: " << (r.victim_errors[i] < 0 ? std::string("unmatched") : fmt(r.victim_errors[i]))
      << "\n";
  }
  o << "\n[ground]\n"
    << "  localized: " << (r.localized ? "yes" : "no") << "\n"
    << "  localization_attempts: " << r.localization_attempts << "\n"
    << "  localization_error_m: " << fmt(r.localization_error) << "\n";
  for (const GoalResult& g : r.goals) {
    o << "  goal mark " << g.mark_id << " at (" << fmt(g.goal.x(), 3) << ", " << fmt(g.goal.y(), 3)
      << "): " << (g.reached ? "reached" : "not reached") << ", closest " << fmt(g.closest) << " m, steps "
      << g.steps << ", replans " << g.replans << ", recoveries " << g.recoveries;
    if (!g.error.empty()) o << ", error: " << g.error;
    o << "\n";
  }
  o << "  payload_check: " << (r.payload_ok ? "pass" : "fail") << " (limit " << fmt(r.payload_limit) << " kg)\n"
    << "  energy_ah: " << fmt(r.ground_energy_ah) << "\n";
  o << "\n[comms]\n"
    << "  published: " << r.comms.published << "\n"
    << "  delivered: " << r.comms.delivered << "\n"
    << "  dropped: " << r.comms.dropped << "\n"
    << "  partitioned: " << r.comms.partitioned << "\n"
    << "  transfer_state: " << r.comms.transfer_state << "\n"
    << "  transfer_bytes: " << r.comms.transfer_bytes << "\n"
    << "  transfer_chunks: " << r.comms.transfer_chunks << "\n"
    << "  retransmits: " << r.comms.retransmits << "\n"
    << "  hash_match: " << (r.comms.hash_match ? "yes" : "no") << "\n";
  o << "\n[budget_violations]\n";
  if (r.budget_violations.empty()) o << "  none\n";
  for (const std::string& v : r.budget_violations) o << "  " << v << "\n";
  o << "\n[notes]\n";
  if (r.notes.empty()) o << "  none\n";
  for (const std::string& n : r.notes) o << "  " << n << "\n";
}

void write_metrics_csv(std::ostream& o, const MissionReport& r) {
  o << "metric,value\n";
  const auto row = [&](const std::string& k, const std::string& v) { o << k << "," << v << "\n"; };
  row("success", r.success ? "1" : "0");
  row("failure_phase", r.failure_phase);
  row("total_time_s", fmt(r.total_time, 3));
  for (const char* p : {"EXPLORE", "RETURN", "PROCESS", "HANDOFF", "LOCALIZE", "NAVIGATE", "INSPECT"}) {
    row(std::string("phase_") + p + "_s", fmt(r.phase_time(p), 3));
  }
  row("ate_rmse_m", fmt(r.ate_rmse, 6));
  row("ate_rmse_odometry_m", fmt(r.ate_rmse_odometry, 6));
  row("occupancy_iou", fmt(r.iou, 6));
  row("coverage", fmt(r.coverage, 6));
  row("explore_passes", std::to_string(r.explore_passes));
  row("keyframes", std::to_string(r.keyframes));
  row("loop_closures", std::to_string(r.loop_closures));
  row("victims_truth", std::to_string(r.victims_truth));
  row("victims_marked", std::to_string(r.victims_marked));
  row("victims_matched", std::to_string(r.victims_matched));
  row("victims_false", std::to_string(r.false_marks));
  row("localized", r.localized ? "1" : "0");
  row("localization_error_m", fmt(r.localization_error, 6));
  for (std::size_t i = 0; i < r.goals.size(); ++i) {
    row("goal_" + std::to_string(i) + "_reached", r.goals[i].reached ? "1" : "0");
    row("goal_" + std::to_string(i) + "_closest_m", fmt(r.goals[i].closest, 6));
  }
  row("payload_ok", r.payload_ok ? "1" : "0");
  row("energy_ah", fmt(r.ground_energy_ah, 6));
  row("budget_violations", std::to_string(r.budget_violations.size()));
  row("msgs_published", std::to_string(r.comms.published));
  row("msgs_delivered", std::to_string(r.comms.delivered));
  row("msgs_dropped", std::to_string(r.comms.dropped));
  row("msgs_partitioned", std::to_string(r.comms.partitioned));
  row("transfer_retransmits", std::to_string(r.comms.retransmits));
  row("transfer_complete", r.comms.transfer_state == "COMPLETE" ? "1" : "0");
}

}  // namespace coopsar
