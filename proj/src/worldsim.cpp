#include <coopsar/error.hpp>
#include <coopsar/worldsim.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <string>

namespace coopsar {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Parametric interval [t0, t1] of the line a + t*d inside the box, if any.
bool slab_interval(const Vec3d& a, const Vec3d& d, const Box& box, double& t0, double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (d[i] == 0.0) {
      if (a[i] < box.min[i] || a[i] > box.max[i]) return false;
      continue;
    }
    double lo = (box.min[i] - a[i]) / d[i];
    double hi = (box.max[i] - a[i]) / d[i];
    if (lo > hi) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

bool Box::contains(const Vec3d& p, double margin) const {
  return ((p.array() >= min.array() - margin) && (p.array() <= max.array() + margin)).all();
}

double Box::distance(const Vec3d& p) const {
  const Vec3d outside = (min - p).cwiseMax(p - max).cwiseMax(0.0);
  return outside.norm();
}

double Terrain::height_at(double x, double y) const {
  if (rows <= 0 || cols <= 0 || !(resolution > 0.0)) return 0.0;
  const auto c = static_cast<long>(std::floor((x - origin_x) / resolution));
  const auto r = static_cast<long>(std::floor((y - origin_y) / resolution));
  if (c < 0 || r < 0 || c >= cols || r >= rows) return 0.0;
  return heights[static_cast<std::size_t>(r * cols + c)];
}

void World::validate() const {
  std::set<int> ids;
  for (const Landmark& l : landmarks) {
    if (!ids.insert(l.id).second) {
      throw Error(ErrorCode::ConfigInvalid, "landmarks: duplicate id " + std::to_string(l.id));
    }
  }
  for (const Victim& v : victims) {
    if (!bounds.contains(v.pose.position)) {
      throw Error(ErrorCode::ConfigInvalid, "victims: id " + std::to_string(v.id) + " lies outside bounds");
    }
  }
  for (const Box& b : obstacles) {
    if (!(b.min.array() <= b.max.array()).all()) throw Error(ErrorCode::ConfigInvalid, "obstacles: min > max");
  }
  if (terrain.rows < 0 || terrain.cols < 0 ||
      terrain.heights.size() != static_cast<std::size_t>(terrain.rows) * static_cast<std::size_t>(terrain.cols)) {
    throw Error(ErrorCode::ConfigInvalid, "terrain: heights size must equal rows*cols");
  }
}

const Landmark* World::find_landmark(int id) const {
  for (const Landmark& l : landmarks) {
    if (l.id == id) return &l;
  }
  return nullptr;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, double t) { return mix_seed(a, std::bit_cast<std::uint64_t>(t)); }

World generate_world(std::uint64_t seed, const WorldGenConfig& cfg) {
  std::mt19937_64 rng(seed);
  const auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  World w;
  w.seed = seed;
  const double W = cfg.width, D = cfg.depth, H = cfg.wall_height, t = cfg.wall_thickness;
  w.bounds = {Vec3d(0, 0, 0), Vec3d(W, D, H + 1.0)};

  // Walls: south, north, west, east.
  w.obstacles.push_back({Vec3d(0, 0, 0), Vec3d(W, t, H)});
  w.obstacles.push_back({Vec3d(0, D - t, 0), Vec3d(W, D, H)});
  w.obstacles.push_back({Vec3d(0, t, 0), Vec3d(t, D - t, H)});
  w.obstacles.push_back({Vec3d(W - t, t, 0), Vec3d(W, D - t, H)});
  const std::size_t wall_count = w.obstacles.size();

  // Interior boxes stay below the flight altitude and keep corridors of at
  // least `gap` between each other.
  const int n_obstacles = uniform_int(cfg.min_obstacles, cfg.max_obstacles);
  const double gap = 1.4;
  for (int attempt = 0; attempt < 2000 && static_cast<int>(w.obstacles.size() - wall_count) < n_obstacles;
       ++attempt) {
    const double sx = uniform(0.6, 1.6), sy = uniform(0.6, 1.6), sz = uniform(0.4, 1.2);
    const double cx = uniform(cfg.keep_out_margin, W - cfg.keep_out_margin);
    const double cy = uniform(cfg.keep_out_margin, D - cfg.keep_out_margin);
    const Box b{Vec3d(cx - sx / 2, cy - sy / 2, 0.0), Vec3d(cx + sx / 2, cy + sy / 2, sz)};
    bool ok = true;
    for (std::size_t i = wall_count; i < w.obstacles.size() && ok; ++i) {
      const Box& o = w.obstacles[i];
      ok = b.min.x() > o.max.x() + gap || b.max.x() < o.min.x() - gap || b.min.y() > o.max.y() + gap ||
           b.max.y() < o.min.y() - gap;
    }
    if (ok) w.obstacles.push_back(b);
  }

  // Vertical faces that look into the arena, weighted by area.
  struct Face {
    Vec3d origin, u, v;  // origin + a*u + b*v, a,b in [0,1]
    double area;
  };
  std::vector<Face> faces;
  faces.push_back({Vec3d(t, t, 0), Vec3d(W - 2 * t, 0, 0), Vec3d(0, 0, H), (W - 2 * t) * H});
  faces.push_back({Vec3d(t, D - t, 0), Vec3d(W - 2 * t, 0, 0), Vec3d(0, 0, H), (W - 2 * t) * H});
  faces.push_back({Vec3d(t, t, 0), Vec3d(0, D - 2 * t, 0), Vec3d(0, 0, H), (D - 2 * t) * H});
  faces.push_back({Vec3d(W - t, t, 0), Vec3d(0, D - 2 * t, 0), Vec3d(0, 0, H), (D - 2 * t) * H});
  for (std::size_t i = wall_count; i < w.obstacles.size(); ++i) {
    const Box& b = w.obstacles[i];
    const Vec3d e = b.max - b.min;
    const Vec3d up(0, 0, e.z());
    faces.push_back({b.min, Vec3d(e.x(), 0, 0), up, e.x() * e.z()});
    faces.push_back({Vec3d(b.min.x(), b.max.y(), 0), Vec3d(e.x(), 0, 0), up, e.x() * e.z()});
    faces.push_back({b.min, Vec3d(0, e.y(), 0), up, e.y() * e.z()});
    faces.push_back({Vec3d(b.max.x(), b.min.y(), 0), Vec3d(0, e.y(), 0), up, e.y() * e.z()});
  }
  std::vector<double> areas;
  for (const Face& f : faces) areas.push_back(f.area);
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  for (int id = 0; id < cfg.landmark_count; ++id) {
    const Face& f = faces[pick(rng)];
    const double a = uniform(0.0, 1.0);
    const double b = uniform(0.05 / f.v.z(), 1.0);
    w.landmarks.push_back({id, f.origin + a * f.u + b * f.v, id});
  }

  const int n_victims = cfg.victim_count ? *cfg.victim_count : uniform_int(cfg.min_victims, cfg.max_victims);
  for (int attempt = 0; attempt < 5000 && static_cast<int>(w.victims.size()) < n_victims; ++attempt) {
    const Vec3d p(uniform(cfg.keep_out_margin, W - cfg.keep_out_margin),
                  uniform(cfg.keep_out_margin, D - cfg.keep_out_margin), cfg.victim_height);
    bool ok = true;
    for (const Box& b : w.obstacles) ok = ok && b.distance(Vec3d(p.x(), p.y(), 0.0)) > 1.0;
    for (const Victim& v : w.victims) ok = ok && (v.pose.position - p).norm() > 2.5;
    if (!ok) continue;
    const double yaw = uniform(-std::numbers::pi, std::numbers::pi);
    w.victims.push_back({static_cast<int>(w.victims.size()), {p, Quatd::about_z(yaw)}});
  }
  return w;
}

TrueTrajectory::TrueTrajectory(std::vector<TrajectorySample> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw Error(ErrorCode::ConfigInvalid, "trajectory needs at least one sample");
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    if (!(samples_[i].timestamp > samples_[i - 1].timestamp)) {
      throw Error(ErrorCode::NonMonotonicTimestamp, "trajectory timestamps must be strictly increasing");
    }
  }
}

std::size_t TrueTrajectory::segment_index(double t) const {
  if (samples_.empty() || t < start_time() || t > end_time()) {
    throw Error(ErrorCode::OutOfSpan, "t=" + std::to_string(t) + " outside trajectory span");
  }
  if (samples_.size() == 1) return 0;
  const auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                                   [](double v, const TrajectorySample& s) { return v < s.timestamp; });
  const auto i = static_cast<std::size_t>(std::distance(samples_.begin(), it));
  return std::min(i == 0 ? 0 : i - 1, samples_.size() - 2);
}

Pose6d TrueTrajectory::pose_at(double t) const {
  const std::size_t i = segment_index(t);
  if (samples_.size() == 1) return samples_[0].pose;
  const TrajectorySample& a = samples_[i];
  const TrajectorySample& b = samples_[i + 1];
  const double s = (t - a.timestamp) / (b.timestamp - a.timestamp);
  if (s == 0.0) return a.pose;
  if (s == 1.0) return b.pose;
  const Vec3d rel = (a.pose.orientation.conjugate() * b.pose.orientation).log();
  return {a.pose.position + s * (b.pose.position - a.pose.position),
          a.pose.orientation * Quatd::from_rotation_vector(s * rel)};
}

Vec3d TrueTrajectory::velocity_at(double t) const {
  const std::size_t i = segment_index(t);
  if (samples_.size() == 1) return Vec3d::Zero();
  const TrajectorySample& a = samples_[i];
  const TrajectorySample& b = samples_[i + 1];
  return (b.pose.position - a.pose.position) / (b.timestamp - a.timestamp);
}

Vec3d TrueTrajectory::body_rate_at(double t) const {
  const std::size_t i = segment_index(t);
  if (samples_.size() == 1) return Vec3d::Zero();
  const TrajectorySample& a = samples_[i];
  const TrajectorySample& b = samples_[i + 1];
  return (a.pose.orientation.conjugate() * b.pose.orientation).log() / (b.timestamp - a.timestamp);
}

Vec3d TrueTrajectory::acceleration_at(double t, double h) const {
  segment_index(t);
  const double tm = std::max(t - h, start_time());
  const double tp = std::min(t + h, end_time());
  if (!(tp > t) || !(t > tm)) return Vec3d::Zero();
  const Vec3d p = pose_at(t).position;
  const Vec3d v_fwd = (pose_at(tp).position - p) / (tp - t);
  const Vec3d v_bwd = (p - pose_at(tm).position) / (t - tm);
  return (v_fwd - v_bwd) / ((tp - tm) / 2.0);
}

TrueTrajectory make_waypoint_trajectory(const std::vector<Vec3d>& waypoints, double speed, double rate_hz,
                                        double max_yaw_rate, double start_time, std::optional<double> initial_yaw) {
  if (waypoints.empty()) throw Error(ErrorCode::ConfigInvalid, "waypoints: empty list");
  if (!(speed > 0.0) || !(rate_hz > 0.0)) throw Error(ErrorCode::ConfigInvalid, "speed and rate must be positive");
  const double dt = 1.0 / rate_hz;
  // Only translate while roughly facing the next waypoint.
  const double align_tol = 30.0 * kDeg;

  Vec3d p = waypoints.front();
  double yaw = 0.0;
  if (initial_yaw) {
    yaw = *initial_yaw;
  } else if (waypoints.size() > 1) {
    const Vec3d d = waypoints[1] - waypoints[0];
    yaw = std::atan2(d.y(), d.x());
  }
  std::vector<TrajectorySample> out;
  double t = start_time;
  out.push_back({t, planar_pose(p.x(), p.y(), p.z(), yaw)});
  std::size_t target = 1;
  const std::size_t max_steps = 10'000'000;
  for (std::size_t step = 0; target < waypoints.size() && step < max_steps; ++step) {
    const Vec3d to_go = waypoints[target] - p;
    if (to_go.norm() < 1e-9) {
      ++target;
      continue;
    }
    const Vec3d horiz(to_go.x(), to_go.y(), 0.0);
    double yaw_err = 0.0;
    if (horiz.norm() > 1e-6) yaw_err = wrap_angle(std::atan2(horiz.y(), horiz.x()) - yaw);
    const double max_turn = max_yaw_rate * dt;
    yaw = wrap_angle(yaw + std::clamp(yaw_err, -max_turn, max_turn));
    if (std::abs(yaw_err) <= align_tol) {
      const double stepd = speed * dt;
      if (to_go.norm() <= stepd) {
        p = waypoints[target];
        ++target;
      } else {
        p += to_go.normalized() * stepd;
      }
    }
    t = start_time + static_cast<double>(out.size()) * dt;
    out.push_back({t, planar_pose(p.x(), p.y(), p.z(), yaw)});
  }
  return TrueTrajectory(std::move(out));
}

ImuSample sample_imu(const TrueTrajectory& traj, double t, const ImuNoiseConfig& noise, std::uint64_t seed) {
  const Pose6d pose = traj.pose_at(t);
  const Mat3d rt = pose.orientation.matrix().transpose();
  ImuSample s;
  s.timestamp = t;
  s.gyro = traj.body_rate_at(t) + noise.gyro_bias;
  s.accel = rt * (traj.acceleration_at(t) + Vec3d(0, 0, kGravity));
  if (noise.with_mag) s.mag = rt * Vec3d::UnitX();

  std::mt19937_64 rng(mix_seed(seed, t));
  std::normal_distribution<double> n01(0.0, 1.0);
  const auto draw = [&](double sigma) {
    Vec3d v;
    for (int i = 0; i < 3; ++i) v[i] = n01(rng);
    return Vec3d(sigma * v);
  };
  const Vec3d ng = draw(noise.gyro_sigma), na = draw(noise.accel_sigma), nm = draw(noise.mag_sigma);
  if (noise.gyro_sigma > 0.0) s.gyro += ng;
  if (noise.accel_sigma > 0.0) s.accel += na;
  if (s.mag && noise.mag_sigma > 0.0) *s.mag += nm;
  return s;
}

Vec3d spherical_to_point(double bearing, double elevation, double range) {
  return range * Vec3d(std::cos(elevation) * std::cos(bearing), std::cos(elevation) * std::sin(bearing),
                       std::sin(elevation));
}

Vec3d LandmarkObservation::point() const { return spherical_to_point(bearing, elevation, range); }

bool segment_occluded(const Vec3d& a, const Vec3d& b, const std::vector<Box>& boxes) {
  const Vec3d d = b - a;
  const double len = d.norm();
  if (len == 0.0) return false;
  const double eps = 1e-6 / len;
  for (const Box& box : boxes) {
    double t0 = 0.0, t1 = 0.0;
    if (!slab_interval(a, d, box, t0, t1)) continue;
    const double enter = std::max(t0, 0.0);
    const double exit = std::min(t1, 1.0);
    if (exit - enter > eps && enter < 1.0 - eps && exit > eps) return true;
  }
  return false;
}

std::vector<LandmarkObservation> observe_landmarks(const Pose6d& camera, const World& world, const CameraConfig& cfg) {
  std::vector<LandmarkObservation> out;
  const Mat3d rt = camera.orientation.matrix().transpose();
  const double half_h = cfg.hfov_deg * kDeg / 2.0;
  const double half_v = cfg.vfov_deg * kDeg / 2.0;
  for (const Landmark& l : world.landmarks) {
    const Vec3d pc = rt * (l.position - camera.position);
    const double range = pc.norm();
    if (range < cfg.min_range || range > cfg.max_range) continue;
    const double bearing = std::atan2(pc.y(), pc.x());
    const double elevation = std::atan2(pc.z(), std::hypot(pc.x(), pc.y()));
    if (std::abs(bearing) > half_h || std::abs(elevation) > half_v) continue;
    if (segment_occluded(camera.position, l.position, world.obstacles)) continue;
    out.push_back({l.id, bearing, elevation, range});
  }
  return out;
}

VoEstimate simulate_vo(const Pose6d& prev, const Pose6d& cur, int visible_count, const VoNoiseConfig& noise,
                       std::uint64_t seed, double timestamp) {
  VoEstimate e;
  e.visible_count = visible_count;
  e.timestamp = timestamp;
  e.valid = visible_count >= noise.min_visible && visible_count > 0;
  if (!e.valid) return e;
  e.relative = pose_between(prev, cur);
  const double scale = 1.0 / std::sqrt(static_cast<double>(visible_count));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec3d dt, dr;
  for (int i = 0; i < 3; ++i) dt[i] = n01(rng);
  for (int i = 0; i < 3; ++i) dr[i] = n01(rng);
  if (noise.sigma_translation > 0.0) e.relative.position += noise.sigma_translation * scale * dt;
  if (noise.sigma_rotation > 0.0) {
    e.relative.orientation = e.relative.orientation * Quatd::from_rotation_vector(noise.sigma_rotation * scale * dr);
  }
  return e;
}

std::optional<double> ray_box_entry(const Vec3d& origin, const Vec3d& dir, const Box& box, double max_range) {
  double t0 = 0.0, t1 = 0.0;
  if (!slab_interval(origin, dir, box, t0, t1)) return std::nullopt;
  if (t0 < 0.0 || t0 > max_range) return std::nullopt;
  return t0;
}

std::vector<Vec3d> DepthScan::points() const {
  std::vector<Vec3d> pts;
  for (const DepthRay& r : rays) {
    if (r.hit) pts.push_back(origin.position + r.range * r.direction);
  }
  return pts;
}

DepthScan depth_scan(const Pose6d& sensor, const World& world, const DepthConfig& cfg) {
  DepthScan scan;
  scan.origin = sensor;
  const int n = static_cast<int>(std::floor(cfg.hfov_deg / cfg.resolution_deg + 1e-9)) + 1;
  const double first = -0.5 * cfg.resolution_deg * (n - 1);
  for (double elev : cfg.elevations_deg) {
    for (int k = 0; k < n; ++k) {
      const double bearing = (first + k * cfg.resolution_deg) * kDeg;
      DepthRay ray;
      ray.direction = sensor.orientation.rotate(spherical_to_point(bearing, elev * kDeg, 1.0));
      ray.range = cfg.max_range;
      for (const Box& b : world.obstacles) {
        if (const auto hit = ray_box_entry(sensor.position, ray.direction, b, ray.range)) {
          if (!ray.hit || *hit < ray.range) {
            ray.range = *hit;
            ray.hit = true;
          }
        }
      }
      scan.rays.push_back(ray);
    }
  }
  return scan;
}

}  // namespace coopsar
