#include <coopsar/error.hpp>
#include <coopsar/victims.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

namespace coopsar {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

double detection_probability(double range, const DetectorConfig& cfg) {
  if (range <= cfg.near_range) return cfg.p_near;
  if (range > cfg.far_range) return 0.0;
  const double s = (range - cfg.near_range) / (cfg.far_range - cfg.near_range);
  return cfg.p_near + s * (cfg.p_far - cfg.p_near);
}

std::vector<Detection> detect_victims(const Pose6d& camera, const World& world, const DetectorConfig& cfg,
                                      std::uint64_t seed, double timestamp) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  const Mat3d rt = camera.orientation.matrix().transpose();
  const double half_h = cfg.hfov_deg * kDeg / 2.0, half_v = cfg.vfov_deg * kDeg / 2.0;

  std::vector<Detection> out;
  for (const Victim& v : world.victims) {
    // Draw for every victim so the stream does not depend on visibility.
    const double roll = u01(rng), conf = u01(rng), noise = n01(rng);
    const Vec3d pc = rt * (v.pose.position - camera.position);
    const double range = pc.norm();
    if (!(range > 0.0) || range > cfg.far_range) continue;
    const double bearing = std::atan2(pc.y(), pc.x());
    const double elevation = std::atan2(pc.z(), std::hypot(pc.x(), pc.y()));
    if (std::abs(bearing) > half_h || std::abs(elevation) > half_v) continue;
    if (segment_occluded(camera.position, v.pose.position, world.obstacles)) continue;
    if (roll >= detection_probability(range, cfg)) continue;
    const double measured = std::max(1e-3, range + cfg.range_sigma * noise);
    out.push_back({bearing, elevation, measured, 0.5 + 0.5 * conf, timestamp, v.id});
  }
  if (cfg.false_positive_rate > 0.0) {
    std::poisson_distribution<int> count(cfg.false_positive_rate);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const double b = (2 * u01(rng) - 1) * half_h, e = (2 * u01(rng) - 1) * half_v;
      const double r = 0.5 + u01(rng) * (cfg.far_range - 0.5);
      out.push_back({b, e, r, 0.5 * u01(rng), timestamp, -1});
    }
  }
  return out;
}

VictimMark mark_victim(const Pose6d& robot, const Detection& d, MarkSource source, int id) {
  if (!std::isfinite(d.bearing) || !std::isfinite(d.elevation) || !std::isfinite(d.range)) {
    throw Error(ErrorCode::InvalidMeasurement, "detection must be finite");
  }
  VictimMark m;
  m.id = id;
  m.source = source;
  m.anchor = robot.position;
  m.direction = robot.orientation.rotate(spherical_to_point(d.bearing, d.elevation, 1.0));
  m.range = d.range;
  m.estimate = m.anchor + m.range * m.direction;
  m.timestamp = d.timestamp;
  return m;
}

namespace {

struct Cluster {
  std::vector<const VictimMark*> members;
  VictimMark rep;

  void update() {
    const bool manual = std::any_of(members.begin(), members.end(),
                                    [](const VictimMark* m) { return m->source == MarkSource::Manual; });
    Vec3d est = Vec3d::Zero(), anchor = Vec3d::Zero();
    int n = 0;
    for (const VictimMark* m : members) {
      if (manual && m->source != MarkSource::Manual) continue;
      est += m->estimate;
      anchor += m->anchor;
      ++n;
    }
    rep = *members.front();
    rep.source = manual ? MarkSource::Manual : MarkSource::Automatic;
    rep.estimate = est / n;
    rep.anchor = anchor / n;
    const Vec3d arrow = rep.estimate - rep.anchor;
    rep.range = arrow.norm();
    if (rep.range > 0.0) rep.direction = arrow / rep.range;
  }
};

}  // namespace

std::vector<VictimMark> dedupe_marks(const std::vector<VictimMark>& marks, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::ConfigInvalid, "dedupe radius must be positive");
  std::vector<const VictimMark*> order;
  for (const VictimMark& m : marks) order.push_back(&m);
  std::stable_sort(order.begin(), order.end(), [](const VictimMark* a, const VictimMark* b) {
    return a->source == MarkSource::Manual && b->source != MarkSource::Manual;
  });

  std::vector<Cluster> clusters;
  for (const VictimMark* m : order) {
    Cluster* home = nullptr;
    for (Cluster& c : clusters) {
      if ((c.rep.estimate - m->estimate).norm() < radius) {
        home = &c;
        break;
      }
    }
    if (!home) {
      clusters.push_back({{m}, *m});
      continue;
    }
    home->members.push_back(m);
    home->update();
  }
  // Centroids drift as clusters grow; merge until all survivors are apart.
  for (bool merged = true; merged;) {
    merged = false;
    for (std::size_t i = 0; i < clusters.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < clusters.size() && !merged; ++j) {
        if ((clusters[i].rep.estimate - clusters[j].rep.estimate).norm() < radius) {
          clusters[i].members.insert(clusters[i].members.end(), clusters[j].members.begin(),
                                     clusters[j].members.end());
          clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(j));
          clusters[i].update();
          merged = true;
        }
      }
    }
  }
  std::vector<VictimMark> out;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    out.push_back(clusters[i].rep);
    out.back().id = static_cast<int>(i);
  }
  return out;
}

const char* to_string(MarkSource s) { return s == MarkSource::Manual ? "manual" : "automatic"; }

void write_marks_csv(std::ostream& out, const std::vector<VictimMark>& marks) {
  out << "id,source,ax,ay,az,dx,dy,dz,ex,ey,ez\n" << std::setprecision(17);
  for (const VictimMark& m : marks) {
    out << m.id << ',' << to_string(m.source) << ',' << m.anchor.x() << ',' << m.anchor.y() << ',' << m.anchor.z()
        << ',' << m.direction.x() << ',' << m.direction.y() << ',' << m.direction.z() << ',' << m.estimate.x() << ','
        << m.estimate.y() << ',' << m.estimate.z() << '\n';
  }
}

}  // namespace coopsar
