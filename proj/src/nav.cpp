#include <coopsar/error.hpp>
#include <coopsar/nav.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <queue>

namespace coopsar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exact 1D squared distance transform (lower envelope of parabolas);
// infinite entries are not sites.
void distance_transform_1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = 0.0;
    while (true) {
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  d.assign(n, kInf);
  if (k < 0) return;
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace

std::uint8_t inflation_cost(double d, const CostmapConfig& cfg) {
  if (d <= 0.0) return kLethalCost;
  // Cell-center distances such as 3 * 0.1 should hit the radii exactly.
  constexpr double eps = 1e-9;
  if (d <= cfg.footprint_radius + eps) return kInscribedCost;
  if (d > cfg.inflation_radius + eps) return 0;
  return static_cast<std::uint8_t>(std::floor(kMaxInflatedCost * std::exp(-cfg.decay * std::max(0.0, d - cfg.footprint_radius))));
}

Costmap::Costmap(double resolution, double origin_x, double origin_y, int cols, int rows, const CostmapConfig& cfg)
    : resolution_(resolution), origin_x_(origin_x), origin_y_(origin_y), cols_(cols), rows_(rows), cfg_(cfg) {
  if (!(resolution > 0.0) || cols < 0 || rows < 0) throw Error(ErrorCode::ConfigInvalid, "bad costmap geometry");
  if (!(cfg.inflation_radius >= cfg.footprint_radius) || cfg.footprint_radius < 0.0) {
    throw Error(ErrorCode::ConfigInvalid, "inflation radius must be >= footprint radius >= 0");
  }
  const std::size_t n = static_cast<std::size_t>(cols) * static_cast<std::size_t>(rows);
  static_.assign(n, 0);
  dynamic_.assign(n, 0);
  cost_.assign(n, 0);
}

Costmap::Costmap(const OccupancyGrid& grid, const CostmapConfig& cfg)
    : Costmap(grid.resolution, grid.origin_x, grid.origin_y, grid.cols, grid.rows, cfg) {
  for (int y = 0; y < rows_; ++y) {
    for (int x = 0; x < cols_; ++x) static_[index({x, y})] = grid.at(x, y) == Cell::Occupied;
  }
  inflate();
}

CellIndex Costmap::cell_of(double x, double y) const {
  return {static_cast<int>(std::floor((x - origin_x_) / resolution_)),
          static_cast<int>(std::floor((y - origin_y_) / resolution_))};
}

Eigen::Vector2d Costmap::center(CellIndex c) const {
  return {origin_x_ + (c.x + 0.5) * resolution_, origin_y_ + (c.y + 0.5) * resolution_};
}

std::uint8_t Costmap::cost_at(double x, double y) const {
  const CellIndex c = cell_of(x, y);
  return inside(c) ? cost(c) : kLethalCost;
}

void Costmap::set_static(CellIndex c, bool occupied) { static_[index(c)] = occupied; }
void Costmap::set_dynamic(CellIndex c, bool occupied) { dynamic_[index(c)] = occupied; }

void Costmap::inflate() {
  // Squared distance in cells to the nearest obstacle cell, columns then rows.
  std::vector<double> sq(cost_.size(), kInf), f, d;
  for (int x = 0; x < cols_; ++x) {
    f.assign(rows_, kInf);
    for (int y = 0; y < rows_; ++y) {
      if (is_obstacle({x, y})) f[y] = 0.0;
    }
    distance_transform_1d(f, d);
    for (int y = 0; y < rows_; ++y) sq[index({x, y})] = d[y];
  }
  for (int y = 0; y < rows_; ++y) {
    f.assign(sq.begin() + static_cast<std::ptrdiff_t>(index({0, y})),
             sq.begin() + static_cast<std::ptrdiff_t>(index({0, y}) + cols_));
    distance_transform_1d(f, d);
    for (int x = 0; x < cols_; ++x) sq[index({x, y})] = d[x];
  }
  distance_.resize(cost_.size());
  for (std::size_t i = 0; i < cost_.size(); ++i) {
    distance_[i] = std::sqrt(sq[i]) * resolution_;
    cost_[i] = inflation_cost(distance_[i], cfg_);
  }
}

double Costmap::clearance(double x, double y, double cap) const {
  const CellIndex c = cell_of(x, y);
  if (!inside(c)) return 0.0;
  if (distance_.empty()) return cap;
  return std::min(cap, distance_[index(c)]);
}

std::int64_t octile_distance(CellIndex a, CellIndex b) {
  const std::int64_t dx = std::abs(a.x - b.x), dy = std::abs(a.y - b.y);
  return kStraightStep * std::max(dx, dy) + (kDiagonalStep - kStraightStep) * std::min(dx, dy);
}

std::int64_t cell_penalty(const Costmap& c, CellIndex cell, const PlannerConfig& cfg) {
  std::int64_t p = cfg.cost_weight * c.cost(cell);
  if (cfg.proximity_penalty > 0 && cfg.proximity_radius > 0.0) {
    const Eigen::Vector2d m = c.center(cell);
    const double d = c.clearance(m.x(), m.y(), cfg.proximity_radius);
    p += std::llround(static_cast<double>(cfg.proximity_penalty) * (cfg.proximity_radius - d) / cfg.proximity_radius);
  }
  return p;
}

PlannedPath astar(const Costmap& c, CellIndex start, CellIndex goal, const PlannerConfig& cfg) {
  const auto passable = [&](CellIndex p) { return c.inside(p) && c.cost(p) < cfg.blocked_cost; };
  if (!passable(start)) throw Error(ErrorCode::InvalidEndpoint, "start cell is outside the map or blocked");
  if (!passable(goal)) throw Error(ErrorCode::InvalidEndpoint, "goal cell is outside the map or blocked");

  const auto idx = [&](CellIndex p) { return static_cast<std::size_t>(p.y) * c.cols() + p.x; };
  const std::size_t n = static_cast<std::size_t>(c.cols()) * c.rows();
  std::vector<std::int64_t> g(n, std::numeric_limits<std::int64_t>::max());
  std::vector<std::int32_t> parent(n, -1);
  std::vector<bool> closed(n, false);

  struct Node {
    std::int64_t f, h;
    std::size_t id;
    bool operator>(const Node& o) const { return f != o.f ? f > o.f : h != o.h ? h > o.h : id > o.id; }
  };
  std::priority_queue<Node, std::vector<Node>, std::greater<>> open;
  g[idx(start)] = 0;
  open.push({octile_distance(start, goal), octile_distance(start, goal), idx(start)});

  PlannedPath out;
  while (!open.empty()) {
    const Node cur = open.top();
    open.pop();
    if (closed[cur.id]) continue;
    closed[cur.id] = true;
    ++out.expanded;
    const CellIndex p{static_cast<int>(cur.id % c.cols()), static_cast<int>(cur.id / c.cols())};
    if (p == goal) break;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const CellIndex q{p.x + dx, p.y + dy};
        if (!passable(q)) continue;
        if (dx != 0 && dy != 0 && (!passable({p.x + dx, p.y}) || !passable({p.x, p.y + dy}))) continue;
        const std::size_t qi = idx(q);
        if (closed[qi]) continue;
        const std::int64_t step = (dx != 0 && dy != 0) ? kDiagonalStep : kStraightStep;
        const std::int64_t ng = g[cur.id] + step + cell_penalty(c, q, cfg);
        if (ng < g[qi]) {
          g[qi] = ng;
          parent[qi] = static_cast<std::int32_t>(cur.id);
          const std::int64_t h = octile_distance(q, goal);
          open.push({ng + h, h, qi});
        }
      }
    }
  }
  if (!closed[idx(goal)]) throw Error(ErrorCode::NoPath, "goal is unreachable from start");
  out.cost = g[idx(goal)];
  for (std::int64_t at = static_cast<std::int64_t>(idx(goal)); at >= 0; at = parent[static_cast<std::size_t>(at)]) {
    out.cells.push_back({static_cast<int>(at % c.cols()), static_cast<int>(at / c.cols())});
  }
  std::reverse(out.cells.begin(), out.cells.end());
  return out;
}

namespace {

// Grid cells crossed by the segment a -> b, in order (Amanatides-Woo).
template <typename Fn>
void traverse(const Costmap& c, const Eigen::Vector2d& a, const Eigen::Vector2d& b, Fn&& visit) {
  CellIndex cell = c.cell_of(a.x(), a.y());
  const CellIndex last = c.cell_of(b.x(), b.y());
  const Eigen::Vector2d d = b - a;
  const int sx = d.x() > 0 ? 1 : -1, sy = d.y() > 0 ? 1 : -1;
  const double res = c.resolution();
  const auto boundary = [&](int i, int s, double origin) { return origin + (i + (s > 0 ? 1 : 0)) * res; };
  double tmx = d.x() != 0 ? (boundary(cell.x, sx, c.origin_x()) - a.x()) / d.x() : kInf;
  double tmy = d.y() != 0 ? (boundary(cell.y, sy, c.origin_y()) - a.y()) / d.y() : kInf;
  const double tdx = d.x() != 0 ? res / std::abs(d.x()) : kInf;
  const double tdy = d.y() != 0 ? res / std::abs(d.y()) : kInf;
  const int limit = std::abs(last.x - cell.x) + std::abs(last.y - cell.y) + 1;
  for (int i = 0; i < limit; ++i) {
    visit(cell);
    if (cell == last) return;
    if (tmx < tmy) {
      cell.x += sx;
      tmx += tdx;
    } else {
      cell.y += sy;
      tmy += tdy;
    }
  }
  visit(last);
}

struct Ray {
  Vec3d from;
  Vec3d to;
  bool hit;
};

void apply_rays(Costmap& c, const std::vector<Ray>& rays) {
  const CostmapConfig& cfg = c.config();
  for (const Ray& r : rays) {
    const CellIndex end = c.cell_of(r.to.x(), r.to.y());
    traverse(c, r.from.head<2>(), r.to.head<2>(), [&](CellIndex cell) {
      if (r.hit && cell == end) return;
      if (c.inside(cell)) c.set_dynamic(cell, false);
    });
  }
  for (const Ray& r : rays) {
    if (!r.hit || r.to.z() < cfg.z_min || r.to.z() > cfg.z_max) continue;
    const CellIndex end = c.cell_of(r.to.x(), r.to.y());
    if (c.inside(end)) c.set_dynamic(end, true);
  }
  c.inflate();
}

}  // namespace

void update_costmap(Costmap& c, const DepthScan& scan) {
  std::vector<Ray> rays;
  rays.reserve(scan.rays.size());
  for (const DepthRay& r : scan.rays) {
    rays.push_back({scan.origin.position, scan.origin.position + r.range * r.direction, r.hit});
  }
  apply_rays(c, rays);
}

void update_costmap(Costmap& c, const std::vector<Vec3d>& points, const Pose6d& robot) {
  std::vector<Ray> rays;
  rays.reserve(points.size());
  for (const Vec3d& p : points) rays.push_back({robot.position, p, true});
  apply_rays(c, rays);
}

RobotState unicycle_step(const RobotState& s, const VelocityCommand& cmd, double dt) {
  RobotState n = s;
  n.v = cmd.v;
  n.omega = cmd.omega;
  n.yaw = wrap_angle(s.yaw + cmd.omega * dt);
  if (std::abs(cmd.omega) < 1e-9) {
    n.x += cmd.v * dt * std::cos(s.yaw);
    n.y += cmd.v * dt * std::sin(s.yaw);
  } else {
    const double r = cmd.v / cmd.omega;
    n.x += r * (std::sin(s.yaw + cmd.omega * dt) - std::sin(s.yaw));
    n.y -= r * (std::cos(s.yaw + cmd.omega * dt) - std::cos(s.yaw));
  }
  return n;
}

Eigen::Vector2d lookahead_point(const RobotState& s, const std::vector<Eigen::Vector2d>& path, double lookahead) {
  if (path.empty()) throw Error(ErrorCode::ConfigInvalid, "path is empty");
  const Eigen::Vector2d p(s.x, s.y);
  std::size_t nearest = 0;
  double best = kInf;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const double d = (path[i] - p).squaredNorm();
    if (d < best) {
      best = d;
      nearest = i;
    }
  }
  for (std::size_t i = nearest; i < path.size(); ++i) {
    if ((path[i] - p).norm() >= lookahead) return path[i];
  }
  return path.back();
}

namespace {

// Free travel along the (v, omega) arc before the first blocked cell,
// capped; a command that does not translate keeps the full cap.
double arc_clearance(const RobotState& s, const VelocityCommand& cmd, const Costmap& c, const DwaConfig& cfg) {
  const double ds = 0.5 * c.resolution();
  if (std::abs(cmd.v) * cfg.horizon < ds) return cfg.clearance_cap;
  const double tau = ds / std::abs(cmd.v);
  RobotState a = s;
  double travelled = 0.0;
  while (travelled < cfg.clearance_cap) {
    a = unicycle_step(a, cmd, tau);
    if (c.cost_at(a.x, a.y) >= cfg.collision_cost) break;
    travelled += ds;
  }
  return std::min(travelled, cfg.clearance_cap);
}

}  // namespace

std::vector<DwaCandidate> dwa_candidates(const RobotState& s, const std::vector<Eigen::Vector2d>& path,
                                         const Costmap& c, const DwaConfig& cfg) {
  if (cfg.v_samples < 2 || cfg.omega_samples < 2 || !(cfg.dt > 0.0) || !(cfg.horizon > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "DWA lattice needs >= 2 samples per axis and positive timing");
  }
  const Eigen::Vector2d target = lookahead_point(s, path, cfg.lookahead);
  const double v_lo = std::clamp(s.v - cfg.accel_v * cfg.control_period, 0.0, cfg.v_max);
  const double v_hi = std::clamp(s.v + cfg.accel_v * cfg.control_period, 0.0, cfg.v_max);
  const double w_lo = std::clamp(s.omega - cfg.accel_omega * cfg.control_period, -cfg.omega_max, cfg.omega_max);
  const double w_hi = std::clamp(s.omega + cfg.accel_omega * cfg.control_period, -cfg.omega_max, cfg.omega_max);
  const int steps = static_cast<int>(std::lround(cfg.horizon / cfg.dt));

  std::vector<DwaCandidate> out;
  out.reserve(static_cast<std::size_t>(cfg.v_samples) * cfg.omega_samples);
  for (int i = 0; i < cfg.v_samples; ++i) {
    const double tv = double(i) / (cfg.v_samples - 1);
    for (int j = 0; j < cfg.omega_samples; ++j) {
      const double tw = double(j) / (cfg.omega_samples - 1);
      DwaCandidate cand;
      cand.cmd = {v_lo * (1 - tv) + v_hi * tv, w_lo * (1 - tw) + w_hi * tw};
      RobotState st = s;
      for (int k = 0; k < steps; ++k) {
        st = unicycle_step(st, cand.cmd, cfg.dt);
        cand.rollout.push_back(st);
        if (c.cost_at(st.x, st.y) >= cfg.collision_cost) cand.collides = true;
      }
      const double clear = arc_clearance(s, cand.cmd, c, cfg);
      const Eigen::Vector2d to_target = target - Eigen::Vector2d(st.x, st.y);
      const double err = to_target.norm() < 1e-9 ? 0.0 : std::abs(wrap_angle(std::atan2(to_target.y(), to_target.x()) - st.yaw));
      cand.heading = 1.0 - err / std::numbers::pi;
      cand.clearance = cfg.clearance_cap > 0.0 ? clear / cfg.clearance_cap : 0.0;
      cand.speed = cfg.v_max > 0.0 ? cand.cmd.v / cfg.v_max : 0.0;
      cand.score = cfg.w_heading * cand.heading + cfg.w_clearance * cand.clearance + cfg.w_speed * cand.speed;
      out.push_back(std::move(cand));
    }
  }
  return out;
}

DwaResult dwa_step(const RobotState& s, const std::vector<Eigen::Vector2d>& path, const Costmap& c,
                   const DwaConfig& cfg) {
  std::vector<DwaCandidate> cands = dwa_candidates(s, path, c, cfg);
  const DwaCandidate* best = nullptr;
  const auto better = [](const DwaCandidate& a, const DwaCandidate& b) {
    if (std::abs(a.score - b.score) > 1e-12) return a.score > b.score;
    if (a.cmd.v != b.cmd.v) return a.cmd.v > b.cmd.v;
    if (std::abs(a.cmd.omega) != std::abs(b.cmd.omega)) return std::abs(a.cmd.omega) < std::abs(b.cmd.omega);
    return a.cmd.omega < b.cmd.omega;
  };
  for (const DwaCandidate& cand : cands) {
    if (cand.collides) continue;
    if (!best || better(cand, *best)) best = &cand;
  }
  if (!best) throw Error(ErrorCode::AllTrajectoriesCollide, "every sampled rollout enters a blocked cell");
  DwaResult r;
  r.cmd = best->cmd;
  r.best = *best;
  r.lookahead_point = lookahead_point(s, path, cfg.lookahead);
  r.candidates = cands.size();
  return r;
}

VelocityCommand recovery_command(const RobotState& s, const std::vector<Eigen::Vector2d>& path, const DwaConfig& cfg) {
  const Eigen::Vector2d t = lookahead_point(s, path, cfg.lookahead);
  const double err = wrap_angle(std::atan2(t.y() - s.y, t.x() - s.x) - s.yaw);
  const double want = err >= 0 ? cfg.omega_max : -cfg.omega_max;
  const double step = cfg.accel_omega * cfg.control_period;
  return {0.0, std::clamp(want, s.omega - step, s.omega + step)};
}

std::vector<Eigen::Vector2d> path_points(const Costmap& c, const std::vector<CellIndex>& cells) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(cells.size());
  for (const CellIndex& cell : cells) out.push_back(c.center(cell));
  return out;
}

void write_path_csv(std::ostream& out, const Costmap& c, const std::vector<CellIndex>& cells) {
  out << "cx,cy,x,y\n" << std::setprecision(10);
  for (const CellIndex& cell : cells) {
    const Eigen::Vector2d p = c.center(cell);
    out << cell.x << ',' << cell.y << ',' << p.x() << ',' << p.y() << '\n';
  }
}

void write_costmap_pgm(std::ostream& out, const Costmap& c) {
  out << "P5\n" << c.cols() << ' ' << c.rows() << "\n255\n";
  for (int y = c.rows() - 1; y >= 0; --y) {
    for (int x = 0; x < c.cols(); ++x) {
      const std::uint8_t v = c.cost({x, y});
      out.put(static_cast<char>(v >= kInscribedCost ? 0 : 254 - v));
    }
  }
}

CellIndex nearest_passable(const Costmap& c, CellIndex from, const PlannerConfig& cfg) {
  const auto passable = [&](CellIndex p) { return c.inside(p) && c.cost(p) < cfg.blocked_cost; };
  if (passable(from) || !c.inside(from)) return from;
  std::vector<bool> seen(static_cast<std::size_t>(c.cols()) * c.rows(), false);
  const auto idx = [&](CellIndex p) { return static_cast<std::size_t>(p.y) * c.cols() + p.x; };
  std::queue<CellIndex> q;
  q.push(from);
  seen[idx(from)] = true;
  while (!q.empty()) {
    const CellIndex p = q.front();
    q.pop();
    if (passable(p)) return p;
    for (const auto& [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const CellIndex n{p.x + dx, p.y + dy};
      if (c.inside(n) && !seen[idx(n)]) {
        seen[idx(n)] = true;
        q.push(n);
      }
    }
  }
  return from;
}

namespace {

bool path_blocked(const Costmap& c, const std::vector<CellIndex>& cells, const PlannerConfig& cfg) {
  return std::any_of(cells.begin(), cells.end(), [&](CellIndex p) { return c.cost(p) >= cfg.blocked_cost; });
}

}  // namespace

NavigateResult navigate(RobotState start, const Eigen::Vector2d& goal, Costmap& c, const NavigateConfig& cfg,
                        const SenseFn& sense) {
  NavigateResult res;
  RobotState s = start;
  const CellIndex goal_cell = nearest_passable(c, c.cell_of(goal.x(), goal.y()), cfg.planner);
  const auto plan = [&] {
    const CellIndex from = nearest_passable(c, c.cell_of(s.x, s.y), cfg.planner);
    return astar(c, from, goal_cell, cfg.planner);
  };
  if (sense) sense(s, c);
  PlannedPath path = plan();
  std::vector<Eigen::Vector2d> pts = path_points(c, path.cells);
  pts.back() = goal;
  res.closest = (Eigen::Vector2d(s.x, s.y) - goal).norm();
  res.trace.push_back(s);
  for (int step = 0; step < cfg.max_steps; ++step) {
    if (res.closest <= cfg.goal_tolerance) break;
    if (sense) {
      sense(s, c);
      if (path_blocked(c, path.cells, cfg.planner)) {
        try {
          path = plan();
          pts = path_points(c, path.cells);
          pts.back() = goal;
          ++res.replans;
        } catch (const Error&) {
          // Keep the stale plan; DWA still avoids the blocked cells.
        }
      }
    }
    VelocityCommand cmd;
    try {
      const DwaResult r = dwa_step(s, pts, c, cfg.dwa);
      cmd = r.cmd;
      for (const RobotState& st : r.best.rollout) {
        if (c.cost_at(st.x, st.y) == kLethalCost) {
          ++res.lethal_rollouts;
          break;
        }
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AllTrajectoriesCollide) throw;
      cmd = recovery_command(s, pts, cfg.dwa);
      ++res.recoveries;
    }
    s = unicycle_step(s, cmd, cfg.dwa.control_period);
    res.trace.push_back(s);
    res.steps = step + 1;
    res.closest = std::min(res.closest, (Eigen::Vector2d(s.x, s.y) - goal).norm());
  }
  res.reached = res.closest <= cfg.goal_tolerance;
  return res;
}

}  // namespace coopsar
