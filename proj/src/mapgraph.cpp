#include <coopsar/error.hpp>
#include <coopsar/mapgraph.hpp>

#include <Eigen/SVD>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_map>

namespace coopsar {

const Keyframe* MapGraph::find(int id) const {
  for (const Keyframe& k : keyframes) {
    if (k.id == id) return &k;
  }
  return nullptr;
}

std::vector<int> signature_of(const std::vector<BodyObservation>& obs) {
  std::vector<int> s;
  s.reserve(obs.size());
  for (const BodyObservation& o : obs) s.push_back(o.landmark_id);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

double jaccard(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t i = 0, j = 0, common = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++common;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

namespace {

Matrix6d diag_information(double sigma_t, double sigma_r) {
  Vector6d d;
  d << Vec3d::Constant(1.0 / (sigma_t * sigma_t)), Vec3d::Constant(1.0 / (sigma_r * sigma_r));
  return d.asDiagonal();
}

std::vector<int> common_ids(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

void add_projection(MapGraph& g, const Pose6d& pose, const BodyObservation& o) {
  LandmarkEstimate& e = g.landmarks[o.landmark_id];
  const Vec3d p = pose.transform(o.position);
  e.position = (e.position * e.count + p) / (e.count + 1);
  ++e.count;
}

}  // namespace

bool maybe_add_keyframe(MapGraph& g, const Pose6d& odom_pose, const std::vector<BodyObservation>& obs,
                        double timestamp, const KeyframeThresholds& th) {
  if (g.state == MappingState::Paused) return false;
  if (!g.keyframes.empty()) {
    const Pose6d rel = pose_between(g.keyframes.back().pose, odom_pose);
    const bool moved = rel.position.norm() >= th.translation - 1e-9;
    const bool turned = rel.orientation.angle() >= th.rotation - 1e-9;
    if (!moved && !turned) return false;
  }
  Keyframe kf;
  kf.id = g.keyframes.empty() ? 0 : g.keyframes.back().id + 1;
  kf.pose = odom_pose;
  kf.signature = signature_of(obs);
  kf.observations = obs;
  kf.timestamp = timestamp;
  if (!g.keyframes.empty()) {
    const Keyframe& prev = g.keyframes.back();
    g.edges.push_back({prev.id, kf.id, EdgeKind::Odometry, pose_between(prev.pose, odom_pose),
                       diag_information(th.odom_sigma_translation, th.odom_sigma_rotation)});
  }
  for (const BodyObservation& o : obs) add_projection(g, odom_pose, o);
  g.keyframes.push_back(std::move(kf));
  return true;
}

MappingState mapping_gate(MapGraph& g, const VoEstimate& vo) {
  const MappingState next = vo.valid ? MappingState::Active : MappingState::Paused;
  if (next != g.state) {
    g.events.push_back({vo.timestamp, g.state, next});
    g.state = next;
  }
  return g.state;
}

Pose6d rigid_align(const std::vector<std::pair<Vec3d, Vec3d>>& pairs) {
  if (pairs.size() < 3) throw Error(ErrorCode::DegenerateConfiguration, "rigid alignment needs >= 3 pairs");
  Vec3d ca = Vec3d::Zero(), cb = Vec3d::Zero();
  for (const auto& [a, b] : pairs) {
    ca += a;
    cb += b;
  }
  ca /= static_cast<double>(pairs.size());
  cb /= static_cast<double>(pairs.size());
  Mat3d cross = Mat3d::Zero(), scatter = Mat3d::Zero();
  for (const auto& [a, b] : pairs) {
    cross += (a - ca) * (b - cb).transpose();
    scatter += (a - ca) * (a - ca).transpose();
  }
  const Vec3d spread = Eigen::JacobiSVD<Mat3d>(scatter).singularValues();
  if (!(spread[0] > 1e-18) || spread[1] < 1e-10 * spread[0]) {
    throw Error(ErrorCode::DegenerateConfiguration, "points are coincident or collinear");
  }
  const Eigen::JacobiSVD<Mat3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3d u = svd.matrixU(), v = svd.matrixV();
  Mat3d d = Mat3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat3d r = v * d * u.transpose();
  return {cb - r * ca, Quatd::from_matrix(r)};
}

std::optional<GraphEdge> detect_loop_closure(const MapGraph& g, const Keyframe& query, const LoopClosureConfig& cfg) {
  std::size_t preceding = g.keyframes.size();
  for (std::size_t i = 0; i < g.keyframes.size(); ++i) {
    if (g.keyframes[i].id == query.id) {
      preceding = i;
      break;
    }
  }
  if (preceding <= static_cast<std::size_t>(cfg.exclude_recent)) return std::nullopt;
  const std::size_t limit = preceding - static_cast<std::size_t>(cfg.exclude_recent);
  const Keyframe* best = nullptr;
  double best_sim = -1.0;
  for (std::size_t i = 0; i < limit; ++i) {
    const double s = jaccard(g.keyframes[i].signature, query.signature);
    if (s > best_sim) {
      best_sim = s;
      best = &g.keyframes[i];
    }
  }
  if (!best || best_sim < cfg.tau_sim) return std::nullopt;

  const std::vector<int> shared = common_ids(best->signature, query.signature);
  if (static_cast<int>(shared.size()) < cfg.min_common) {
    throw Error(ErrorCode::InsufficientCorrespondences,
                "loop candidate shares only " + std::to_string(shared.size()) + " landmarks");
  }
  std::unordered_map<int, Vec3d> in_best, in_query;
  for (const BodyObservation& o : best->observations) in_best.emplace(o.landmark_id, o.position);
  for (const BodyObservation& o : query.observations) in_query.emplace(o.landmark_id, o.position);
  std::vector<std::pair<Vec3d, Vec3d>> pairs;
  for (int id : shared) pairs.emplace_back(in_query.at(id), in_best.at(id));
  // Maps query body points into the candidate's body frame.
  const Pose6d rel = rigid_align(pairs);
  return GraphEdge{best->id, query.id, EdgeKind::LoopClosure, rel,
                   diag_information(cfg.sigma_translation, cfg.sigma_rotation)};
}

namespace {

Vector6d edge_residual(const GraphEdge& e, const Pose6d& ti, const Pose6d& tj) {
  return pose_log(pose_between(e.relative, pose_between(ti, tj)));
}

Pose6d perturb(const Pose6d& t, const Vector6d& delta) { return pose_compose(t, pose_exp(delta)); }

struct GraphIndex {
  std::unordered_map<int, std::size_t> of;
  explicit GraphIndex(const MapGraph& g) {
    for (std::size_t i = 0; i < g.keyframes.size(); ++i) of.emplace(g.keyframes[i].id, i);
  }
  std::size_t at(int id) const {
    const auto it = of.find(id);
    if (it == of.end()) throw Error(ErrorCode::DisconnectedGraph, "edge references unknown keyframe " + std::to_string(id));
    return it->second;
  }
};

double cost_of(const MapGraph& g, const std::vector<Pose6d>& poses, const GraphIndex& idx) {
  double c = 0.0;
  for (const GraphEdge& e : g.edges) {
    const Vector6d r = edge_residual(e, poses[idx.at(e.from)], poses[idx.at(e.to)]);
    c += r.dot(e.information * r);
  }
  return c;
}

void check_connected(const MapGraph& g, const GraphIndex& idx) {
  const std::size_t n = g.keyframes.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (const GraphEdge& e : g.edges) {
    const std::size_t a = idx.at(e.from), b = idx.at(e.to);
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        q.push(v);
      }
    }
  }
  if (reached != n) {
    throw Error(ErrorCode::DisconnectedGraph,
                std::to_string(n - reached) + " keyframes are not connected to keyframe " +
                    std::to_string(g.keyframes[0].id));
  }
}

}  // namespace

double pose_graph_cost(const MapGraph& g) {
  const GraphIndex idx(g);
  std::vector<Pose6d> poses;
  for (const Keyframe& k : g.keyframes) poses.push_back(k.pose);
  return cost_of(g, poses, idx);
}

void rebuild_landmarks(MapGraph& g) {
  g.landmarks.clear();
  for (const Keyframe& k : g.keyframes) {
    for (const BodyObservation& o : k.observations) add_projection(g, k.pose, o);
  }
}

OptimizationResult optimize_pose_graph(const MapGraph& g, const OptimizerConfig& cfg) {
  OptimizationResult res;
  res.graph = g;
  if (g.keyframes.size() <= 1 && g.edges.empty()) return res;
  const GraphIndex idx(g);
  check_connected(g, idx);

  const std::size_t n = g.keyframes.size();
  const auto dim = static_cast<Eigen::Index>(6 * (n - 1));
  std::vector<Pose6d> poses;
  for (const Keyframe& k : g.keyframes) poses.push_back(k.pose);
  double cost = cost_of(g, poses, idx);
  res.initial_cost = cost;
  res.accepted_costs.push_back(cost);

  constexpr double h = 1e-6;
  double mu = -1.0;
  for (int iter = 0; iter < cfg.max_iterations && cost > 0.0; ++iter) {
    res.iterations = iter + 1;
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    for (const GraphEdge& e : g.edges) {
      const std::size_t i = idx.at(e.from), j = idx.at(e.to);
      const Vector6d r = edge_residual(e, poses[i], poses[j]);
      Matrix6d ji, jj;
      for (int k = 0; k < 6; ++k) {
        Vector6d d = Vector6d::Zero();
        d[k] = h;
        ji.col(k) = (edge_residual(e, perturb(poses[i], d), poses[j]) -
                     edge_residual(e, perturb(poses[i], -d), poses[j])) / (2 * h);
        jj.col(k) = (edge_residual(e, poses[i], perturb(poses[j], d)) -
                     edge_residual(e, poses[i], perturb(poses[j], -d))) / (2 * h);
      }
      // Keyframe at index 0 is the gauge and carries no variables.
      const std::array<std::pair<std::size_t, const Matrix6d*>, 2> blocks{{{i, &ji}, {j, &jj}}};
      for (const auto& [a, ja] : blocks) {
        if (a == 0) continue;
        const auto ra = static_cast<Eigen::Index>(6 * (a - 1));
        b.segment<6>(ra) += ja->transpose() * e.information * r;
        for (const auto& [c, jc] : blocks) {
          if (c == 0) continue;
          const auto rc = static_cast<Eigen::Index>(6 * (c - 1));
          const Matrix6d blk = ja->transpose() * e.information * (*jc);
          for (int p = 0; p < 6; ++p)
            for (int q = 0; q < 6; ++q) triplets.emplace_back(ra + p, rc + q, blk(p, q));
        }
      }
    }
    Eigen::SparseMatrix<double> hess(dim, dim);
    hess.setFromTriplets(triplets.begin(), triplets.end());
    if (mu < 0.0) mu = cfg.initial_damping * std::max(1.0, Eigen::VectorXd(hess.diagonal()).maxCoeff());

    bool accepted = false;
    while (!accepted && mu < 1e20) {
      Eigen::SparseMatrix<double> damped = hess;
      for (Eigen::Index k = 0; k < dim; ++k) damped.coeffRef(k, k) += mu;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
      if (solver.info() != Eigen::Success) {
        mu *= 10.0;
        continue;
      }
      const Eigen::VectorXd delta = solver.solve(-b);
      std::vector<Pose6d> trial = poses;
      for (std::size_t a = 1; a < n; ++a) {
        trial[a] = perturb(poses[a], delta.segment<6>(static_cast<Eigen::Index>(6 * (a - 1))));
      }
      const double trial_cost = cost_of(g, trial, idx);
      if (trial_cost < cost) {
        accepted = true;
        const double decrease = (cost - trial_cost) / cost;
        poses = std::move(trial);
        cost = trial_cost;
        res.accepted_costs.push_back(cost);
        mu = std::max(mu / 3.0, 1e-12);
        if (decrease < cfg.relative_tolerance) iter = cfg.max_iterations;
      } else {
        mu *= 10.0;
      }
    }
    if (!accepted) break;
  }
  for (std::size_t a = 0; a < n; ++a) res.graph.keyframes[a].pose = poses[a];
  rebuild_landmarks(res.graph);
  res.final_cost = cost;
  return res;
}

LocalizationResult localize(const MapGraph& g, const std::vector<BodyObservation>& obs,
                            const LocalizationConfig& cfg) {
  const std::vector<int> sig = signature_of(obs);
  const Keyframe* best = nullptr;
  double best_sim = -1.0;
  for (const Keyframe& k : g.keyframes) {
    const double s = jaccard(k.signature, sig);
    if (s > best_sim) {
      best_sim = s;
      best = &k;
    }
  }
  if (!best || best_sim < cfg.tau_loc) {
    throw Error(ErrorCode::LocalizationFailed,
                "best signature similarity " + std::to_string(std::max(best_sim, 0.0)) + " below threshold");
  }
  std::vector<std::pair<Vec3d, Vec3d>> pairs;
  for (const BodyObservation& o : obs) {
    const auto it = g.landmarks.find(o.landmark_id);
    if (it != g.landmarks.end()) pairs.emplace_back(o.position, it->second.position);
  }
  if (static_cast<int>(pairs.size()) < cfg.min_common) {
    throw Error(ErrorCode::LocalizationFailed, "only " + std::to_string(pairs.size()) + " known landmarks observed");
  }
  try {
    return {rigid_align(pairs), best->id, best_sim, static_cast<int>(pairs.size())};
  } catch (const Error& e) {
    throw Error(ErrorCode::LocalizationFailed, e.what());
  }
}

OccupancyGrid::OccupancyGrid(double res, double ox, double oy, int c, int r, Cell fill)
    : resolution(res), origin_x(ox), origin_y(oy), cols(c), rows(r),
      cells(static_cast<std::size_t>(c) * static_cast<std::size_t>(r), fill) {
  if (!(res > 0.0)) throw Error(ErrorCode::ConfigInvalid, "occupancy resolution must be positive");
}

std::pair<int, int> OccupancyGrid::cell_of(double x, double y) const {
  return {static_cast<int>(std::floor((x - origin_x) / resolution)),
          static_cast<int>(std::floor((y - origin_y) / resolution))};
}

Eigen::Vector2d OccupancyGrid::center(int cx, int cy) const {
  return {origin_x + (cx + 0.5) * resolution, origin_y + (cy + 0.5) * resolution};
}

std::size_t OccupancyGrid::count(Cell c) const { return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), c)); }

OccupancyGrid project_occupancy(const MapGraph& g, const OccupancyConfig& cfg) {
  std::vector<Vec3d> band;
  for (const auto& [id, lm] : g.landmarks) {
    if (lm.position.z() >= cfg.z_min && lm.position.z() <= cfg.z_max) band.push_back(lm.position);
  }
  for (const Vec3d& p : g.points) {
    if (p.z() >= cfg.z_min && p.z() <= cfg.z_max) band.push_back(p);
  }

  Eigen::Vector2d origin, extent;
  Eigen::Vector2i size;
  if (cfg.origin && cfg.size) {
    origin = *cfg.origin;
    size = *cfg.size;
  } else {
    Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (const Vec3d& p : band) {
      lo = lo.cwiseMin(p.head<2>());
      hi = hi.cwiseMax(p.head<2>());
    }
    for (const Keyframe& k : g.keyframes) {
      lo = lo.cwiseMin(k.pose.position.head<2>() - Eigen::Vector2d::Constant(cfg.sensing_radius));
      hi = hi.cwiseMax(k.pose.position.head<2>() + Eigen::Vector2d::Constant(cfg.sensing_radius));
    }
    if (!(lo.array() <= hi.array()).all()) {
      lo.setZero();
      hi.setZero();
    }
    origin = (lo / cfg.resolution).array().floor() * cfg.resolution;
    size = (((hi - origin) / cfg.resolution).array().floor() + 1.0).cast<int>();
  }
  OccupancyGrid grid(cfg.resolution, origin.x(), origin.y(), size.x(), size.y());

  for (const Vec3d& p : band) {
    const auto [cx, cy] = grid.cell_of(p.x(), p.y());
    if (grid.inside(cx, cy)) grid.at(cx, cy) = Cell::Occupied;
  }
  const int reach = static_cast<int>(std::ceil(cfg.sensing_radius / cfg.resolution)) + 1;
  const double r2 = cfg.sensing_radius * cfg.sensing_radius;
  for (const Keyframe& k : g.keyframes) {
    const Eigen::Vector2d c = k.pose.position.head<2>();
    const auto [kx, ky] = grid.cell_of(c.x(), c.y());
    for (int y = ky - reach; y <= ky + reach; ++y) {
      for (int x = kx - reach; x <= kx + reach; ++x) {
        if (!grid.inside(x, y) || grid.at(x, y) != Cell::Unknown) continue;
        if ((grid.center(x, y) - c).squaredNorm() <= r2) grid.at(x, y) = Cell::Free;
      }
    }
  }
  return grid;
}

double occupied_iou(const OccupancyGrid& a, const OccupancyGrid& b) {
  if (a.cols != b.cols || a.rows != b.rows) throw Error(ErrorCode::ConfigInvalid, "grids differ in shape");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const bool oa = a.cells[i] == Cell::Occupied, ob = b.cells[i] == Cell::Occupied;
    inter += oa && ob;
    uni += oa || ob;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace coopsar
