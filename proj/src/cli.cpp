#include <coopsar/attitude.hpp>
#include <coopsar/cli.hpp>
#include <coopsar/error.hpp>
#include <coopsar/mission.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

namespace coopsar {
namespace fs = std::filesystem;

namespace {

MissionConfig manifest_config(const RunManifest& m) {
  MissionConfig c = m.config ? load_mission_config(*m.config) : MissionConfig{};
  if (m.seed) c.seed = *m.seed;
  c.validate();
  return c;
}

// Creates the directory and writes each file; false (with a diagnostic) on
// the first failure.
bool write_outputs(const fs::path& dir,
                   const std::vector<std::pair<std::string, std::function<void(std::ostream&)>>>& files,
                   std::ostream& err) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    err << "error: cannot create output directory " << dir.string() << ": " << ec.message() << '\n';
    return false;
  }
  for (const auto& [name, write] : files) {
    std::ofstream f(dir / name, std::ios::binary);
    if (f) write(f);
    if (!f) {
      err << "error: cannot write " << (dir / name).string() << '\n';
      return false;
    }
  }
  return true;
}

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace

fs::path resolve_output_dir(const RunManifest& m) {
  if (m.out.is_absolute()) return m.out;
  const char* root = std::getenv(kOutputRootEnv);
  if (root != nullptr && *root != '\0') return fs::path(root) / m.out;
  return m.out;
}

int cmd_mission(const RunManifest& m, std::ostream& log, std::ostream& err) {
  MissionOutputs out;
  try {
    const MissionConfig c = manifest_config(m);
    if (m.validate_only) {
      prepare_world(c);
      log << "config ok\n";
      return 0;
    }
    out = run_mission(c);
  } catch (const Error& e) {
    err << "error: " << e.detail() << '\n';
    return 1;
  }

  const MissionReport& r = out.report;
  const bool written = write_outputs(
      resolve_output_dir(m),
      {{"report.txt", [&](std::ostream& f) { write_report(f, r); }},
       {"metrics.csv", [&](std::ostream& f) { write_metrics_csv(f, r); }},
       {"map.graph", [&](std::ostream& f) { write_map_graph(f, out.map); }},
       {"occupancy.pgm", [&](std::ostream& f) { write_pgm(f, out.occupancy); }},
       {"occupancy.json", [&](std::ostream& f) { write_grid_metadata(f, out.occupancy); }},
       {"events.csv", [&](std::ostream& f) { write_events_csv(f, out.events); }}},
      err);
  if (!written) return 1;

  log << (r.success ? "mission succeeded" : "mission failed") << std::fixed << std::setprecision(3)
      << ": iou " << r.iou << ", victims " << r.victims_matched << '/' << r.victims_truth << ", time "
      << r.total_time << " s\n";
  if (!r.success && !r.failure_phase.empty()) log << "failure in " << r.failure_phase << ": " << r.failure_reason << '\n';
  for (const std::string& v : r.budget_violations) log << "budget violation: " << v << '\n';
  return r.success ? 0 : 2;
}

int cmd_replay_imu(const RunManifest& m, const fs::path& csv, std::ostream& log, std::ostream& err) {
  ImuLog imu;
  try {
    if (m.config) manifest_config(m);
    std::ifstream in(csv);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open " + csv.string());
    imu = read_imu_csv(in);
  } catch (const Error& e) {
    err << "error: " << csv.string() << ": " << e.detail() << '\n';
    return 1;
  }
  if (!imu.has_mag) err << "warning: no magnetometer columns; yaw will drift\n";
  if (m.validate_only) {
    log << imu.samples.size() << " samples ok\n";
    return 0;
  }

  const std::vector<AttitudeEstimate> est = run_attitude_filter(imu.samples);
  const bool written = write_outputs(resolve_output_dir(m),
                                     {{"attitude.csv",
                                       [&](std::ostream& f) {
                                         f << "t,qw,qx,qy,qz,roll,pitch,yaw\n";
                                         char buf[256];
                                         for (const AttitudeEstimate& a : est) {
                                           const EulerRpyd e = quat_to_euler(a.q);
                                           std::snprintf(buf, sizeof buf, "%.6f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n",
                                                         a.timestamp, a.q.w(), a.q.x(), a.q.y(), a.q.z(), e.roll,
                                                         e.pitch, e.yaw);
                                           f << buf;
                                         }
                                       }}},
                                     err);
  if (!written) return 1;

  log << est.size() << " attitude estimates\n";
  if (!imu.truth.empty() && !est.empty()) {
    const EulerRpyd e = quat_to_euler(est.back().q), t = imu.truth.back();
    char buf[160];
    std::snprintf(buf, sizeof buf, "final error deg: roll %.4f pitch %.4f yaw %.4f\n",
                  deg(std::abs(wrap_angle(e.roll - t.roll))), deg(std::abs(wrap_angle(e.pitch - t.pitch))),
                  deg(std::abs(wrap_angle(e.yaw - t.yaw))));
    log << buf;
  }
  return 0;
}

int cmd_export_map(const RunManifest& m, const fs::path& graph, std::ostream& log, std::ostream& err) {
  MapGraph g;
  OccupancyConfig occ;
  try {
    if (m.config) occ = manifest_config(m).occupancy;
    std::ifstream in(graph);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open " + graph.string());
    g = read_map_graph(in);
  } catch (const Error& e) {
    err << "error: " << graph.string() << ": " << e.detail() << '\n';
    return 1;
  }
  if (m.validate_only) {
    log << g.keyframes.size() << " keyframes, " << g.landmarks.size() << " landmarks ok\n";
    return 0;
  }

  const bool empty = g.keyframes.empty() && g.points.empty() && g.landmarks.empty();
  const OccupancyGrid grid = empty ? OccupancyGrid{} : project_occupancy(g, occ);
  const bool written = write_outputs(resolve_output_dir(m),
                                     {{"map.pgm", [&](std::ostream& f) { write_pgm(f, grid); }},
                                      {"map.json", [&](std::ostream& f) { write_grid_metadata(f, grid); }},
                                      {"landmarks.txt",
                                       [&](std::ostream& f) {
                                         char buf[128];
                                         for (const auto& [id, lm] : g.landmarks) {
                                           std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f\n", lm.position.x(),
                                                         lm.position.y(), lm.position.z());
                                           f << buf;
                                         }
                                       }}},
                                     err);
  if (!written) return 1;
  log << "exported " << grid.cols << 'x' << grid.rows << " grid, " << g.landmarks.size() << " landmarks\n";
  return 0;
}

}  // namespace coopsar
