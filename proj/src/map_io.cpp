#include <coopsar/error.hpp>
#include <coopsar/mapgraph.hpp>

#include <json.hpp>

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace coopsar {

namespace {

constexpr const char* kMagic = "COOPSAR_MAP";
constexpr int kVersion = 1;

void put_pose(std::ostream& out, const Pose6d& p) {
  const Quatd& q = p.orientation;
  out << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z() << ' ' << q.w() << ' ' << q.x() << ' '
      << q.y() << ' ' << q.z();
}

void put_vec(std::ostream& out, const Vec3d& v) { out << v.x() << ' ' << v.y() << ' ' << v.z(); }

class LineReader {
 public:
  LineReader(std::istringstream& in, std::size_t line) : in_(in), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_) + ": " + what);
  }
  double number() {
    double v = 0.0;
    if (!(in_ >> v)) fail("expected a number");
    return v;
  }
  int integer() {
    long long v = 0;
    if (!(in_ >> v)) fail("expected an integer");
    return static_cast<int>(v);
  }
  std::string word() {
    std::string s;
    if (!(in_ >> s)) fail("unexpected end of record");
    return s;
  }
  Vec3d vec() {
    const double x = number(), y = number(), z = number();
    return {x, y, z};
  }
  Pose6d pose() {
    const Vec3d p = vec();
    const double w = number(), x = number(), y = number(), z = number();
    if (!(std::abs(std::sqrt(w * w + x * x + y * y + z * z) - 1.0) < 1e-6)) fail("quaternion is not unit norm");
    return {p, Quatd(w, x, y, z)};
  }
  bool done() {
    std::string rest;
    return !(in_ >> rest);
  }
  void finish() {
    if (!done()) fail("trailing tokens");
  }

 private:
  std::istringstream& in_;
  std::size_t line_;
};

}  // namespace

void write_map_graph(std::ostream& out, const MapGraph& g) {
  out << kMagic << ' ' << kVersion << '\n' << std::setprecision(17);
  for (const Keyframe& k : g.keyframes) {
    out << "KF " << k.id << ' ' << k.timestamp << ' ';
    put_pose(out, k.pose);
    out << " |";
    for (int id : k.signature) out << ' ' << id;
    out << '\n';
    for (const BodyObservation& o : k.observations) {
      out << "OBS " << k.id << ' ' << o.landmark_id << ' ';
      put_vec(out, o.position);
      out << '\n';
    }
  }
  for (const GraphEdge& e : g.edges) {
    out << "EDGE " << e.from << ' ' << e.to << ' ' << (e.kind == EdgeKind::Odometry ? "odometry" : "loop") << ' ';
    put_pose(out, e.relative);
    for (int i = 0; i < 6; ++i) out << ' ' << e.information(i, i);
    out << '\n';
  }
  for (const auto& [id, lm] : g.landmarks) {
    out << "LM " << id << ' ';
    put_vec(out, lm.position);
    out << '\n';
  }
  for (const Vec3d& p : g.points) {
    out << "PT ";
    put_vec(out, p);
    out << '\n';
  }
  for (const VictimMark& m : g.victims) {
    out << "VICTIM " << m.id << ' ' << to_string(m.source) << ' ';
    put_vec(out, m.anchor);
    out << ' ';
    put_vec(out, m.direction);
    out << ' ';
    put_vec(out, m.estimate);
    out << '\n';
  }
}

MapGraph read_map_graph(std::istream& in) {
  MapGraph g;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  std::map<int, std::size_t> kf_index;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ls(line);
    LineReader r(ls, line_no);
    const std::string tag = r.word();
    if (!header) {
      if (tag != kMagic) r.fail("missing " + std::string(kMagic) + " header");
      if (r.integer() != kVersion) r.fail("unsupported version");
      r.finish();
      header = true;
      continue;
    }
    if (tag == "KF") {
      Keyframe k;
      k.id = r.integer();
      k.timestamp = r.number();
      k.pose = r.pose();
      if (r.word() != "|") r.fail("expected '|' before signature");
      int id = 0;
      while (ls >> id) k.signature.push_back(id);
      if (!ls.eof()) r.fail("signature contains a non-integer");
      if (!std::is_sorted(k.signature.begin(), k.signature.end())) std::sort(k.signature.begin(), k.signature.end());
      if (!kf_index.emplace(k.id, g.keyframes.size()).second) r.fail("duplicate keyframe id");
      g.keyframes.push_back(std::move(k));
    } else if (tag == "OBS") {
      const int kf = r.integer();
      const int lm = r.integer();
      const Vec3d p = r.vec();
      r.finish();
      const auto it = kf_index.find(kf);
      if (it == kf_index.end()) r.fail("observation for unknown keyframe " + std::to_string(kf));
      g.keyframes[it->second].observations.push_back({lm, p});
    } else if (tag == "EDGE") {
      GraphEdge e;
      e.from = r.integer();
      e.to = r.integer();
      const std::string kind = r.word();
      if (kind == "odometry") {
        e.kind = EdgeKind::Odometry;
      } else if (kind == "loop") {
        e.kind = EdgeKind::LoopClosure;
      } else {
        r.fail("unknown edge kind '" + kind + "'");
      }
      e.relative = r.pose();
      if (e.from == e.to) r.fail("edge endpoints must differ");
      for (int i = 0; i < 6; ++i) {
        const double w = r.number();
        if (!(w > 0.0)) r.fail("edge information must be positive");
        e.information(i, i) = w;
      }
      r.finish();
      g.edges.push_back(e);
    } else if (tag == "LM") {
      const int id = r.integer();
      const Vec3d p = r.vec();
      r.finish();
      g.landmarks[id] = {p, 1};
    } else if (tag == "PT") {
      g.points.push_back(r.vec());
      r.finish();
    } else if (tag == "VICTIM") {
      VictimMark m;
      m.id = r.integer();
      const std::string src = r.word();
      if (src == "manual") {
        m.source = MarkSource::Manual;
      } else if (src == "automatic") {
        m.source = MarkSource::Automatic;
      } else {
        r.fail("unknown victim source '" + src + "'");
      }
      m.anchor = r.vec();
      m.direction = r.vec();
      m.estimate = r.vec();
      r.finish();
      m.range = (m.estimate - m.anchor).norm();
      g.victims.push_back(m);
    } else {
      r.fail("unknown record '" + tag + "'");
    }
  }
  for (const GraphEdge& e : g.edges) {
    if (!kf_index.count(e.from) || !kf_index.count(e.to)) {
      throw Error(ErrorCode::ParseError, "edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                                             " references a missing keyframe");
    }
  }
  for (const Keyframe& k : g.keyframes) {
    if (!k.observations.empty() && signature_of(k.observations) != k.signature) {
      throw Error(ErrorCode::ParseError, "keyframe " + std::to_string(k.id) + " signature disagrees with its OBS records");
    }
  }
  return g;
}

namespace {

unsigned char gray(Cell c) {
  switch (c) {
    case Cell::Occupied:
      return 0;
    case Cell::Free:
      return 254;
    case Cell::Unknown:
      break;
  }
  return 127;
}

}  // namespace

void write_pgm(std::ostream& out, const OccupancyGrid& grid) {
  out << "P5\n" << grid.cols << ' ' << grid.rows << "\n255\n";
  for (int y = grid.rows - 1; y >= 0; --y) {
    for (int x = 0; x < grid.cols; ++x) out.put(static_cast<char>(gray(grid.at(x, y))));
  }
}

void write_grid_metadata(std::ostream& out, const OccupancyGrid& grid) {
  nlohmann::ordered_json j;
  j["image"] = "occupancy.pgm";
  j["resolution"] = grid.resolution;
  j["origin"] = {grid.origin_x, grid.origin_y};
  j["width"] = grid.cols;
  j["height"] = grid.rows;
  j["occupied_value"] = 0;
  j["free_value"] = 254;
  j["unknown_value"] = 127;
  j["row_order"] = "top row is max y";
  out << j.dump(2) << '\n';
}

OccupancyGrid read_pgm(std::istream& in, double resolution, double origin_x, double origin_y) {
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw Error(ErrorCode::ParseError, "not a P2/P5 graymap");
  const auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string dummy;
      std::getline(in, dummy);
      in >> std::ws;
    }
  };
  int cols = 0, rows = 0, maxval = 0;
  skip_comments();
  in >> cols;
  skip_comments();
  in >> rows;
  skip_comments();
  in >> maxval;
  if (!in || cols < 0 || rows < 0 || maxval != 255) throw Error(ErrorCode::ParseError, "bad graymap header");
  in.get();
  OccupancyGrid grid(resolution, origin_x, origin_y, cols, rows);
  for (int y = rows - 1; y >= 0; --y) {
    for (int x = 0; x < cols; ++x) {
      int v = 0;
      if (magic == "P5") {
        v = in.get();
      } else {
        in >> v;
      }
      if (!in) throw Error(ErrorCode::ParseError, "graymap truncated");
      grid.at(x, y) = v == 0 ? Cell::Occupied : v == 254 ? Cell::Free : Cell::Unknown;
    }
  }
  return grid;
}

}  // namespace coopsar
